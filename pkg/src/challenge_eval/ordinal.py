"""Macro-averaged mean absolute error for ordinal (Koos-style) grades."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KOOS_GRADES = (1, 2, 3, 4)


@dataclass(frozen=True)
class OrdinalPredictionSet:
    items: tuple[tuple[str, int, int], ...]  # (case_id, true_grade, predicted_grade)
    grade_domain: tuple[int, ...] = KOOS_GRADES

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple((str(c), int(t), int(p)) for c, t, p in self.items))
        object.__setattr__(self, "grade_domain", tuple(sorted(set(int(g) for g in self.grade_domain))))
        ids = [c for c, _, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate case ids")
        domain = set(self.grade_domain)
        for case, t, p in self.items:
            if t not in domain or p not in domain:
                raise ValueError(f"case {case}: grades ({t}, {p}) outside domain {self.grade_domain}")

    @classmethod
    def from_lists(cls, truths, preds, grade_domain=KOOS_GRADES) -> OrdinalPredictionSet:
        if len(truths) != len(preds):
            raise ValueError("truths and predictions differ in length")
        items = tuple((f"case_{i:04d}", t, p) for i, (t, p) in enumerate(zip(truths, preds)))
        return cls(items, tuple(grade_domain))

    @property
    def truths(self) -> np.ndarray:
        return np.array([t for _, t, _ in self.items], dtype=np.int64)

    @property
    def preds(self) -> np.ndarray:
        return np.array([p for _, _, p in self.items], dtype=np.int64)


def ma_mae(preds: OrdinalPredictionSet, fixed_class_count: bool = False) -> float:
    """Per-class mean absolute grade error, averaged over classes.

    By default only grades that occur in the truth set count as classes.
    With ``fixed_class_count`` the divisor is the size of the grade domain and
    absent grades contribute zero error.
    """
    if not preds.items:
        raise ValueError("empty prediction set")
    truths, guesses = preds.truths, preds.preds
    per_class = []
    for grade in preds.grade_domain:
        sel = truths == grade
        n_c = int(sel.sum())
        if n_c:
            per_class.append(float(np.abs(truths[sel] - guesses[sel]).sum()) / n_c)
    n_classes = len(preds.grade_domain) if fixed_class_count else len(per_class)
    return sum(per_class) / n_classes


def confusion_matrix(preds: OrdinalPredictionSet, normalized: bool = False) -> np.ndarray:
    """Rows are true grades, columns predicted grades, both over ``grade_domain``."""
    if not preds.items:
        raise ValueError("empty prediction set")
    index = {g: i for i, g in enumerate(preds.grade_domain)}
    k = len(index)
    mat = np.zeros((k, k), dtype=np.float64 if normalized else np.int64)
    for _, t, p in preds.items:
        mat[index[t], index[p]] += 1
    if normalized:
        rows = mat.sum(axis=1, keepdims=True)
        np.divide(mat, rows, out=mat, where=rows > 0)
    return mat


def read_grades_csv(path: str | Path) -> dict[str, int]:
    """Two-column CSV (case_id, grade); a header row is skipped if present."""
    grades: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            case, grade = row[0].strip(), row[1].strip()
            try:
                value = int(grade)
            except ValueError:
                if not grades:
                    continue  # header
                raise ValueError(f"{path}: non-integer grade {grade!r} for {case}") from None
            if case in grades:
                raise ValueError(f"{path}: duplicate case {case}")
            grades[case] = value
    return grades


def pair_grades(
    truth: dict[str, int],
    pred: dict[str, int],
    grade_domain=KOOS_GRADES,
) -> OrdinalPredictionSet:
    missing = sorted(set(truth) - set(pred))
    if missing:
        raise ValueError(f"predictions missing for cases {missing[:5]}{'...' if len(missing) > 5 else ''}")
    extra = sorted(set(pred) - set(truth))
    if extra:
        raise ValueError(f"predictions for unknown cases {extra[:5]}")
    items = tuple((c, truth[c], pred[c]) for c in sorted(truth))
    return OrdinalPredictionSet(items, tuple(grade_domain))
