"""Submission checks and whole-challenge evaluation from files on disk."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .manifest import ChallengeManifest
from .ranking import Record, ResultsTable
from .seg_metrics import evaluate_case
from .volume import (
    GridMismatchError,
    NiftiError,
    SchemeError,
    _same_grid,
    read_label_volume,
    validate_labels,
)


@dataclass(frozen=True)
class Issue:
    kind: str  # missing | extra | unreadable | grid-mismatch | bad-labels
    case: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}: {self.case}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class ValidationReport:
    submission_dir: Path
    issues: list[Issue] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.issues

    def to_dict(self) -> dict:
        return {
            "submission_dir": str(self.submission_dir),
            "valid": self.valid,
            "issues": [{"kind": i.kind, "case": i.case, "detail": i.detail} for i in self.issues],
        }


def validate_submission(submission_dir: str | Path, manifest: ChallengeManifest) -> ValidationReport:
    """Check that a submission has exactly one readable, on-grid file per case."""
    sub = Path(submission_dir)
    report = ValidationReport(sub)
    expected = {manifest.prediction_filename(c): c for c in manifest.cases}
    present = {p.name for p in sub.iterdir() if p.is_file()} if sub.is_dir() else set()

    for name, case in expected.items():
        if name not in present:
            report.issues.append(Issue("missing", case))
            continue
        try:
            pred = read_label_volume(sub / name)
        except (OSError, NiftiError, ValueError) as exc:
            report.issues.append(Issue("unreadable", case, str(exc)))
            continue
        try:
            validate_labels(pred, manifest)
        except SchemeError as exc:
            report.issues.append(Issue("bad-labels", case, str(exc)))
        gt_path = manifest.ground_truth_path(case)
        if gt_path.exists():
            gt = read_label_volume(gt_path)
            problem = _same_grid(pred.dims, pred.spacing, gt.dims, gt.spacing)
            if problem:
                report.issues.append(Issue("grid-mismatch", case, problem))
    for name in sorted(present - set(expected)):
        report.issues.append(Issue("extra", name))
    return report


def _evaluate_one_case(manifest: ChallengeManifest, case: str) -> list[Record]:
    gt = read_label_volume(manifest.ground_truth_path(case))
    out = []
    for team in manifest.teams:
        pred = read_label_volume(manifest.prediction_path(team, case))
        try:
            values = evaluate_case(pred, gt, manifest)
        except GridMismatchError as exc:
            raise GridMismatchError(f"case {case}, team {team}: {exc}") from exc
        out.extend(
            Record(case, team, v.structure, v.metric, v.value, v.ranked, v.penalized, v.degenerate)
            for v in values
        )
    return out


def evaluate_challenge(manifest: ChallengeManifest, n_jobs: int = 1) -> ResultsTable:
    """Every (case, team, structure, metric) value, auxiliary ones included.

    Cases are independent and evaluated on ``n_jobs`` threads; the record
    order is always case-major in manifest order.
    """
    if n_jobs <= 1:
        per_case = [_evaluate_one_case(manifest, c) for c in manifest.cases]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_case = list(pool.map(lambda c: _evaluate_one_case(manifest, c), manifest.cases))
    records = [r for recs in per_case for r in recs]
    return ResultsTable(records, manifest.directions, cases=manifest.cases, teams=manifest.teams)
