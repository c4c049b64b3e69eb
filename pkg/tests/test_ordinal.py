import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from challenge_eval.ordinal import (
    OrdinalPredictionSet,
    confusion_matrix,
    ma_mae,
    pair_grades,
    read_grades_csv,
)

grades = st.integers(1, 4)
pairs = st.lists(st.tuples(grades, grades), min_size=1, max_size=40)


def S(truths, preds):
    return OrdinalPredictionSet.from_lists(truths, preds)


def test_perfect_is_zero():
    assert ma_mae(S([1, 2, 3, 4, 4], [1, 2, 3, 4, 4])) == 0.0


def test_off_by_one_is_one():
    assert ma_mae(S([1, 2, 3, 4, 2], [2, 1, 4, 3, 3])) == 1.0


def test_worked_example():
    # class 1: 0; class 2: (1 + 0) / 2; class 4: 1 -> (0 + 0.5 + 1) / 3
    assert ma_mae(S([1, 2, 2, 4], [1, 3, 2, 3])) == 0.5


def test_fixed_class_count_divides_by_domain():
    assert ma_mae(S([1, 2, 2, 4], [1, 3, 2, 3]), fixed_class_count=True) == 1.5 / 4


def test_empty_rejected():
    with pytest.raises(ValueError):
        ma_mae(OrdinalPredictionSet(()))


def test_out_of_domain_rejected():
    with pytest.raises(ValueError):
        S([1, 5], [1, 1])


def test_minority_class_weighted_up():
    # one wrong grade-4 case weighs as much as all grade-1 cases together
    truths = [1] * 9 + [4]
    preds = [1] * 9 + [3]
    assert ma_mae(S(truths, preds)) == 0.5


@settings(max_examples=100, deadline=None)
@given(pairs, st.integers(2, 4))
def test_properties(items, k):
    t, p = zip(*items)
    base = ma_mae(S(t, p))
    assert 0.0 <= base <= 3.0
    assert (base == 0.0) == all(a == b for a, b in items)
    assert ma_mae(S(t * k, p * k)) == pytest.approx(base, abs=1e-12)


def test_confusion_perfect():
    m = confusion_matrix(S([1, 2, 4], [1, 2, 4]))
    assert np.array_equal(m, np.diag([1, 1, 0, 1]))


def test_confusion_normalized_row():
    m = confusion_matrix(S([1, 1], [2, 2]), normalized=True)
    assert m[0].tolist() == [0.0, 1.0, 0.0, 0.0]
    assert m[1:].sum() == 0.0


@settings(max_examples=50, deadline=None)
@given(pairs)
def test_confusion_row_sums_are_class_counts(items):
    t, p = zip(*items)
    m = confusion_matrix(S(t, p))
    assert m.sum(axis=1).tolist() == [t.count(g) for g in (1, 2, 3, 4)]
    norm = confusion_matrix(S(t, p), normalized=True)
    for g, row in zip((1, 2, 3, 4), norm):
        assert row.sum() == pytest.approx(1.0 if g in t else 0.0)


def test_csv_ingest(tmp_path):
    (tmp_path / "t.csv").write_text("case_id,grade\na,1\nb,2\nc,2\nd,4\n")
    (tmp_path / "p.csv").write_text("a,1\nb,3\nc,2\nd,3\n")
    s = pair_grades(read_grades_csv(tmp_path / "t.csv"), read_grades_csv(tmp_path / "p.csv"))
    assert ma_mae(s) == 0.5


def test_csv_missing_prediction(tmp_path):
    with pytest.raises(ValueError, match="missing"):
        pair_grades({"a": 1, "b": 2}, {"a": 1})
