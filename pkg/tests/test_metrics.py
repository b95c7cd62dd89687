"""Metric oracles: macro F1, interval matching, majority vote, Gwet AC1."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gesturewire import metrics as mx
from gesturewire.errors import DataError
from gesturewire.signal import Segment


def seg(a, b, label="active", rec="r"):
    return Segment(rec, a, b, label)


# ---------------------------------------------------------------------------
# macro F1


def test_macro_f1_perfect_diagonal():
    cm = mx.ConfusionMatrix(["a", "b"], np.diag([4, 6]))
    assert mx.macro_f1(cm) == 1.0


def test_macro_f1_hand_balanced_half():
    cm = mx.ConfusionMatrix(["a", "b"], [[5, 5], [5, 5]])
    assert mx.macro_f1(cm) == pytest.approx(0.5)


def test_macro_f1_hand_single_sided():
    # everything predicted as class a over two balanced classes of 10
    cm = mx.ConfusionMatrix(["a", "b"], [[10, 0], [10, 0]])
    assert mx.macro_f1(cm) == pytest.approx((2 / 3 + 0.0) / 2)


def brute_force_macro_f1(counts):
    n = counts.shape[0]
    f1s = []
    for i in range(n):
        tp = counts[i, i]
        precision = tp / counts[:, i].sum() if counts[:, i].sum() else 0.0
        recall = tp / counts[i, :].sum() if counts[i, :].sum() else 0.0
        f1s.append(
            0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        )
    return sum(f1s) / n


@settings(max_examples=200)
@given(
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=0, max_value=10**9),
)
def test_macro_f1_matches_brute_force(n, seed):
    counts = np.random.default_rng(seed).integers(0, 12, size=(n, n))
    if counts.sum() == 0:
        counts[0, 0] = 1
    cm = mx.ConfusionMatrix([f"c{i}" for i in range(n)], counts)
    assert mx.macro_f1(cm) == pytest.approx(brute_force_macro_f1(counts), abs=1e-12)


def test_confusion_matrix_builder():
    cm = mx.confusion_matrix(["a", "a", "b"], ["a", "b", "b"], ["a", "b"])
    assert cm.counts.tolist() == [[1, 1], [0, 1]]
    assert cm.total == 3


# ---------------------------------------------------------------------------
# interval IoU matching


def test_segment_iou_hand():
    assert mx.segment_iou(seg(10, 20), seg(15, 25)) == pytest.approx(1 / 3)


def test_match_f1_identity():
    s = [seg(0, 10), seg(20, 30)]
    f1, miou = mx.match_f1(s, s)
    assert f1 == 1.0
    assert miou == 1.0


def test_match_f1_hand_half():
    pred = [seg(0, 10), seg(20, 30)]
    gt = [seg(0, 10), seg(40, 50)]
    f1, miou = mx.match_f1(pred, gt, thr=0.5)
    assert f1 == pytest.approx(0.5)
    assert miou == pytest.approx(1.0)


def test_match_f1_threshold_monotone():
    rng = np.random.default_rng(3)
    pred, gt = [], []
    for i in range(8):
        a = int(rng.integers(0, 1000))
        pred.append(seg(a, a + int(rng.integers(5, 50))))
        b = a + int(rng.integers(-10, 10))
        gt.append(seg(min(b, a - 1) if b == a else b, max(b, a) + int(rng.integers(5, 50))))
    last = None
    for thr in (0.9, 0.7, 0.5, 0.3, 0.0):
        f1, _ = mx.match_f1(pred, gt, thr=thr)
        if last is not None:
            assert f1 >= last - 1e-12
        last = f1


def test_match_f1_zero_threshold_perfect_overlap():
    s = [seg(0, 100), seg(200, 300)]
    f1, miou = mx.match_f1(s, list(s), thr=0.0)
    assert f1 == 1.0
    assert miou == 1.0


# ---------------------------------------------------------------------------
# rating sheets


def sheet_from(rows, predicted=None):
    items = []
    for i, votes in enumerate(rows):
        ratings = {f"r{j}": bool(v) for j, v in enumerate(votes)}
        items.append(mx.RatingItem(f"w{i}", (predicted or ["g"] * len(rows))[i], ratings))
    return mx.RatingSheet(items)


def test_majority_precision_unanimous():
    assert mx.majority_precision(sheet_from([[1, 1], [1, 1, 1]])) == 1.0


def test_majority_precision_counts_majorities():
    s = sheet_from([[1, 1, 1], [1, 1, 0], [1, 1, 1], [0, 0, 1]])
    assert mx.majority_precision(s) == pytest.approx(0.75)


def test_majority_precision_tie_counts_incorrect():
    assert mx.majority_precision(sheet_from([[1, 0]])) == 0.0


def test_majority_precision_skips_idle_predictions():
    s = sheet_from([[1, 1], [0, 0]], predicted=["g", "idle"])
    assert mx.majority_precision(s) == 1.0


def test_majority_precision_never_decreases_with_unanimous_item():
    s = sheet_from([[1, 0, 0], [1, 1, 0]])
    before = mx.majority_precision(s)
    s.items.append(mx.RatingItem("extra", "g", {"r0": True, "r1": True}))
    assert mx.majority_precision(s) >= before


def test_gwet_ac1_unanimous_is_one():
    assert mx.gwet_ac1(sheet_from([[1, 1], [0, 0], [1, 1]])) == pytest.approx(1.0)


def test_gwet_ac1_worked_example():
    # 2 raters, 4 items: three agree-correct, one split
    s = sheet_from([[1, 1], [1, 1], [1, 1], [1, 0]])
    assert mx.gwet_ac1(s) == pytest.approx(0.68)


def test_gwet_ac1_label_swap_invariant():
    rows = [[1, 1, 0], [0, 0, 0], [1, 0, 1], [1, 1, 1]]
    flipped = [[1 - v for v in r] for r in rows]
    assert mx.gwet_ac1(sheet_from(rows)) == pytest.approx(mx.gwet_ac1(sheet_from(flipped)))


def test_gwet_ac1_single_rater_rejected():
    with pytest.raises(DataError):
        mx.gwet_ac1(sheet_from([[1]]))


def hand_ac1(rows):
    """Direct transcription of the AC1 definition, kept separate on purpose."""
    import statistics

    pa_terms, pi_terms = [], []
    for votes in rows:
        r = len(votes)
        rc = sum(votes)
        ri = r - rc
        pa_terms.append((rc * (rc - 1) + ri * (ri - 1)) / (r * (r - 1)))
        pi_terms.append(rc / r)
    p_a = statistics.mean(pa_terms)
    pi = statistics.mean(pi_terms)
    p_e = 2 * pi * (1 - pi)
    return (p_a - p_e) / (1 - p_e)


@settings(max_examples=1000, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_gwet_ac1_matches_hand_formula_on_random_sheets(seed):
    rng = np.random.default_rng(seed)
    n_items = int(rng.integers(1, 12))
    rows = []
    for _ in range(n_items):
        r = int(rng.integers(2, 7))
        rows.append([int(v) for v in rng.integers(0, 2, size=r)])
    # avoid the degenerate all-agree-all-items p_e edge: it is legal input,
    # the hand formula handles it identically
    expected = hand_ac1(rows)
    assert mx.gwet_ac1(sheet_from(rows)) == pytest.approx(expected, abs=1e-9)
