"""Evaluation computations: confusion-matrix F1, interval matching,
majority-vote precision, Gwet's AC1 agreement, and embedding export."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .signal import IDLE_LABEL, Segment


@dataclass
class ConfusionMatrix:
    """Integer counts; rows are true classes, columns predicted."""

    classes: list
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if self.counts.shape != (n, n):
            raise DataError(f"confusion matrix shape {self.counts.shape} != ({n},{n})")

    @property
    def total(self):
        return int(self.counts.sum())

    def to_json(self):
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


def confusion_matrix(true_labels, pred_labels, classes) -> ConfusionMatrix:
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(list(classes), counts)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Arithmetic mean of per-class F1 over all classes.

    A class with no true and no predicted instances contributes 0 to the
    mean rather than being skipped.
    """
    if cm.total < 1:
        raise DataError("macro_f1: empty confusion matrix")
    counts = cm.counts
    f1s = []
    for i in range(len(cm.classes)):
        tp = counts[i, i]
        fp = counts[:, i].sum() - tp
        fn = counts[i, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1s.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(f1s))


# ---------------------------------------------------------------------------
# interval matching


def segment_iou(a: Segment, b: Segment) -> float:
    inter = max(0, min(a.end_ms, b.end_ms) - max(a.start_ms, b.start_ms))
    union = max(a.end_ms, b.end_ms) - min(a.start_ms, b.start_ms)
    return inter / union if union > 0 else 0.0


def match_f1(pred, gt, thr: float = 0.5):
    """Greedy one-to-one interval matching in descending IoU order.

    Pairs with IoU >= thr count as true positives; returns (F1, mean IoU
    over matched pairs). Labels are ignored; callers filter beforehand.
    """
    pairs = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            iou = segment_iou(p, g)
            if iou >= thr:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda x: (-x[0], x[1], x[2]))
    used_p, used_g, matched = set(), set(), []
    for iou, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matched.append(iou)
    tp = len(matched)
    fp = len(pred) - tp
    fn = len(gt) - tp
    denom = 2 * tp + fp + fn
    f1 = 0.0 if denom == 0 else 2 * tp / denom
    mean_iou = float(np.mean(matched)) if matched else 0.0
    return f1, mean_iou


# ---------------------------------------------------------------------------
# human rating sheets


@dataclass(frozen=True)
class RatingItem:
    window_id: str
    predicted: str
    ratings: dict  # rater id -> bool (correct)


@dataclass
class RatingSheet:
    items: list
    raters: list = field(default_factory=list)

    def __post_init__(self):
        if not self.raters:
            seen = []
            for it in self.items:
                for r in it.ratings:
                    if r not in seen:
                        seen.append(r)
            self.raters = seen


def load_rating_sheet(path) -> RatingSheet:
    """JSON: {"participant": id, "items": [{"window_id", "predicted", "ratings"}]}."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    items = [
        RatingItem(str(it["window_id"]), str(it["predicted"]), dict(it["ratings"]))
        for it in obj["items"]
    ]
    return RatingSheet(items)


def majority_precision(sheet: RatingSheet, idle_label: str = IDLE_LABEL) -> float:
    """Fraction of non-idle predictions whose majority rating is correct.

    Exact ties count as incorrect.
    """
    scored = [it for it in sheet.items if it.predicted != idle_label]
    if not scored:
        raise DataError("majority_precision: no rated non-idle predictions")
    correct = 0
    for it in scored:
        votes = list(it.ratings.values())
        if not votes:
            raise DataError(f"item {it.window_id}: no ratings")
        if sum(votes) * 2 > len(votes):
            correct += 1
    return correct / len(scored)


def gwet_ac1(sheet: RatingSheet) -> float:
    """Chance-corrected agreement for binary correct/incorrect ratings.

    p_a averages, per item, the fraction of rater pairs that agree;
    p_e = sum_k pi_k (1 - pi_k) / (K - 1) with pi_k the mean prevalence of
    category k; AC1 = (p_a - p_e) / (1 - p_e).
    """
    if not sheet.items:
        raise DataError("gwet_ac1: empty sheet")
    agree = []
    prevalence = []
    for it in sheet.items:
        votes = list(it.ratings.values())
        r = len(votes)
        if r < 2:
            raise DataError(f"item {it.window_id}: needs >= 2 raters, got {r}")
        r_correct = sum(votes)
        r_incorrect = r - r_correct
        agree.append(
            (r_correct * (r_correct - 1) + r_incorrect * (r_incorrect - 1))
            / (r * (r - 1))
        )
        prevalence.append(r_correct / r)
    p_a = float(np.mean(agree))
    pi = float(np.mean(prevalence))
    p_e = pi * (1 - pi) + (1 - pi) * pi  # K = 2, divided by K-1 = 1
    if p_e >= 1.0:
        raise DataError("gwet_ac1: degenerate chance agreement")
    return (p_a - p_e) / (1 - p_e)


# ---------------------------------------------------------------------------
# embedding export


def export_embeddings(model, windows, path) -> int:
    """Write pooled encoder embeddings, one row per window.

    Columns: window_id, label, e0..e{d-1}. Returns the row count.
    """
    from .model import encode

    d = model.config.d_model
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window_id", "label"] + [f"e{i}" for i in range(d)])
        for i, w in enumerate(windows):
            emb = encode(w, model)
            wid = f"{w.source_recording}:{w.start_index}"
            writer.writerow([wid, w.label or ""] + [repr(float(v)) for v in emb.pooled])
    return len(windows)
