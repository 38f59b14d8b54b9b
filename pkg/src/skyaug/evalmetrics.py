"""Segmentation evaluation: confusion counts, per-image ROC, threshold
selection, precision/recall/F-score.

Cloud pixels are the positive class. A pixel is predicted cloud when its
regression score is >= the threshold. Each test image gets its own threshold,
picked on that image's ground truth (see the report footer emitted by the
formatting helpers: this reuses the ground truth and flatters the metrics).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .pls import PlsModel, images_to_design, maps_to_design, predict, r2_score


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int


def confusion(scores, gt, thr: float) -> ConfusionMatrix:
    """Count pixels with prediction = (score >= thr) against a binary map."""
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    if scores.shape != gt.shape:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs map {gt.shape}")
    pred = scores >= thr
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    tn = int(np.count_nonzero(~pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionMatrix(tp, fp, tn, fn)


@dataclass
class RocCurve:
    points: list  # (threshold, fpr, tpr), thresholds descending from +inf
    auc: float


def roc_curve(scores, gt) -> RocCurve:
    """ROC over all unique score thresholds plus the +/-inf sentinels.

    Points run from (0, 0) at +inf down to (1, 1) at -inf; AUC is the
    trapezoid integral of tpr over fpr.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=bool).reshape(-1)
    if scores.shape != gt.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {gt.shape}")
    pos = int(gt.sum())
    neg = gt.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("ROC undefined: ground truth has a single class")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    hits = gt[order].astype(np.int64)
    cum_tp = np.cumsum(hits)
    cum_fp = np.cumsum(1 - hits)
    # last index of each run of equal scores = counts for threshold s[i]
    last = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    points = [(np.inf, 0.0, 0.0)]
    for i in last:
        points.append((float(s[i]), float(cum_fp[i] / neg), float(cum_tp[i] / pos)))
    points.append((-np.inf, 1.0, 1.0))
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(points=points, auc=auc)


@dataclass
class ThresholdChoice:
    thr: float
    criterion_value: float


def optimal_threshold(roc: RocCurve) -> ThresholdChoice:
    """Threshold maximizing Youden's J = tpr - fpr; ties take the larger
    threshold (fewer predicted positives)."""
    j = np.array([tpr - fpr for _, fpr, tpr in roc.points])
    best = int(np.argmax(j))  # first occurrence = largest threshold
    return ThresholdChoice(thr=roc.points[best][0], criterion_value=float(j[best]))


def prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Precision, recall, F-score with every 0/0 case defined as 0."""
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f_score = 2.0 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    return precision, recall, f_score


@dataclass
class ImageMetrics:
    index: int
    precision: float
    recall: float
    f_score: float
    thr: float
    degenerate: bool


@dataclass
class MetricsReport:
    rows: list  # ImageMetrics per test image, in index order
    mean_precision: float
    mean_recall: float
    mean_f_score: float
    r2_train: float
    r2_test: float


def evaluate_model(model: PlsModel, train, test_images, test_maps,
                   r2_mode: str = "pooled"):
    """Score a model on the test set, one threshold per image.

    `train` is the (X, Y) pair the model was fit on, used only for r2_train.
    Returns (report, roc_curves); a curve is None for an image whose ground
    truth is single-class, in which case the threshold falls back to
    min score (all cloud) or +inf (all sky) and the row is flagged.
    """
    x_train, y_train = train
    r2_train = r2_score(y_train, predict(model, x_train), r2_mode)
    x_test = images_to_design(test_images)
    y_test = maps_to_design(test_maps)
    r2_test = r2_score(y_test, predict(model, x_test), r2_mode)

    scores_all = predict(model, x_test)
    rows, curves = [], []
    for i, gt in enumerate(test_maps):
        gt = np.asarray(gt, dtype=bool)
        scores = scores_all[i].reshape(gt.shape)
        if gt.all() or not gt.any():
            thr = float(scores.min()) if gt.all() else np.inf
            curves.append(None)
            degenerate = True
        else:
            curve = roc_curve(scores, gt)
            thr = optimal_threshold(curve).thr
            curves.append(curve)
            degenerate = False
        precision, recall, f_score = prf(confusion(scores, gt, thr))
        rows.append(ImageMetrics(index=i, precision=precision, recall=recall,
                                 f_score=f_score, thr=thr, degenerate=degenerate))

    report = MetricsReport(
        rows=rows,
        mean_precision=float(np.mean([r.precision for r in rows])),
        mean_recall=float(np.mean([r.recall for r in rows])),
        mean_f_score=float(np.mean([r.f_score for r in rows])),
        r2_train=r2_train,
        r2_test=r2_test,
    )
    return report, curves


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for thr, fpr, tpr in curve.points:
            writer.writerow([repr(thr), repr(fpr), repr(tpr)])


def write_report_csv(report: MetricsReport, path) -> None:
    """Per-image metric rows plus a mean row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "precision", "recall", "f_score",
                         "thr", "degenerate"])
        for r in report.rows:
            writer.writerow([r.index, repr(r.precision), repr(r.recall),
                             repr(r.f_score), repr(r.thr), int(r.degenerate)])
        writer.writerow(["mean", repr(report.mean_precision),
                         repr(report.mean_recall), repr(report.mean_f_score),
                         "", ""])


LEAK_FOOTNOTE = ("note: per-image thresholds are tuned on each test image's own "
                 "ground truth, so precision/recall/F are optimistic; they are "
                 "comparable between the two cases, not absolute.")


def format_report(label: str, report: MetricsReport) -> str:
    """Human-readable block for one evaluation case."""
    lines = [f"[{label}]",
             f"  r2_train = {report.r2_train:.4f}   r2_test = {report.r2_test:.4f}",
             f"  precision = {report.mean_precision:.4f}   "
             f"recall = {report.mean_recall:.4f}   "
             f"f_score = {report.mean_f_score:.4f}   "
             f"(mean over {len(report.rows)} test images)"]
    flagged = sum(1 for r in report.rows if r.degenerate)
    if flagged:
        lines.append(f"  {flagged} single-class image(s) used the degenerate "
                     f"threshold rule")
    return "\n".join(lines)
