"""Keep only generated candidates that do not hurt validation fit.

A candidate joins the training set, the regressor is refit, and the
validation R² is compared against the unaugmented baseline: strictly lower is
unfavorable, equal or higher is favorable. By default every candidate is
judged against the same fixed baseline set so verdicts do not depend on
input order; sequential accumulation is available as an alternative mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .pls import fit_pls2, predict, r2_score
from .pseudolabel import Candidate

MODES = ("independent", "sequential")


def _stack_sample(X, Y, candidate: Candidate):
    x_row = np.asarray(candidate.image, dtype=np.float64).reshape(1, -1) / 255.0
    y_row = np.asarray(candidate.map).astype(np.float64).reshape(1, -1)
    if x_row.shape[1] != X.shape[1] or y_row.shape[1] != Y.shape[1]:
        raise ValueError(f"candidate {candidate.index} does not match the "
                         f"design width: image {x_row.shape[1]} vs {X.shape[1]}, "
                         f"map {y_row.shape[1]} vs {Y.shape[1]}")
    return np.vstack([X, x_row]), np.vstack([Y, y_row])


def baseline(train, val, n_comp: int, r2_mode: str = "pooled") -> float:
    """Validation R² of the model fit on the unaugmented training set."""
    x_train, y_train = train
    x_val, y_val = val
    model = fit_pls2(x_train, y_train, n_comp)
    return r2_score(y_val, predict(model, x_val), r2_mode)


def evaluate_candidate(train, val, candidate: Candidate, n_comp: int,
                       baseline_r2: float, r2_mode: str = "pooled") -> str:
    """Refit with the candidate added and set its verdict against baseline."""
    x_train, y_train = train
    x_val, y_val = val
    x_aug, y_aug = _stack_sample(x_train, y_train, candidate)
    model = fit_pls2(x_aug, y_aug, n_comp)
    r2_with = r2_score(y_val, predict(model, x_val), r2_mode)
    candidate.r2_val_with = r2_with
    candidate.verdict = "favorable" if r2_with >= baseline_r2 else "unfavorable"
    return candidate.verdict


@dataclass
class FilterReport:
    baseline_r2_val: float
    decisions: list  # (candidate index, r2_val_with, verdict) in input order
    accepted_count: int
    mode: str


def filter_candidates(train, val, candidates, n_comp: int,
                      mode: str = "independent",
                      r2_mode: str = "pooled"):
    """Evaluate every candidate and return (report, augmented train pair).

    "independent" judges each candidate against the fixed unaugmented
    baseline; "sequential" folds each accepted candidate into the training
    set and baseline before judging the next, making verdicts order-dependent.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'")
    x_train, y_train = train
    base_r2 = baseline((x_train, y_train), val, n_comp, r2_mode)

    x_cur, y_cur = x_train, y_train
    cur_r2 = base_r2
    decisions = []
    for c in candidates:
        if mode == "independent":
            evaluate_candidate((x_train, y_train), val, c, n_comp, base_r2, r2_mode)
        else:
            evaluate_candidate((x_cur, y_cur), val, c, n_comp, cur_r2, r2_mode)
        decisions.append((c.index, c.r2_val_with, c.verdict))
        if c.verdict == "favorable":
            x_cur, y_cur = _stack_sample(x_cur, y_cur, c)
            if mode == "sequential":
                cur_r2 = c.r2_val_with

    accepted = sum(1 for _, _, verdict in decisions if verdict == "favorable")
    report = FilterReport(baseline_r2_val=base_r2, decisions=decisions,
                          accepted_count=accepted, mode=mode)
    return report, (x_cur, y_cur)


def write_filter_csv(report: FilterReport, path) -> None:
    """Export decisions as CSV; the header row carries the baseline and mode."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["baseline_r2_val", repr(report.baseline_r2_val),
                         "mode", report.mode])
        writer.writerow(["candidate_id", "r2_val_with", "verdict"])
        for cid, r2_with, verdict in report.decisions:
            writer.writerow([cid, repr(r2_with), verdict])
