"""PLS2 regression from flattened images to flattened binary maps.

NIPALS with mean centering and no variance scaling. The component count is
chosen by sweeping 1..max_comp and keeping the best validation R².
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import checkpoint

INNER_TOL = 1e-10
INNER_MAX_ITERS = 500
SCORE_EPS = 1e-12


def images_to_design(images) -> np.ndarray:
    """Stack grayscale images into a design matrix, one flattened image per
    row, intensities rescaled to [0, 1]."""
    return np.stack([np.asarray(im, dtype=np.float64).reshape(-1) / 255.0
                     for im in images])


def maps_to_design(maps) -> np.ndarray:
    """Stack binary maps into a target matrix of {0, 1} reals."""
    return np.stack([np.asarray(m).astype(np.float64).reshape(-1) for m in maps])


def _as_design(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass
class PlsModel:
    x_mean: np.ndarray
    y_mean: np.ndarray
    W: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    n_comp: int

    def save(self, path) -> None:
        checkpoint.save_arrays(path, "pls", {"n_comp": self.n_comp}, {
            "x_mean": self.x_mean, "y_mean": self.y_mean,
            "W": self.W, "P": self.P, "Q": self.Q, "B": self.B,
        })

    @classmethod
    def load(cls, path) -> "PlsModel":
        kind, meta, arrays = checkpoint.load_arrays(path)
        if kind != "pls":
            raise checkpoint.CheckpointError(
                f"expected a pls checkpoint, got kind '{kind}' in {path}")
        return cls(arrays["x_mean"], arrays["y_mean"], arrays["W"],
                   arrays["P"], arrays["Q"], arrays["B"], int(meta["n_comp"]))


def fit_pls2(X, Y, n_comp: int) -> PlsModel:
    """Fit a PLS2 model by NIPALS.

    Per component: u starts as the largest-variance column of the current Y
    residual; iterate w = X'u (normalized), t = Xw, q = Y't (normalized),
    u = Yq until w moves less than 1e-10 or 500 iterations. Loadings
    p = X't/(t't) and the regression-scaled q = Y't/(t't) deflate X and Y.
    Components stop early when the score norm underflows; the achieved count
    is recorded on the model. B = W (P'W)^-1 Q' maps centered x to centered y.
    """
    X = _as_design(X, "X")
    Y = _as_design(Y, "Y")
    n, m = X.shape
    if Y.shape[0] != n:
        raise ValueError(f"X has {n} rows but Y has {Y.shape[0]}")
    if n < 2:
        raise ValueError(f"need at least 2 samples to fit, got {n}")
    limit = min(n - 1, m)
    if not 1 <= n_comp <= limit:
        raise ValueError(f"n_comp must be in [1, {limit}], got {n_comp}")

    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xd = X - x_mean
    Yd = Y - y_mean
    if not np.any(Xd) or not np.any(Yd):
        raise ValueError("degenerate data: X or Y has no variance after centering")

    w_cols, p_cols, q_cols = [], [], []
    for _ in range(n_comp):
        u = Yd[:, int(np.argmax(Yd.var(axis=0)))]
        w = np.zeros(m)
        for _ in range(INNER_MAX_ITERS):
            w_new = Xd.T @ u
            norm = np.linalg.norm(w_new)
            if norm < SCORE_EPS:
                break
            w_new /= norm
            t = Xd @ w_new
            tn = Yd.T @ t
            tnn = np.linalg.norm(tn)
            if tnn >= SCORE_EPS:
                u = Yd @ (tn / tnn)
            done = np.linalg.norm(w_new - w) <= INNER_TOL
            w = w_new
            # one pass is the closed form when Y has a single column
            if done or Yd.shape[1] == 1:
                break
        t = Xd @ w
        tt = float(t @ t)
        if np.sqrt(tt) < SCORE_EPS:
            break
        p = Xd.T @ t / tt
        q = Yd.T @ t / tt
        Xd = Xd - np.outer(t, p)
        Yd = Yd - np.outer(t, q)
        w_cols.append(w)
        p_cols.append(p)
        q_cols.append(q)

    if not w_cols:
        raise ValueError("degenerate data: no component could be extracted")
    W = np.column_stack(w_cols)
    P = np.column_stack(p_cols)
    Q = np.column_stack(q_cols)
    B = W @ np.linalg.solve(P.T @ W, Q.T)
    return PlsModel(x_mean, y_mean, W, P, Q, B, len(w_cols))


def predict(model: PlsModel, X) -> np.ndarray:
    X = _as_design(X, "X")
    if X.shape[1] != model.x_mean.shape[0]:
        raise ValueError(f"model expects {model.x_mean.shape[0]} features, "
                         f"got {X.shape[1]}")
    return (X - model.x_mean) @ model.B + model.y_mean


def r2_score(Y, Y_hat, mode: str = "pooled") -> float:
    """Coefficient of determination over all outputs.

    "pooled" treats every (row, column) cell as one observation against the
    per-column means of Y. "per_image" averages the per-row R² instead,
    skipping rows with no variance.
    """
    Y = _as_design(Y, "Y")
    Y_hat = _as_design(Y_hat, "Y_hat")
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Y_hat.shape}")
    if mode == "pooled":
        ss_tot = float(((Y - Y.mean(axis=0)) ** 2).sum())
        if ss_tot == 0.0:
            raise ValueError("R² undefined: Y has zero total variance")
        return 1.0 - float(((Y - Y_hat) ** 2).sum()) / ss_tot
    if mode == "per_image":
        ss_tot = ((Y - Y.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
        keep = ss_tot > 0.0
        if not np.any(keep):
            raise ValueError("R² undefined: every row of Y has zero variance")
        ss_res = ((Y - Y_hat) ** 2).sum(axis=1)
        return float(np.mean(1.0 - ss_res[keep] / ss_tot[keep]))
    raise ValueError(f"unknown R² mode '{mode}'")


@dataclass
class SweepReport:
    rows: list  # (n_comp, r2_train, r2_val)
    chosen: int


def sweep_ncomp(train, val, max_comp: int, r2_mode: str = "pooled") -> SweepReport:
    """Fit models for n_comp = 1..max_comp and pick the best validation R².

    `train` and `val` are (X, Y) pairs. Ties go to the smaller n_comp.
    """
    if max_comp < 1:
        raise ValueError(f"max_comp must be >= 1, got {max_comp}")
    x_train, y_train = train
    x_val, y_val = val
    rows = []
    for k in range(1, max_comp + 1):
        model = fit_pls2(x_train, y_train, k)
        r2_train = r2_score(y_train, predict(model, x_train), r2_mode)
        r2_val = r2_score(y_val, predict(model, x_val), r2_mode)
        rows.append((k, r2_train, r2_val))
    best = max(rows, key=lambda row: (row[2], -row[0]))
    return SweepReport(rows=rows, chosen=best[0])


def write_sweep_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_comp", "r2_train", "r2_val"])
        for k, r2_train, r2_val in report.rows:
            writer.writerow([k, repr(r2_train), repr(r2_val)])
