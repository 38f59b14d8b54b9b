"""Pseudo ground truth for generated images.

Intensity clustering (1-D 2-means) turns a generated grayscale image into a
pixel-wise binary map; an iterated majority filter smooths it into an
area-wise map. Both steps are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import _as_image, _as_map
from .gan import sample
from .nets import GeneratorNet


@dataclass
class ClusterConfig:
    k: int = 2
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k != 2:
            raise ValueError(f"this pipeline clusters into exactly 2 groups, got k={self.k}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class SmoothConfig:
    window_radius: int = 2
    max_passes: int = 3

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.max_passes < 0:
            raise ValueError(f"max_passes must be >= 0, got {self.max_passes}")


def kmeans_pixels(img, cfg: ClusterConfig = ClusterConfig(),
                  invert_cloud_rule: bool = False) -> np.ndarray:
    """Cluster pixel intensities into two groups; the brighter group is cloud.

    Lloyd's iterations run on the 256-bin intensity histogram, which is exact
    for 1-D data: every pixel with the same intensity moves together.
    Centroids start at the observed min and max. A pixel equidistant from
    both centroids joins the lower one. A constant image is all sky.
    With `invert_cloud_rule` the darker group is labeled cloud instead.
    """
    img = _as_image(img)
    lo, hi = int(img.min()), int(img.max())
    if lo == hi:
        return np.zeros(img.shape, dtype=bool)

    counts = np.bincount(img.reshape(-1), minlength=256).astype(np.float64)
    vals = np.arange(256, dtype=np.float64)
    c_lo, c_hi = float(lo), float(hi)
    for _ in range(cfg.max_iters):
        mid = 0.5 * (c_lo + c_hi)
        high = vals > mid
        n_hi = counts[high].sum()
        n_lo = counts.sum() - n_hi
        new_lo = (counts[~high] @ vals[~high]) / n_lo if n_lo > 0 else c_lo
        new_hi = (counts[high] @ vals[high]) / n_hi if n_hi > 0 else c_hi
        moved = max(abs(new_lo - c_lo), abs(new_hi - c_hi))
        c_lo, c_hi = new_lo, new_hi
        if moved <= cfg.tol:
            break
    cloud = img > 0.5 * (c_lo + c_hi)
    return ~cloud if invert_cloud_rule else cloud


def _window_sums(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window at each pixel, truncated at the edges."""
    h, w = values.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    r0 = np.clip(np.arange(h) - radius, 0, None)
    r1 = np.clip(np.arange(h) + radius + 1, None, h)
    c0 = np.clip(np.arange(w) - radius, 0, None)
    c1 = np.clip(np.arange(w) + radius + 1, None, w)
    return (ii[r1[:, None], c1[None, :]] - ii[r0[:, None], c1[None, :]]
            - ii[r1[:, None], c0[None, :]] + ii[r0[:, None], c0[None, :]])


def smooth_map(map_, cfg: SmoothConfig = SmoothConfig()) -> np.ndarray:
    """Iterated majority filter.

    Each pixel takes the majority label of its (2r+1)^2 window; edge windows
    are truncated to what fits; an exact tie keeps the pixel's current label.
    Stops at a fixed point or after max_passes, whichever comes first.
    """
    cur = _as_map(map_).copy()
    h, w = cur.shape
    r0 = np.clip(np.arange(h) - cfg.window_radius, 0, None)
    r1 = np.clip(np.arange(h) + cfg.window_radius + 1, None, h)
    c0 = np.clip(np.arange(w) - cfg.window_radius, 0, None)
    c1 = np.clip(np.arange(w) + cfg.window_radius + 1, None, w)
    wsize = (r1 - r0)[:, None] * (c1 - c0)[None, :]
    for _ in range(cfg.max_passes):
        cloud = _window_sums(cur.astype(np.float64), cfg.window_radius)
        nxt = np.where(2.0 * cloud > wsize, True,
                       np.where(2.0 * cloud < wsize, False, cur))
        if np.array_equal(nxt, cur):
            break
        cur = nxt
    return cur


@dataclass
class Candidate:
    """A generated image with its estimated map and provenance.

    `verdict` and `r2_val_with` start unset and are filled in by the
    filtering stage.
    """
    image: np.ndarray
    map: np.ndarray
    latent_seed: int
    index: int
    verdict: Optional[str] = None
    r2_val_with: Optional[float] = None


def make_candidates(gen: GeneratorNet, n: int, seeds,
                    cluster_cfg: ClusterConfig = ClusterConfig(),
                    smooth_cfg: SmoothConfig = SmoothConfig(),
                    invert_cloud_rule: bool = False) -> list[Candidate]:
    """Sample n images from the generator and estimate a map for each.

    `seeds` supplies one latent seed per candidate, so the list is
    reproducible seed by seed.
    """
    seeds = list(seeds)
    if len(seeds) < n:
        raise ValueError(f"need {n} latent seeds, got {len(seeds)}")
    out = []
    for i in range(n):
        img = sample(gen, 1, seeds[i])[0]
        map_ = smooth_map(kmeans_pixels(img, cluster_cfg, invert_cloud_rule), smooth_cfg)
        out.append(Candidate(image=img, map=map_, latent_seed=seeds[i], index=i))
    return out
