"""Geometric 16-fold augmentation and the [-1, 1] normalization pair.

A transform is a rotation (counter-clockwise, multiples of 90 degrees)
followed by a flip. The 16 rotation x flip combinations cover the dihedral
group of the square twice over; the duplicated outputs are kept by default
so the augmentation factor is literally 16, with an opt-in dedupe.

Normalization maps 0..255 onto [-1, 1] via pixel / 127.5 - 1; the inverse
rounds half away from zero, so the roundtrip is exact on every integer
intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATIONS = (0, 90, 180, 270)
FLIPS = ("none", "horizontal", "vertical", "both")


@dataclass(frozen=True)
class TransformId:
    """One of the 16 rotation+flip combinations. Rotation is applied first."""
    rotation: int
    flip: str

    def __post_init__(self):
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")
        if self.flip not in FLIPS:
            raise ValueError(f"flip must be one of {FLIPS}, got {self.flip}")


#: All 16 transforms in the canonical order: rotations major, flips minor.
ALL_TRANSFORMS = tuple(TransformId(r, f) for r in ROTATIONS for f in FLIPS)


def apply_transform(img, t: TransformId):
    """Apply rotation (counter-clockwise) then flip to a 2-D array.

    Pure index permutation, no interpolation; works on images and maps alike.
    90/270 degree rotations swap width and height.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {img.shape}")
    out = np.rot90(img, t.rotation // 90)
    if t.flip in ("horizontal", "both"):
        out = np.fliplr(out)
    if t.flip in ("vertical", "both"):
        out = np.flipud(out)
    return np.ascontiguousarray(out)


def sixteen_fold(img, dedupe: bool = False) -> list:
    """Return the image under all 16 transforms, in ALL_TRANSFORMS order.

    The 16 outputs realize each of the 8 dihedral symmetries exactly twice;
    dedupe=True keeps only the first occurrence of each distinct result.
    """
    out = [apply_transform(img, t) for t in ALL_TRANSFORMS]
    if dedupe:
        unique = []
        for a in out:
            if not any(a.shape == b.shape and np.array_equal(a, b) for b in unique):
                unique.append(a)
        return unique
    return out


def normalize(img) -> np.ndarray:
    """Map 0..255 intensities to floats in [-1, 1]: pixel / 127.5 - 1."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 intensities, got {img.dtype}")
    return img.astype(np.float64) / 127.5 - 1.0


def denormalize(values) -> np.ndarray:
    """Map [-1, 1] floats back to 0..255: round(x * 127.5 + 127.5).

    Values outside [-1, 1] are clamped first; rounding is half away from
    zero, making denormalize(normalize(p)) == p for every integer p.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    return np.floor(v * 127.5 + 127.5 + 0.5).astype(np.uint8)
