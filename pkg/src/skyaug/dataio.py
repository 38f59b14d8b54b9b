"""Dataset handling: R-B channel extraction, PGM/PPM files, splits, synthetic data.

Image conventions used across the package:

* raw image     -- ``np.uint8`` array of shape (H, W), intensities 0..255
* binary map    -- ``np.bool_`` array of shape (H, W), True = cloud
* RGB image     -- ``np.uint8`` array of shape (H, W, 3)

Images and maps are persisted as binary PGM (P5, maxval 255); maps use the
values {0, 255} and are thresholded at 128 on load. RGB input images are read
from binary PPM (P6).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

TRAIN_FRACTION = 0.60
VAL_FRACTION = 0.1565


class DataError(ValueError):
    """Raised for malformed files, bad dimensions, or impossible requests."""


def _as_rgb(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DataError(f"expected uint8 RGB array of shape (H, W, 3), got "
                        f"{img.dtype} {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise DataError("image dimensions must be positive")
    return img


def _as_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise DataError(f"expected uint8 array of shape (H, W), got "
                        f"{img.dtype} {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise DataError("image dimensions must be positive")
    return img


def _as_map(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.dtype != np.bool_:
        raise DataError(f"expected bool array of shape (H, W), got "
                        f"{m.dtype} {m.shape}")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise DataError("map dimensions must be positive")
    return m


def extract_rb(img) -> np.ndarray:
    """Collapse an RGB image to the rescaled R-B channel.

    The signed difference R - B in [-255, 255] is mapped affinely onto
    [0, 255]: out = round((R - B + 255) / 2), rounding half away from zero.
    """
    img = _as_rgb(img)
    d = img[:, :, 0].astype(np.int32) - img[:, :, 2].astype(np.int32)
    # round-half-away-from-zero of (d + 255) / 2, exactly, in integer arithmetic
    return ((d + 256) // 2).astype(np.uint8)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test index lists covering 0..n-1, plus the seed used."""
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    seed: int

    @property
    def n(self) -> int:
        return len(self.train_ids) + len(self.val_ids) + len(self.test_ids)


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


def split_dataset(n: int, seed: int) -> DatasetSplit:
    """Partition indices 0..n-1 into train/val/test by a seeded shuffle.

    Sizes are round(0.60 n) / round(0.1565 n) / remainder, which reproduces
    the 69/18/28 split for n = 115.
    """
    if n < 3:
        raise DataError(f"split impossible: need at least 3 items, got {n}")
    n_train = _round_half_away(TRAIN_FRACTION * n)
    n_val = _round_half_away(VAL_FRACTION * n)
    perm = np.random.default_rng(seed).permutation(n)
    return DatasetSplit(
        train_ids=tuple(int(i) for i in perm[:n_train]),
        val_ids=tuple(int(i) for i in perm[n_train:n_train + n_val]),
        test_ids=tuple(int(i) for i in perm[n_train + n_val:]),
        seed=seed,
    )


# --- portable image files (PGM P5 / PPM P6) ---

def _read_pnm_tokens(data: bytes, count: int, path: str) -> tuple[list[int], int]:
    """Read `count` whitespace-separated ASCII integers after the magic,
    skipping '#' comments. Returns the values and the offset one whitespace
    byte past the last token (start of the raster)."""
    vals = []
    i = 2  # past the 2-byte magic
    while len(vals) < count:
        if i >= len(data):
            raise DataError(f"{path}: truncated header")
        c = data[i:i + 1]
        if c in b" \t\r\n":
            i += 1
        elif c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isdigit():
            j = i
            while j < len(data) and data[j:j + 1].isdigit():
                j += 1
            vals.append(int(data[i:j]))
            i = j
        else:
            raise DataError(f"{path}: malformed header (unexpected byte {c!r})")
    if i >= len(data) or data[i:i + 1] not in b" \t\r\n":
        raise DataError(f"{path}: malformed header (missing raster separator)")
    return vals, i + 1


def _load_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: cannot read file ({exc})") from exc
    if data[:2] != magic:
        kind = "grayscale PGM (P5)" if magic == b"P5" else "RGB PPM (P6)"
        raise DataError(f"{path}: not a binary {kind} file")
    (width, height, maxval), offset = _read_pnm_tokens(data, 3, str(path))
    if width <= 0 or height <= 0:
        raise DataError(f"{path}: dimension zero or negative ({width}x{height})")
    if maxval > 255:
        raise DataError(f"{path}: unsupported bit depth (maxval {maxval} > 255)")
    if maxval <= 0:
        raise DataError(f"{path}: invalid maxval {maxval}")
    raster = data[offset:offset + width * height * channels]
    if len(raster) != width * height * channels:
        raise DataError(f"{path}: truncated raster "
                        f"(expected {width * height * channels} bytes, got {len(raster)})")
    arr = np.frombuffer(raster, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, channels)
    return arr.reshape(shape).copy()


def load_image_file(path) -> np.ndarray:
    """Load an 8-bit single-channel PGM as a raw image."""
    return _load_pnm(path, b"P5", 1)


def save_image_file(img, path) -> None:
    """Write a raw image as binary PGM (P5, maxval 255)."""
    img = _as_image(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def load_map_file(path) -> np.ndarray:
    """Load a binary map stored as PGM; values >= 128 become cloud (True)."""
    return load_image_file(path) >= 128


def save_map_file(m, path) -> None:
    """Write a binary map as PGM with values {0, 255}."""
    m = _as_map(m)
    save_image_file(np.where(m, 255, 0).astype(np.uint8), path)


def load_rgb_file(path) -> np.ndarray:
    """Load an 8-bit RGB PPM (P6) image."""
    return _load_pnm(path, b"P6", 3)


# --- synthetic dataset ---

def _value_noise(rng: np.random.Generator, side: int, cell: int) -> np.ndarray:
    """Bilinearly interpolated lattice noise with the given cell size."""
    n = side // cell + 2
    nodes = rng.standard_normal((n, n))
    pos = np.arange(side) / cell
    i0 = pos.astype(int)
    f = pos - i0
    rows = nodes[i0, :] * (1.0 - f)[:, None] + nodes[i0 + 1, :] * f[:, None]
    return rows[:, i0] * (1.0 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def synth_dataset(count: int, side: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Generate `count` procedural cloud textures with self-consistent maps.

    Each image is a two-octave smoothed noise field rescaled to 0..255; its
    ground truth is the pixels strictly above the image's own mean, so
    re-thresholding any generated image at its mean reproduces its map.
    """
    if count < 1:
        raise DataError(f"need at least one image, got count={count}")
    if side < 8:
        raise DataError(f"side must be at least 8, got {side}")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        field = _value_noise(rng, side, 8) + 0.5 * _value_noise(rng, side, 4)
        lo, hi = field.min(), field.max()
        if hi > lo:
            field = (field - lo) / (hi - lo) * 255.0
        else:
            field = np.zeros_like(field)
        img = np.floor(field + 0.5).astype(np.uint8)
        pairs.append((img, img > img.mean()))
    return pairs


# --- resampling ---

def downsample_image(img, side: int) -> np.ndarray:
    """Reduce a raw image to side x side: box averaging when the factor is an
    integer, nearest-neighbour otherwise."""
    img = _as_image(img)
    h, w = img.shape
    if h < side or w < side:
        raise DataError(f"cannot downsample {h}x{w} to {side}x{side}")
    if (h, w) == (side, side):
        return img.copy()
    if h % side == 0 and w % side == 0:
        fh, fw = h // side, w // side
        blocks = img.reshape(side, fh, side, fw).astype(np.float64)
        return np.floor(blocks.mean(axis=(1, 3)) + 0.5).astype(np.uint8)
    ri = (np.arange(side) * h) // side
    ci = (np.arange(side) * w) // side
    return img[np.ix_(ri, ci)].copy()


def downsample_map(m, side: int) -> np.ndarray:
    """Reduce a binary map to side x side by nearest-neighbour sampling."""
    m = _as_map(m)
    h, w = m.shape
    if h < side or w < side:
        raise DataError(f"cannot downsample {h}x{w} to {side}x{side}")
    if (h, w) == (side, side):
        return m.copy()
    ri = (np.arange(side) * h) // side
    ci = (np.arange(side) * w) // side
    return m[np.ix_(ri, ci)].copy()


# --- dataset manifest ---

def write_manifest(path, records) -> None:
    """Write (image_path, map_path, split) records, one comma-separated line each."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_path, map_path, split in records:
            if split not in ("train", "val", "test"):
                raise DataError(f"bad split label {split!r}")
            fh.write(f"{image_path},{map_path},{split}\n")


def read_manifest(path) -> list[tuple[str, str, str]]:
    """Read a manifest written by write_manifest."""
    records = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 comma-separated "
                                    f"fields, got {len(parts)}")
                image_path, map_path, split = parts
                if split not in ("train", "val", "test"):
                    raise DataError(f"{path}:{lineno}: unknown split {split!r}")
                records.append((image_path, map_path, split))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    return records


def load_split_arrays(manifest_path, split: str):
    """Load all (image, map) pairs of one split listed in a manifest.

    Relative paths in the manifest are resolved against the manifest's
    directory.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    images, maps = [], []
    for image_path, map_path, s in read_manifest(manifest_path):
        if s != split:
            continue
        if not os.path.isabs(image_path):
            image_path = os.path.join(base, image_path)
        if not os.path.isabs(map_path):
            map_path = os.path.join(base, map_path)
        images.append(load_image_file(image_path))
        maps.append(load_map_file(map_path))
    return images, maps
