"""Image loading, resizing and the synthetic stand-in dataset.

Expected layout on disk::

    root/{train,val,test}/{NORMAL,PNEUMONIA}/*.{jpeg,jpg,png}

``NORMAL`` maps to label 0 and ``PNEUMONIA`` to label 1.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

IMAGE_SIZE = 128
SPLITS = ("train", "val", "test")
CLASS_DIRS = {"NORMAL": 0, "PNEUMONIA": 1}
EXTENSIONS = {".jpeg", ".jpg", ".png"}
_GRAY_MODES = {"1", "L", "LA", "I", "I;16", "F"}


class DataError(RuntimeError):
    pass


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (h, w, 3) in [0, 1]
    label: int
    source_path: str


@dataclass
class DatasetSplit:
    """A split held as stacked arrays; iterating yields :class:`ImageSample`."""

    images: np.ndarray  # (N, h, w, 3) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    paths: list[str]
    split_name: str

    def __post_init__(self):
        if len(self.images) != len(self.labels) or len(self.labels) != len(self.paths):
            raise ValueError("images, labels and paths must have equal length")
        if self.split_name not in SPLITS:
            raise ValueError(f"unknown split {self.split_name!r}")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> ImageSample:
        return ImageSample(self.images[i], int(self.labels[i]), self.paths[i])

    def __iter__(self) -> Iterator[ImageSample]:
        return (self[i] for i in range(len(self)))

    def class_counts(self) -> dict[int, int]:
        return {c: int((self.labels == c).sum()) for c in (0, 1)}


def _source_coords(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * scale - 0.5, clamped to the edge
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear_resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample of an ``(h, w, c)`` array, no antialiasing."""
    img = np.asarray(img, dtype=np.float64)
    r0, r1, fr = _source_coords(img.shape[0], height)
    c0, c1, fc = _source_coords(img.shape[1], width)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def decode_and_resize(raw: bytes, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode PNG/JPEG bytes into a ``(size, size, 3)`` float array in [0, 255]."""
    with Image.open(io.BytesIO(raw)) as img:
        img.load()
        if img.mode in _GRAY_MODES:
            gray = np.asarray(img.convert("L"), dtype=np.float64)
            arr = np.repeat(gray[:, :, None], 3, axis=2)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    if arr.shape[:2] == (size, size):
        return arr
    return bilinear_resize(arr, size, size)


def normalize_pixels(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.size and (t.min() < 0 or t.max() > 255):
        raise ValueError("pixel values must lie in [0, 255]")
    return t / 255.0


def _list_files(split_dir: Path) -> list[tuple[Path, int]]:
    found = []
    for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        label = CLASS_DIRS.get(class_dir.name.upper())
        if label is None:
            continue
        for f in sorted(class_dir.iterdir()):
            if f.is_file() and f.suffix.lower() in EXTENSIONS:
                found.append((f, label))
    return found


def load_split(
    root: str | Path,
    split_name: str,
    size: int = IMAGE_SIZE,
    strict: bool = False,
    workers: int = 1,
) -> DatasetSplit:
    """Load one split; files are read in lexicographic order whatever ``workers`` is.

    Undecodable files are skipped with a warning unless ``strict`` is set.
    """
    split_dir = Path(root) / split_name
    if not split_dir.is_dir():
        raise FileNotFoundError(f"missing split directory {split_dir}")
    files = _list_files(split_dir)

    def load(item):
        path, label = item
        try:
            pixels = normalize_pixels(decode_and_resize(path.read_bytes(), size))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            if strict:
                raise DataError(f"cannot decode {path}: {exc}") from exc
            log.warning("skipping undecodable image %s: %s", path, exc)
            return None
        return pixels, label, str(path)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            loaded = list(pool.map(load, files))
    else:
        loaded = [load(f) for f in files]
    loaded = [x for x in loaded if x is not None]
    if not loaded:
        raise DataError(f"no decodable images under {split_dir}")
    images = np.stack([x[0] for x in loaded])
    labels = np.array([x[1] for x in loaded], dtype=np.int64)
    return DatasetSplit(images, labels, [x[2] for x in loaded], split_name)


def load_dataset(root: str | Path, size: int = IMAGE_SIZE, strict: bool = False, workers: int = 1):
    return tuple(load_split(root, s, size, strict, workers) for s in SPLITS)


def _synth_image(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    centre = (size - 1) / 2.0
    jitter = rng.uniform(-size / 10, size / 10, size=2)
    if label == 0:
        sigma = size / 6.0
        r2 = (yy - centre - jitter[0]) ** 2 + (xx - centre - jitter[1]) ** 2
        signal = np.exp(-r2 / (2 * sigma**2))
    else:
        half = size / 10.0
        signal = np.exp(-((yy - centre - jitter[0]) ** 2) / (2 * half**2))
    base = 0.15 + 0.7 * signal
    img = base[:, :, None] + rng.normal(0.0, 0.1, size=(size, size, 3))
    return np.clip(img, 0.0, 1.0)


def synth_dataset(n_per_class: int, image_size: int = 32, seed: int = 0):
    """Seeded blob-vs-band images, split 70/15/15 per class.

    Class 0 is a centred bright Gaussian blob, class 1 a horizontal bright band.
    """
    if n_per_class < 4:
        raise ValueError("n_per_class must be at least 4 to fill three splits")
    rng = np.random.default_rng(seed)
    n_val = max(1, round(0.15 * n_per_class))
    n_test = max(1, round(0.15 * n_per_class))
    n_train = n_per_class - n_val - n_test
    sizes = {"train": n_train, "val": n_val, "test": n_test}

    per_class = {
        label: np.stack([_synth_image(label, image_size, rng) for _ in range(n_per_class)])
        for label in (0, 1)
    }
    out = []
    start = 0
    for split in SPLITS:
        k = sizes[split]
        images = np.concatenate([per_class[0][start : start + k], per_class[1][start : start + k]])
        labels = np.repeat(np.array([0, 1], dtype=np.int64), k)
        order = rng.permutation(len(labels))
        names = [f"synth/{split}/{'NORMAL' if l == 0 else 'PNEUMONIA'}/{i:05d}" for i, l in enumerate(labels)]
        out.append(
            DatasetSplit(images[order], labels[order], [names[i] for i in order], split)
        )
        start += k
    return tuple(out)


def write_dataset(splits, root: str | Path) -> None:
    """Write splits as 8-bit PNGs in the on-disk layout ``load_split`` reads."""
    root = Path(root)
    names = {v: k for k, v in CLASS_DIRS.items()}
    for split in splits:
        counters = {0: 0, 1: 0}
        for sample in split:
            d = root / split.split_name / names[sample.label]
            d.mkdir(parents=True, exist_ok=True)
            arr = np.round(sample.pixels * 255.0).astype(np.uint8)
            Image.fromarray(arr).save(d / f"{counters[sample.label]:05d}.png")
            counters[sample.label] += 1
