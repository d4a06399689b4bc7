"""MNIST-style IDX dataset handling and a synthetic digit generator.

IDX files are big-endian: images carry magic 0x00000803 and three dims,
labels carry 0x00000801 and one dim. Pixels load as floats in [0, 1] with
an NCHW single-channel layout; labels must lie in [0, 9].

The synthetic generator renders ten fixed glyph templates with per-image
jitter, intensity variation, and pixel noise, and writes standard IDX
files, so every loader and model path runs unchanged against it.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx_images(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack_from(">IIII", blob)
    if magic != IMAGE_MAGIC:
        raise FormatError(f"{path}: bad image magic 0x{magic:08x}")
    if len(blob) != 16 + n * rows * cols:
        raise FormatError(f"{path}: image payload size mismatch")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    return pixels.reshape(n, 1, rows, cols).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    magic, n = struct.unpack_from(">II", blob)
    if magic != LABEL_MAGIC:
        raise FormatError(f"{path}: bad label magic 0x{magic:08x}")
    if len(blob) != 8 + n:
        raise FormatError(f"{path}: label payload size mismatch")
    labels = np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise FormatError(f"{path}: label out of range [0, 9]")
    return labels


def load_mnist(path, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Load (images [N,1,28,28] in [0,1], labels [N]) from a dataset dir."""
    path = Path(path)
    if split == "train":
        img, lab = TRAIN_IMAGES, TRAIN_LABELS
    elif split == "test":
        img, lab = TEST_IMAGES, TEST_LABELS
    else:
        raise FormatError(f"unknown split {split!r}")
    images = load_idx_images(path / img)
    labels = load_idx_labels(path / lab)
    if len(images) != len(labels):
        raise FormatError(f"{path}: image/label count mismatch")
    return images, labels


# ---------------------------------------------------------------------------
# synthetic digits

_GLYPHS = """
..####.. ...##... ..####.. ..####.. .....##. ######## ..####.. ######## ..####.. ..####..
.##..##. ..###... .##..##. .##..##. ....###. ##...... .##..##. ......## .##..##. .##..##.
##....## .####... ##....## ......## ...####. ##...... ##...... .....##. ##....## ##....##
##....## ...##... ......## ......## ..##.##. ##...... ##...... .....##. ##....## ##....##
##....## ...##... .....##. ...###.. .##..##. ######.. ######.. ....##.. .##..##. ##....##
##....## ...##... ....##.. ...###.. ##...##. .....##. ##...##. ....##.. ..####.. .##..###
##....## ...##... ...##... ......## ######## ......## ##....## ...##... .##..##. ..###.##
##....## ...##... ..##.... ......## .....##. ......## ##....## ...##... ##....## ......##
##....## ...##... .##..... ......## .....##. ......## ##....## ..##.... ##....## ......##
##....## ...##... ##...... ##....## .....##. ##....## ##....## ..##.... ##....## ......##
.##..##. ...##... ##...... .##..##. .....##. .##..##. .##..##. ..##.... .##..##. .##..##.
..####.. .######. ######## ..####.. .....##. ..####.. ..####.. ..##.... ..####.. ..####..
"""


def _glyph_bitmaps() -> np.ndarray:
    rows = [r.split() for r in _GLYPHS.strip().splitlines()]
    out = np.zeros((10, 12, 8), dtype=np.float64)
    for digit in range(10):
        for i, row in enumerate(rows):
            cell = row[digit]
            for j, ch in enumerate(cell):
                out[digit, i, j] = 1.0 if ch == "#" else 0.0
    return out


def generate_digits(n: int, seed: int = 0, noise: float = 0.06) -> tuple[np.ndarray, np.ndarray]:
    """Render n jittered digit images; returns (uint8 [n,28,28], labels [n])."""
    rng = np.random.default_rng(seed)
    glyphs = np.kron(_glyph_bitmaps(), np.ones((2, 2)))  # 10 x 24 x 16
    labels = rng.integers(0, 10, size=n)
    images = np.zeros((n, 28, 28), dtype=np.float64)
    for i, d in enumerate(labels):
        dy = rng.integers(-2, 3)
        dx = rng.integers(-4, 5)
        intensity = rng.uniform(0.6, 1.0)
        images[i, 2 + dy : 26 + dy, 6 + dx : 22 + dx] = glyphs[d] * intensity
    images += rng.normal(0.0, noise, images.shape)
    np.clip(images, 0.0, 1.0, out=images)
    return np.round(images * 255).astype(np.uint8), labels.astype(np.uint8)


def make_synthetic_mnist(path, train: int = 2048, test: int = 512, seed: int = 0) -> Path:
    """Write a full synthetic dataset (all four IDX files) into a directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    xi, yi = generate_digits(train, seed)
    write_idx_images(path / TRAIN_IMAGES, xi)
    write_idx_labels(path / TRAIN_LABELS, yi)
    xt, yt = generate_digits(test, seed + 1)
    write_idx_images(path / TEST_IMAGES, xt)
    write_idx_labels(path / TEST_LABELS, yt)
    return path
