"""Datasets: CIFAR-10 binary batches and a synthetic long-range relation task."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

CIFAR_RECORD = 3073
CIFAR_MEAN = np.array([0.4914, 0.4822, 0.4465], dtype=np.float32)
CIFAR_STD = np.array([0.2470, 0.2435, 0.2616], dtype=np.float32)
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"

SYNTH_SIZE = 32
SYNTH_CELL = 2
SYNTH_GRID = SYNTH_SIZE // SYNTH_CELL
# Two 2x2 markers light 8 of 1024 pixels: mean p, std sqrt(p(1-p)).
SYNTH_MEAN = 8.0 / 1024.0
SYNTH_STD = float(np.sqrt(SYNTH_MEAN * (1.0 - SYNTH_MEAN)))


@dataclass
class Dataset:
    images: np.ndarray  # [N, 3, R, R] float32, standardized
    labels: np.ndarray  # [N] int64
    num_classes: int
    name: str = ""
    flip_ok: bool = True
    crop_ok: bool = True

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.num_classes, self.name,
                       self.flip_ok, self.crop_ok)


# --- CIFAR-10 -------------------------------------------------------------------


def parse_cifar_records(raw: bytes, path=None) -> tuple[np.ndarray, np.ndarray]:
    """Decode ``label byte + 3072 pixel bytes`` records into uint8 images and labels."""
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise FormatError(f"length {len(raw)} is not a positive multiple of {CIFAR_RECORD}", path)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"record {bad} has label {labels[bad]} > 9", path)
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def standardize_cifar(images_u8: np.ndarray) -> np.ndarray:
    x = images_u8.astype(np.float32) / 255.0
    return (x - CIFAR_MEAN[None, :, None, None]) / CIFAR_STD[None, :, None, None]


def _read_batches(directory: Path, names):
    images, labels = [], []
    for name in names:
        path = directory / name
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read CIFAR-10 batch: {exc.strerror}", path) from exc
        im, lb = parse_cifar_records(raw, path)
        images.append(im)
        labels.append(lb)
    return np.concatenate(images), np.concatenate(labels)


def load_cifar10(directory, n_train: int | None = 5000, n_test: int | None = 1000):
    """Train/test :class:`Dataset` pair from the binary CIFAR-10 distribution.

    By default only the first 5000 training and 1000 test images are kept.
    """
    directory = Path(directory)
    present = [n for n in CIFAR_TRAIN_FILES if (directory / n).exists()]
    if not present:
        raise FormatError("no data_batch_*.bin files found", directory)
    tr_x, tr_y = _read_batches(directory, present)
    te_x, te_y = _read_batches(directory, [CIFAR_TEST_FILE])
    tr_x, tr_y = tr_x[:n_train], tr_y[:n_train]
    te_x, te_y = te_x[:n_test], te_y[:n_test]
    return (Dataset(standardize_cifar(tr_x), tr_y, 10, "cifar10-train"),
            Dataset(standardize_cifar(te_x), te_y, 10, "cifar10-test"))


# --- synthetic relation task -------------------------------------------------------


def synth_label(cy1, cx1, cy2, cx2):
    """1 iff both markers sit in the same half of the image along the axis of
    their longer separation (ties count as horizontal separation)."""
    half = SYNTH_GRID // 2
    cy1, cx1, cy2, cx2 = map(np.asarray, (cy1, cx1, cy2, cx2))
    horizontal = np.abs(cx1 - cx2) >= np.abs(cy1 - cy2)
    same_x = (cx1 < half) == (cx2 < half)
    same_y = (cy1 < half) == (cy2 < half)
    return np.where(horizontal, same_x, same_y).astype(np.int64)


def synth_markers(seed: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Marker cell coordinates ``[n, 4]`` = (cy1, cx1, cy2, cx2) and labels.

    The label is drawn first with a fair coin and marker pairs are redrawn
    until they carry it, so both classes are equally likely.
    """
    rng = np.random.default_rng(seed)
    want = rng.integers(0, 2, size=n)
    cells = SYNTH_GRID * SYNTH_GRID
    coords = np.empty((n, 4), dtype=np.int64)
    todo = np.arange(n)
    while todo.size:
        a = rng.integers(0, cells, size=todo.size)
        b = rng.integers(0, cells - 1, size=todo.size)
        b = b + (b >= a)  # distinct cell, uniform over the remaining ones
        cand = np.stack([a // SYNTH_GRID, a % SYNTH_GRID, b // SYNTH_GRID, b % SYNTH_GRID], axis=1)
        ok = synth_label(*cand.T) == want[todo]
        coords[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return coords, want.astype(np.int64)


def render_markers(coords: np.ndarray) -> np.ndarray:
    """Single-plane ``[n, 1, 32, 32]`` images with value 1 on each 2x2 marker."""
    n = len(coords)
    img = np.zeros((n, 1, SYNTH_SIZE, SYNTH_SIZE), dtype=np.float32)
    idx = np.arange(n)
    for cy, cx in ((coords[:, 0], coords[:, 1]), (coords[:, 2], coords[:, 3])):
        for dy in range(SYNTH_CELL):
            for dx in range(SYNTH_CELL):
                img[idx, 0, cy * SYNTH_CELL + dy, cx * SYNTH_CELL + dx] = 1.0
    return img


def synth_task(seed: int, n: int) -> Dataset:
    """``n`` standardized images (single plane repeated to 3 channels) with labels."""
    coords, labels = synth_markers(seed, n)
    return _synth_dataset(coords, labels, f"synth(seed={seed})")


def _synth_dataset(coords, labels, name):
    plane = (render_markers(coords) - SYNTH_MEAN) / SYNTH_STD
    images = np.ascontiguousarray(np.repeat(plane, 3, axis=1))
    # cropping would move markers across the midline; mirroring keeps labels
    return Dataset(images, labels, 2, name, flip_ok=True, crop_ok=False)


def _pair_key(coords):
    a = coords[:, 0] * SYNTH_GRID + coords[:, 1]
    b = coords[:, 2] * SYNTH_GRID + coords[:, 3]
    return np.minimum(a, b) * (SYNTH_GRID * SYNTH_GRID) + np.maximum(a, b)


def synth_splits(seed: int = 1, n_train: int = 10_000, n_test: int = 2_000) -> tuple[Dataset, Dataset]:
    """Train/test split with no marker pair shared between the two.

    Positive pairs are rarer than negative ones, so dropping pairs already
    seen in training would skew the test labels; per-class quotas keep the
    test split balanced.
    """
    tr_coords, tr_labels = synth_markers(seed, n_train)
    seen = set(_pair_key(tr_coords).tolist())
    quota = {0: n_test // 2, 1: n_test - n_test // 2}
    te_coords, te_labels = [], []
    draw = 0
    while len(te_labels) < n_test:
        c, lab = synth_markers(seed * 7919 + 104729 + draw, max(n_test, 64))
        for key, row, y in zip(_pair_key(c).tolist(), c, lab.tolist()):
            if key in seen or not quota[y]:
                continue
            seen.add(key)
            quota[y] -= 1
            te_coords.append(row)
            te_labels.append(y)
        draw += 1
    te_c = np.array(te_coords, dtype=np.int64).reshape(-1, 4)
    te_l = np.array(te_labels, dtype=np.int64)
    return (_synth_dataset(tr_coords, tr_labels, f"synth-train(seed={seed})"),
            _synth_dataset(te_c, te_l, f"synth-test(seed={seed})"))
