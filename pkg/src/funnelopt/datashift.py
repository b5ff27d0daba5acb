"""Data ingestion and the distribution-shift training stream.

Provides the IDX image container parser, the random-background + rotation
transform that builds shifted dataset variants, a disjoint splitter, a
segment-based shift scheduler with random-access deterministic batches,
and a synthetic Gaussian-blob stream with the same "same task, rotated
inputs" structure for environments without the image files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DataError, DimensionError
from .problems import Batch

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049
BACKGROUND_THRESHOLD = 1e-2
SUPPORTED_ROTATIONS = (0, 45, 90)
NUM_CLASSES = 10

__all__ = [
    "ImageDataset",
    "FeatureDataset",
    "ShiftSchedule",
    "load_idx",
    "make_shift_variant",
    "disjoint_split",
    "next_batch",
    "synthetic_shift_stream",
    "rotate_plane",
]


@dataclass(frozen=True)
class ImageDataset:
    """images [n, side, side] in [0, 1]; labels [n] in [0, 10)."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 3:
            raise DimensionError(f"images must be [n, h, w], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"label count {self.labels.shape[0]} does not match "
                f"image count {self.images.shape[0]}"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("pixel values must lie in [0, 1]")
        if self.labels.size and ((self.labels < 0).any() or (self.labels >= NUM_CLASSES).any()):
            raise DataError(f"labels must lie in [0, {NUM_CLASSES})")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Images flattened to [n, h*w] for linear models."""
        return self.images.reshape(self.images.shape[0], -1)


@dataclass(frozen=True)
class FeatureDataset:
    """Plain feature rows [n, d] with integer labels [n]."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionError(f"features must be [n, d], got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("label count does not match feature row count")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ShiftSchedule:
    """Ordered (variant_id, step_count) segments driving the batch stream."""

    segments: tuple
    batch_size: int
    seed: int

    def __post_init__(self):
        segments = tuple((int(v), int(n)) for v, n in self.segments)
        object.__setattr__(self, "segments", segments)
        if not segments:
            raise DataError("schedule needs at least one segment")
        if any(n < 1 for _, n in segments):
            raise DataError("every segment needs step_count >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")

    @property
    def total_steps(self) -> int:
        return sum(n for _, n in self.segments)

    def segment_of(self, step: int):
        """(segment index, variant id) of the segment containing step."""
        if step < 0 or step >= self.total_steps:
            raise DataError(
                f"step {step} outside the schedule (total {self.total_steps})"
            )
        start = 0
        for idx, (variant_id, count) in enumerate(self.segments):
            if step < start + count:
                return idx, variant_id
            start += count
        raise AssertionError("unreachable")


def _read_exact(data: bytes, offset: int, count: int, path: str) -> bytes:
    if offset + count > len(data):
        raise DataError(f"{path}: truncated file")
    return data[offset : offset + count]


def load_idx(images_path, labels_path) -> ImageDataset:
    """Parse the big-endian IDX pair: u8 images [n, h, w] and u8 labels [n].

    Magic 2051 marks the image file and 2049 the label file; pixel bytes are
    scaled to [0, 1] by dividing by 255.
    """
    with open(images_path, "rb") as fh:
        raw = fh.read()
    (magic,) = struct.unpack(">I", _read_exact(raw, 0, 4, str(images_path)))
    if magic != IMAGES_MAGIC:
        raise DataError(f"{images_path}: bad magic {magic}, expected {IMAGES_MAGIC}")
    n, rows, cols = struct.unpack(">III", _read_exact(raw, 4, 12, str(images_path)))
    payload = _read_exact(raw, 16, n * rows * cols, str(images_path))
    images = (
        np.frombuffer(payload, dtype=np.uint8)
        .reshape(n, rows, cols)
        .astype(np.float64)
        / 255.0
    )

    with open(labels_path, "rb") as fh:
        raw = fh.read()
    (magic,) = struct.unpack(">I", _read_exact(raw, 0, 4, str(labels_path)))
    if magic != LABELS_MAGIC:
        raise DataError(f"{labels_path}: bad magic {magic}, expected {LABELS_MAGIC}")
    (n_labels,) = struct.unpack(">I", _read_exact(raw, 4, 4, str(labels_path)))
    labels = np.frombuffer(
        _read_exact(raw, 8, n_labels, str(labels_path)), dtype=np.uint8
    ).astype(np.int64)

    if n_labels != n:
        raise DataError(f"image count {n} does not match label count {n_labels}")
    return ImageDataset(images, labels)


# Exact sin/cos for the supported angles so 0 and 90 degrees reduce to
# exact index permutations under nearest-neighbor rounding.
_ROTATION_TRIG = {
    0: (1.0, 0.0),
    45: (np.sqrt(0.5), np.sqrt(0.5)),
    90: (0.0, 1.0),
}


def _rotation_maps(side: int, rotation_deg: int):
    """Nearest-neighbor source indices and in-frame mask for one angle."""
    cos_t, sin_t = _ROTATION_TRIG[rotation_deg]
    center = (side - 1) / 2.0
    r, c = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    u = r - center
    v = c - center
    src_r = np.round(center + u * cos_t - v * sin_t).astype(np.int64)
    src_c = np.round(center + u * sin_t + v * cos_t).astype(np.int64)
    inside = (src_r >= 0) & (src_r < side) & (src_c >= 0) & (src_c < side)
    return np.clip(src_r, 0, side - 1), np.clip(src_c, 0, side - 1), inside


def make_shift_variant(ds: ImageDataset, rotation_deg: int, seed: int) -> ImageDataset:
    """Random background plus rotation, deterministic given (ds, angle, seed).

    Pixels below the background threshold become fresh uniform [0, 1] draws,
    then the image is rotated about its center with nearest-neighbor
    sampling, and positions whose source falls outside the frame are filled
    with fresh uniform draws too, so every angle has the same background
    statistics (a 45-degree rotation would otherwise expose dark corners).
    """
    if rotation_deg not in SUPPORTED_ROTATIONS:
        raise DataError(
            f"rotation {rotation_deg} unsupported; pick one of {SUPPORTED_ROTATIONS}"
        )
    if ds.images.shape[1] != ds.images.shape[2]:
        raise DataError("rotation requires square images")
    gen = rng.substream(seed, rng.TRANSFORM)
    images = ds.images.copy()
    background = gen.uniform(size=images.shape)
    low = images < BACKGROUND_THRESHOLD
    images[low] = background[low]

    side = images.shape[1]
    src_r, src_c, inside = _rotation_maps(side, rotation_deg)
    corner_fill = gen.uniform(size=images.shape)
    rotated = np.where(inside[None, :, :], images[:, src_r, src_c], corner_fill)
    return ImageDataset(rotated, ds.labels.copy())


def disjoint_split(ds: ImageDataset, parts: int = 3, seed: int = 0):
    """Random near-equal split into disjoint subsets covering the dataset."""
    n = len(ds)
    if n < parts:
        raise DataError(f"cannot split {n} examples into {parts} parts")
    perm = rng.substream(seed, rng.SPLIT).permutation(n)
    base, extra = divmod(n, parts)
    out = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        idx = np.sort(perm[start : start + size])
        out.append(ImageDataset(ds.images[idx], ds.labels[idx]))
        start += size
    return out


def next_batch(schedule: ShiftSchedule, variants, step: int):
    """Batch for one step: uniform with-replacement draw from the segment's
    variant, flattened to feature rows. Pure function of (seed, step).
    """
    _, variant_id = schedule.segment_of(step)
    if variant_id < 0 or variant_id >= len(variants):
        raise DataError(f"segment references unknown variant {variant_id}")
    variant = variants[variant_id]
    gen = rng.substream(schedule.seed, rng.BATCH, step)
    idx = gen.integers(0, len(variant), size=schedule.batch_size)
    features = np.asarray(variant.features[idx], dtype=np.float64)
    labels = np.asarray(variant.labels[idx], dtype=np.int64)
    return Batch(features, labels)


def rotate_plane(x: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate rows of x in the plane of their first two coordinates."""
    theta = np.deg2rad(angle_deg)
    out = np.array(x, dtype=np.float64, copy=True)
    x0, x1 = out[..., 0].copy(), out[..., 1].copy()
    out[..., 0] = np.cos(theta) * x0 - np.sin(theta) * x1
    out[..., 1] = np.sin(theta) * x0 + np.cos(theta) * x1
    return out


def synthetic_shift_stream(
    d: int,
    k: int,
    num_segments: int,
    seed: int,
    *,
    angles=None,
    rotation_deg: float = 90.0,
    segment_steps=1000,
    batch_size: int = 128,
    samples_per_segment: int = 2048,
    mean_radius: float = 2.0,
    noise: float = 0.5,
):
    """Gaussian class blobs whose means rotate between segments.

    Class means sit on a circle in the plane of the first two feature
    coordinates; segment j rotates them by angles[j] (or j*rotation_deg)
    while labels keep their meaning, so the task is unchanged but the
    inputs shift. Returns (variants, schedule); same seed, same stream.
    """
    d, k = int(d), int(k)
    if d < 2:
        raise DataError(f"need d >= 2 features, got {d}")
    if k < 2:
        raise DataError(f"need k >= 2 classes, got {k}")
    if num_segments < 1:
        raise DataError("need at least one segment")
    if angles is None:
        angles = [j * rotation_deg for j in range(num_segments)]
    if len(angles) != num_segments:
        raise DataError("angles must have one entry per segment")
    if np.isscalar(segment_steps):
        segment_steps = [int(segment_steps)] * num_segments
    if len(segment_steps) != num_segments:
        raise DataError("segment_steps must have one entry per segment")

    gen = rng.substream(seed, rng.SYNTH)
    phis = 2.0 * np.pi * np.arange(k) / k
    base_means = np.zeros((k, d))
    base_means[:, 0] = mean_radius * np.cos(phis)
    base_means[:, 1] = mean_radius * np.sin(phis)

    variants = []
    for j in range(num_segments):
        means = rotate_plane(base_means, angles[j])
        labels = gen.permutation(np.arange(samples_per_segment) % k)
        features = means[labels] + noise * gen.standard_normal((samples_per_segment, d))
        variants.append(FeatureDataset(features, labels.astype(np.int64)))

    schedule = ShiftSchedule(
        segments=tuple((j, segment_steps[j]) for j in range(num_segments)),
        batch_size=batch_size,
        seed=seed,
    )
    return variants, schedule
