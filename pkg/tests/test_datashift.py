"""Data pipeline tests: IDX parsing, shift transforms, splits, batches."""

import struct

import numpy as np
import pytest

from funnelopt.datashift import (
    FeatureDataset,
    ImageDataset,
    ShiftSchedule,
    disjoint_split,
    load_idx,
    make_shift_variant,
    next_batch,
    rotate_plane,
    synthetic_shift_stream,
)
from funnelopt.errors import DataError


def write_idx(tmp_path, images_u8, labels_u8, *, images_magic=2051, labels_magic=2049):
    """Independent IDX writer used as the parsing oracle."""
    n, rows, cols = images_u8.shape
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", images_magic, n, rows, cols))
        fh.write(images_u8.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", labels_magic, len(labels_u8)))
        fh.write(bytes(labels_u8))
    return images_path, labels_path


class TestLoadIdx:
    def test_round_trip(self, tmp_path):
        gen = np.random.default_rng(79)
        raw = gen.integers(0, 256, size=(2, 4, 4), dtype=np.uint8)
        labels = [3, 9]
        images_path, labels_path = write_idx(tmp_path, raw, labels)
        ds = load_idx(images_path, labels_path)
        np.testing.assert_array_equal(ds.images, raw / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_wrong_magic(self, tmp_path):
        raw = np.zeros((1, 2, 2), dtype=np.uint8)
        images_path, labels_path = write_idx(tmp_path, raw, [0], images_magic=2052)
        with pytest.raises(DataError, match="magic"):
            load_idx(images_path, labels_path)
        images_path, labels_path = write_idx(tmp_path, raw, [0], labels_magic=2050)
        with pytest.raises(DataError, match="magic"):
            load_idx(images_path, labels_path)

    def test_truncated_file(self, tmp_path):
        raw = np.zeros((3, 2, 2), dtype=np.uint8)
        images_path, labels_path = write_idx(tmp_path, raw, [0, 1, 2])
        data = images_path.read_bytes()
        images_path.write_bytes(data[:-5])
        with pytest.raises(DataError, match="truncated"):
            load_idx(images_path, labels_path)

    def test_count_mismatch(self, tmp_path):
        raw = np.zeros((2, 2, 2), dtype=np.uint8)
        images_path, labels_path = write_idx(tmp_path, raw, [0, 1, 2])
        with pytest.raises(DataError, match="match"):
            load_idx(images_path, labels_path)


class TestMakeShiftVariant:
    def _bright(self, gen, n=3, side=8):
        # every pixel above the background threshold
        images = gen.uniform(0.5, 1.0, size=(n, side, side))
        return ImageDataset(images, gen.integers(0, 10, n))

    def test_rotation_zero_bright_image_unchanged(self):
        gen = np.random.default_rng(83)
        ds = self._bright(gen)
        out = make_shift_variant(ds, 0, seed=1)
        np.testing.assert_array_equal(out.images, ds.images)
        np.testing.assert_array_equal(out.labels, ds.labels)

    def test_rotation_90_is_index_permutation(self):
        """Independent check: 90 degrees must equal np.rot90 per image."""
        gen = np.random.default_rng(89)
        ds = self._bright(gen)
        out = make_shift_variant(ds, 90, seed=1)
        expected = np.stack([np.rot90(img, k=-1) for img in ds.images])
        np.testing.assert_array_equal(out.images, expected)

    def test_all_zero_image_becomes_uniform_noise(self):
        ds = ImageDataset(np.zeros((2, 6, 6)), np.array([0, 1]))
        out = make_shift_variant(ds, 0, seed=5)
        assert (out.images > 0.0).all() and (out.images <= 1.0).all()
        assert np.unique(out.images).size > 30  # actually random, not constant

    def test_rotation_45_fills_corners_in_range(self):
        gen = np.random.default_rng(97)
        ds = self._bright(gen, side=9)
        out = make_shift_variant(ds, 45, seed=2)
        assert (out.images >= 0.0).all() and (out.images <= 1.0).all()

    def test_deterministic_given_seed(self):
        gen = np.random.default_rng(101)
        images = gen.uniform(0.0, 1.0, size=(4, 8, 8))
        ds = ImageDataset(images, gen.integers(0, 10, 4))
        a = make_shift_variant(ds, 45, seed=7)
        b = make_shift_variant(ds, 45, seed=7)
        np.testing.assert_array_equal(a.images, b.images)
        c = make_shift_variant(ds, 45, seed=8)
        assert not np.array_equal(a.images, c.images)

    def test_unsupported_angle(self):
        ds = ImageDataset(np.zeros((1, 4, 4)), np.array([0]))
        with pytest.raises(DataError):
            make_shift_variant(ds, 30, seed=0)


class TestDisjointSplit:
    def test_near_equal_sizes(self):
        ds = ImageDataset(np.zeros((60000 // 100, 2, 2)), np.zeros(600, dtype=int))
        parts = disjoint_split(ds, 3, seed=0)
        assert [len(p) for p in parts] == [200, 200, 200]

    def test_disjoint_and_covering(self):
        gen = np.random.default_rng(103)
        n = 31  # not divisible by 3
        images = gen.uniform(0.0, 1.0, size=(n, 2, 2))
        # unique pixel signatures so membership is checkable
        images[:, 0, 0] = np.arange(n) / n
        ds = ImageDataset(images, gen.integers(0, 10, n))
        for seed in range(5):
            parts = disjoint_split(ds, 3, seed=seed)
            sigs = [set(np.round(p.images[:, 0, 0] * n).astype(int)) for p in parts]
            assert sum(len(s) for s in sigs) == n
            assert set().union(*sigs) == set(range(n))

    def test_deterministic(self):
        gen = np.random.default_rng(107)
        ds = ImageDataset(gen.uniform(0, 1, (30, 2, 2)), gen.integers(0, 10, 30))
        a = disjoint_split(ds, 3, seed=11)
        b = disjoint_split(ds, 3, seed=11)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.images, pb.images)

    def test_too_small(self):
        ds = ImageDataset(np.zeros((2, 2, 2)), np.zeros(2, dtype=int))
        with pytest.raises(DataError):
            disjoint_split(ds, 3, seed=0)


class TestNextBatch:
    def _variants(self, gen, k=3, n=50, d=4):
        return [
            FeatureDataset(gen.standard_normal((n, d)) + j, np.full(n, j % 10))
            for j in range(k)
        ]

    def test_segment_selection(self):
        gen = np.random.default_rng(109)
        variants = self._variants(gen)
        schedule = ShiftSchedule(segments=((0, 10), (1, 10), (2, 10)), batch_size=4, seed=0)
        assert next_batch(schedule, variants, 0).labels[0] == 0
        assert next_batch(schedule, variants, 9).labels[0] == 0
        assert next_batch(schedule, variants, 10).labels[0] == 1  # boundary
        assert next_batch(schedule, variants, 29).labels[0] == 2

    def test_deterministic_per_step(self):
        gen = np.random.default_rng(113)
        variants = self._variants(gen)
        schedule = ShiftSchedule(segments=((0, 5),), batch_size=8, seed=3)
        a = next_batch(schedule, variants, 2)
        b = next_batch(schedule, variants, 2)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        c = next_batch(schedule, variants, 3)
        assert not np.array_equal(a.features, c.features)

    def test_exhausted(self):
        gen = np.random.default_rng(127)
        variants = self._variants(gen)
        schedule = ShiftSchedule(segments=((0, 5),), batch_size=2, seed=0)
        with pytest.raises(DataError):
            next_batch(schedule, variants, 5)

    def test_image_variants_flattened(self):
        gen = np.random.default_rng(131)
        ds = ImageDataset(gen.uniform(0, 1, (20, 3, 3)), gen.integers(0, 10, 20))
        schedule = ShiftSchedule(segments=((0, 4),), batch_size=6, seed=1)
        batch = next_batch(schedule, [ds], 0)
        assert batch.features.shape == (6, 9)


class TestSyntheticShiftStream:
    def test_segment_means_differ_by_rotation(self):
        variants, _ = synthetic_shift_stream(
            6, 4, 2, seed=5, rotation_deg=90.0, samples_per_segment=6000, noise=0.3
        )
        means = []
        for v in variants:
            means.append(
                np.stack([v.features[v.labels == c].mean(axis=0) for c in range(4)])
            )
        rotated = rotate_plane(means[0], 90.0)
        np.testing.assert_allclose(means[1], rotated, atol=0.05)

    def test_classifier_crossover_near_chance(self):
        """A reference fit on segment 0 collapses on the rotated segment."""
        from sklearn.linear_model import LogisticRegression

        variants, _ = synthetic_shift_stream(
            8, 10, 2, seed=7, rotation_deg=90.0, samples_per_segment=4000
        )
        clf = LogisticRegression(max_iter=300).fit(
            variants[0].features, variants[0].labels
        )
        in_dist = clf.score(variants[0].features, variants[0].labels)
        shifted = clf.score(variants[1].features, variants[1].labels)
        assert in_dist > 0.7
        assert shifted < 0.2  # chance is 0.1

    def test_deterministic(self):
        a, sa = synthetic_shift_stream(4, 3, 2, seed=9)
        b, sb = synthetic_shift_stream(4, 3, 2, seed=9)
        for va, vb in zip(a, b):
            np.testing.assert_array_equal(va.features, vb.features)
            np.testing.assert_array_equal(va.labels, vb.labels)
        assert sa == sb

    def test_validation(self):
        with pytest.raises(DataError):
            synthetic_shift_stream(1, 3, 2, seed=0)
        with pytest.raises(DataError):
            synthetic_shift_stream(4, 1, 2, seed=0)
        with pytest.raises(DataError):
            synthetic_shift_stream(4, 3, 2, seed=0, angles=[0.0])


class TestScheduleValidation:
    def test_bad_segments(self):
        with pytest.raises(DataError):
            ShiftSchedule(segments=(), batch_size=4, seed=0)
        with pytest.raises(DataError):
            ShiftSchedule(segments=((0, 0),), batch_size=4, seed=0)
        with pytest.raises(DataError):
            ShiftSchedule(segments=((0, 5),), batch_size=0, seed=0)

    def test_dataset_invariants(self):
        with pytest.raises(DataError):
            ImageDataset(np.full((1, 2, 2), 1.5), np.array([0]))
        with pytest.raises(DataError):
            ImageDataset(np.zeros((1, 2, 2)), np.array([11]))
        with pytest.raises(DataError):
            ImageDataset(np.zeros((2, 2, 2)), np.array([0]))
