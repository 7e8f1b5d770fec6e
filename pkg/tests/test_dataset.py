"""Dataset types, normalization, splitting, windowing, and the disk format."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emgsynth.dataset import (
    DatasetError,
    EmgSequence,
    JointAngleSequence,
    NormStats,
    PairedSample,
    compute_norm_stats,
    denormalize_emg,
    load_dataset,
    normalize_emg,
    save_dataset,
    split_dataset,
    window_pairs,
)


def _make_sample(T=10, d_j=3, d_e=2, u=4, label=0, subject=0, seed=0):
    rng = np.random.default_rng(seed)
    return PairedSample(
        angles=JointAngleSequence(rng.normal(size=(T, d_j)), 50.0),
        emg=EmgSequence(rng.normal(size=(T * u, d_e)), 50.0 * u),
        gesture_label=label,
        subject_id=subject,
    )


class TestSequenceTypes:
    def test_angle_shape_validation(self):
        with pytest.raises(DatasetError):
            JointAngleSequence(np.zeros((1, 3)), 50.0)  # T < 2
        with pytest.raises(DatasetError):
            JointAngleSequence(np.zeros(5), 50.0)  # not 2-D

    def test_nonfinite_rejected(self):
        bad = np.zeros((4, 2))
        bad[1, 1] = np.nan
        with pytest.raises(DatasetError):
            JointAngleSequence(bad, 50.0)
        bad[1, 1] = np.inf
        with pytest.raises(DatasetError):
            EmgSequence(bad, 2000.0)

    def test_rates_must_be_positive(self):
        with pytest.raises(DatasetError):
            JointAngleSequence(np.zeros((4, 2)), 0.0)
        with pytest.raises(DatasetError):
            EmgSequence(np.zeros((4, 2)), -1.0)

    def test_upsample_factor(self):
        s = _make_sample(u=4)
        assert s.upsample_factor == 4

    def test_length_mismatch_rejected(self):
        with pytest.raises(DatasetError, match="does not match"):
            PairedSample(
                angles=JointAngleSequence(np.zeros((10, 3)), 50.0),
                emg=EmgSequence(np.zeros((20, 2)), 200.0),  # expect ~40
                gesture_label=0,
                subject_id=0,
            )

    def test_negative_label_rejected(self):
        with pytest.raises(DatasetError):
            _make_sample(label=-1)


class TestNormalization:
    def test_constant_channel_centers_to_zero(self):
        emg = EmgSequence(np.full((6, 2), 3.5), 100.0)
        stats = NormStats(mean=[3.5, 3.5], std=[1.0, 1.0])
        out = normalize_emg(emg, stats)
        np.testing.assert_array_equal(out.values, np.zeros((6, 2)))

    def test_mean_plus_std_maps_to_one(self):
        stats = NormStats(mean=[2.0, -1.0], std=[0.5, 4.0])
        emg = EmgSequence(np.tile(stats.mean + stats.std, (4, 1)), 100.0)
        out = normalize_emg(emg, stats)
        np.testing.assert_allclose(out.values, np.ones((4, 2)))

    def test_hand_case(self):
        emg = EmgSequence(np.array([[1.0], [3.0]]), 100.0)
        out = normalize_emg(emg, NormStats(mean=[2.0], std=[1.0]))
        np.testing.assert_allclose(out.values, [[-1.0], [1.0]])

    def test_zero_std_names_channel(self):
        emg = EmgSequence(np.zeros((4, 3)), 100.0)
        with pytest.raises(DatasetError, match="channel 1"):
            normalize_emg(emg, NormStats(mean=[0, 0, 0], std=[1.0, 0.0, 1.0]))

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(1)
        emg = EmgSequence(rng.normal(loc=5.0, scale=3.0, size=(50, 4)), 100.0)
        stats = NormStats(mean=emg.values.mean(axis=0), std=emg.values.std(axis=0))
        back = denormalize_emg(normalize_emg(emg, stats), stats)
        np.testing.assert_allclose(back.values, emg.values, rtol=1e-6)

    def test_compute_norm_stats(self):
        samples = [_make_sample(seed=i) for i in range(3)]
        stats = compute_norm_stats(samples)
        stacked = np.concatenate([s.emg.values for s in samples])
        np.testing.assert_allclose(stats.mean, stacked.mean(axis=0))
        np.testing.assert_allclose(stats.std, stacked.std(axis=0))
        with pytest.raises(DatasetError):
            compute_norm_stats([])


class TestSplitDataset:
    def test_ten_samples_eight_one_one(self):
        samples = [_make_sample(seed=i, label=i) for i in range(10)]
        tr, va, te = split_dataset(samples, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_large_count_floor_sizes(self):
        # floor sizing for val/test, remainder to train
        n = 25253
        ang = JointAngleSequence(np.zeros((2, 1)), 50.0)
        emg = EmgSequence(np.zeros((8, 1)), 200.0)
        samples = [
            PairedSample(angles=ang, emg=emg, gesture_label=0, subject_id=0)
            for _ in range(n)
        ]
        tr, va, te = split_dataset(samples, (0.8, 0.1, 0.1), seed=3)
        assert (len(tr), len(va), len(te)) == (20203, 2525, 2525)
        assert math.floor(n * 0.1) == 2525

    def test_deterministic(self):
        samples = [_make_sample(seed=i, label=i) for i in range(12)]
        a = split_dataset(samples, (0.8, 0.1, 0.1), seed=5)
        b = split_dataset(samples, (0.8, 0.1, 0.1), seed=5)
        for xs, ys in zip(a, b):
            assert [s.gesture_label for s in xs] == [s.gesture_label for s in ys]

    def test_too_few_samples(self):
        with pytest.raises(DatasetError):
            split_dataset([_make_sample(), _make_sample()], (0.8, 0.1, 0.1), 0)

    def test_bad_ratios(self):
        samples = [_make_sample(seed=i) for i in range(5)]
        with pytest.raises(DatasetError):
            split_dataset(samples, (0.8, 0.1, 0.2), 0)
        with pytest.raises(DatasetError):
            split_dataset(samples, (0.9, -0.1, 0.2), 0)

    @given(n=st.integers(3, 60), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_partition_disjoint_and_exhaustive(self, n, seed):
        samples = [_make_sample(seed=i, label=i) for i in range(n)]
        tr, va, te = split_dataset(samples, (0.8, 0.1, 0.1), seed=seed)
        labels = sorted(s.gesture_label for part in (tr, va, te) for s in part)
        assert labels == list(range(n))  # exhaustive, no duplicates


class TestWindowPairs:
    def test_identity_window(self):
        s = _make_sample(T=10)
        ws = window_pairs(s, 10, 1)
        assert len(ws) == 1
        np.testing.assert_array_equal(ws[0].angles.values, s.angles.values)
        np.testing.assert_array_equal(ws[0].emg.values, s.emg.values)

    def test_enumerated_starts(self):
        s = _make_sample(T=10, u=4)
        ws = window_pairs(s, 4, 3)
        assert len(ws) == 3  # starts 0, 3, 6
        for k, start in enumerate((0, 3, 6)):
            np.testing.assert_array_equal(
                ws[k].angles.values, s.angles.values[start : start + 4]
            )
            np.testing.assert_array_equal(
                ws[k].emg.values, s.emg.values[start * 4 : (start + 4) * 4]
            )

    def test_window_longer_than_sequence(self):
        with pytest.raises(DatasetError):
            window_pairs(_make_sample(T=10), 11, 1)

    def test_bad_stride(self):
        with pytest.raises(DatasetError):
            window_pairs(_make_sample(T=10), 4, 0)

    def test_labels_inherited(self):
        s = _make_sample(T=8, label=3, subject=7)
        for w in window_pairs(s, 4, 2):
            assert w.gesture_label == 3
            assert w.subject_id == 7

    def test_envelope_sliced_alongside(self):
        s = _make_sample(T=8, u=4)
        s.envelope = np.arange(32.0)[:, None] * np.ones((1, 2))
        ws = window_pairs(s, 4, 4)
        np.testing.assert_array_equal(ws[1].envelope[:, 0], np.arange(16.0, 32.0))


class TestDiskFormat:
    def test_round_trip_byte_exact(self, tmp_path):
        samples = [_make_sample(seed=i, label=i % 3, subject=i % 2) for i in range(4)]
        samples[0].envelope = np.abs(samples[0].emg.values)
        stats = compute_norm_stats(samples)
        save_dataset(tmp_path, samples, stats=stats, extra={"origin": "test"})
        manifest, loaded = load_dataset(tmp_path)
        assert len(loaded) == 4
        assert manifest.extra["origin"] == "test"
        np.testing.assert_allclose(manifest.stats.mean, stats.mean)
        for orig, back in zip(samples, loaded):
            # storage is float32: loading what was saved must be bit-exact
            # against the float32 cast of the original
            np.testing.assert_array_equal(
                back.angles.values, np.asarray(orig.angles.values, dtype="<f4")
            )
            np.testing.assert_array_equal(
                back.emg.values, np.asarray(orig.emg.values, dtype="<f4")
            )
            assert back.gesture_label == orig.gesture_label
            assert back.subject_id == orig.subject_id
        assert loaded[0].envelope is not None
        assert loaded[1].envelope is None

    def test_save_load_save_identical_files(self, tmp_path):
        samples = [_make_sample(seed=i) for i in range(3)]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        save_dataset(d1, samples)
        _, loaded = load_dataset(d1)
        save_dataset(d2, loaded)
        for f1 in sorted(d1.glob("*.f32")):
            assert (d2 / f1.name).read_bytes() == f1.read_bytes()

    def test_manifest_order_preserved(self, tmp_path):
        samples = [_make_sample(seed=i, label=i) for i in range(5)]
        save_dataset(tmp_path, samples)
        _, loaded = load_dataset(tmp_path)
        assert [s.gesture_label for s in loaded] == [0, 1, 2, 3, 4]

    def test_missing_file_reported_with_index(self, tmp_path):
        samples = [_make_sample(seed=i) for i in range(3)]
        save_dataset(tmp_path, samples)
        (tmp_path / "s000001.emg.f32").unlink()
        with pytest.raises(DatasetError, match="sample 1.*missing file"):
            load_dataset(tmp_path)

    def test_shape_mismatch_reported(self, tmp_path):
        samples = [_make_sample(T=10, d_e=2, u=4, seed=0)]
        save_dataset(tmp_path, samples)
        # truncate the EMG payload: 40x2 floats declared, write 36 floats
        np.zeros(36, dtype="<f4").tofile(tmp_path / "s000000.emg.f32")
        with pytest.raises(DatasetError, match="sample 0.*80 floats.*36"):
            load_dataset(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest not found"):
            load_dataset(tmp_path / "nowhere")

    def test_split_tags_round_trip(self, tmp_path):
        samples = [_make_sample(seed=i) for i in range(3)]
        samples[1].split = "val"
        samples[2].split = "test"
        save_dataset(tmp_path, samples)
        _, loaded = load_dataset(tmp_path)
        assert [s.split for s in loaded] == ["train", "val", "test"]
