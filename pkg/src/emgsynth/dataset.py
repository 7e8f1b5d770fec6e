"""Paired kinematics/EMG dataset: in-memory types and the on-disk directory format.

A dataset directory holds a ``manifest`` text file (INI-style sections) plus
one raw binary per stored sequence: little-endian float32, row-major
[time x channel], extension ``.f32``. Values are stored unnormalized;
per-channel z-score statistics (computed on the training split only) live in
the manifest so normalization is reproducible and exactly invertible.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------


@dataclass
class JointAngleSequence:
    """T x d_j matrix of joint angles in radians plus its frame rate."""

    values: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 2 or self.values.shape[1] < 1:
            raise DatasetError(f"angle matrix must be T>=2 by d_j>=1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("angle matrix contains non-finite values")
        if not self.frame_rate_hz > 0:
            raise DatasetError("frame_rate_hz must be positive")

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def d_j(self):
        return self.values.shape[1]


@dataclass
class EmgSequence:
    """T_e x d_e matrix of EMG samples plus its sample rate."""

    values: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 2 or self.values.shape[1] < 1:
            raise DatasetError(f"EMG matrix must be T_e>=2 by d_e>=1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("EMG matrix contains non-finite values")
        if not self.sample_rate_hz > 0:
            raise DatasetError("sample_rate_hz must be positive")

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def d_e(self):
        return self.values.shape[1]


@dataclass
class PairedSample:
    """One (angles, EMG) pair with gesture/subject labels.

    ``envelope`` optionally carries a known activation envelope aligned with
    the EMG samples (synthetic data stores it for test oracles).
    """

    angles: JointAngleSequence
    emg: EmgSequence
    gesture_label: int
    subject_id: int
    split: str = "train"
    envelope: np.ndarray | None = None
    provenance: str = "real"

    def __post_init__(self):
        if self.gesture_label < 0 or self.subject_id < 0:
            raise DatasetError("labels and subject ids must be >= 0")
        u = self.upsample_factor
        if abs(self.emg.n_samples - self.angles.n_frames * u) >= u:
            raise DatasetError(
                f"EMG length {self.emg.n_samples} does not match {self.angles.n_frames} "
                f"angle frames within one frame (upsample factor {u})"
            )

    @property
    def upsample_factor(self):
        return int(round(self.emg.sample_rate_hz / self.angles.frame_rate_hz))


@dataclass
class NormStats:
    """Per-channel z-score statistics, taken from the training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise DatasetError("mean/std length mismatch")


@dataclass
class DatasetManifest:
    d_j: int
    d_e: int
    frame_rate_hz: float
    sample_rate_hz: float
    stats: NormStats | None = None
    entries: list = field(default_factory=list)  # list of dict per sample
    extra: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def compute_norm_stats(samples):
    """Per-channel mean/std over the concatenated EMG of the given samples."""
    if not samples:
        raise DatasetError("cannot compute statistics from an empty sample list")
    stacked = np.concatenate([s.emg.values for s in samples], axis=0)
    return NormStats(mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def normalize_emg(emg: EmgSequence, stats: NormStats) -> EmgSequence:
    """Per-channel z-score: (x - mean) / std."""
    bad = np.flatnonzero(stats.std <= 0)
    if bad.size:
        raise DatasetError(f"zero standard deviation in channel {int(bad[0])}")
    return EmgSequence((emg.values - stats.mean) / stats.std, emg.sample_rate_hz)


def denormalize_emg(emg: EmgSequence, stats: NormStats) -> EmgSequence:
    return EmgSequence(emg.values * stats.std + stats.mean, emg.sample_rate_hz)


def normalize_sample(sample: PairedSample, stats: NormStats) -> PairedSample:
    return PairedSample(
        angles=sample.angles,
        emg=normalize_emg(sample.emg, stats),
        gesture_label=sample.gesture_label,
        subject_id=sample.subject_id,
        split=sample.split,
        envelope=sample.envelope,
        provenance=sample.provenance,
    )


# ---------------------------------------------------------------------------
# splitting and windowing
# ---------------------------------------------------------------------------


def split_dataset(samples, ratios, seed):
    """Shuffle by seed and partition into (train, val, test).

    Val/test sizes are floors of n*ratio; the remainder goes to train.
    """
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x <= 0 for x in r):
        raise DatasetError("ratios must be three positive numbers")
    if abs(sum(r) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {sum(r)}")
    n = len(samples)
    if n < 3:
        raise DatasetError(f"need at least 3 samples to split, got {n}")
    n_val = math.floor(n * r[1])
    n_test = math.floor(n * r[2])
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in perm[:n_train]]
    val = [samples[i] for i in perm[n_train : n_train + n_val]]
    test = [samples[i] for i in perm[n_train + n_val :]]
    return train, val, test


def window_pairs(sample: PairedSample, window_frames: int, stride_frames: int):
    """Slice one pair into fixed-length windows (labels/subject inherited)."""
    T = sample.angles.n_frames
    if not 1 <= window_frames <= T:
        raise DatasetError(f"window of {window_frames} frames does not fit sequence of {T}")
    if stride_frames < 1:
        raise DatasetError("stride must be >= 1")
    u = sample.upsample_factor
    out = []
    for start in range(0, T - window_frames + 1, stride_frames):
        e_lo, e_hi = start * u, (start + window_frames) * u
        if e_hi > sample.emg.n_samples:
            raise DatasetError("EMG too short for the requested window range")
        out.append(
            PairedSample(
                angles=JointAngleSequence(
                    sample.angles.values[start : start + window_frames],
                    sample.angles.frame_rate_hz,
                ),
                emg=EmgSequence(sample.emg.values[e_lo:e_hi], sample.emg.sample_rate_hz),
                gesture_label=sample.gesture_label,
                subject_id=sample.subject_id,
                split=sample.split,
                envelope=None if sample.envelope is None else sample.envelope[e_lo:e_hi],
                provenance=sample.provenance,
            )
        )
    return out


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------


def _write_f32(path, array):
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def _read_f32(path, shape):
    data = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise DatasetError(
            f"{path.name}: declared shape {tuple(shape)} needs {expected} floats, "
            f"file holds {data.size}"
        )
    return data.reshape(shape).astype(np.float64)


def _fmt_floats(values):
    return ",".join(repr(float(v)) for v in values)


def _parse_floats(text):
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def save_dataset(directory, samples, stats=None, extra=None):
    """Write samples + manifest into a directory; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not samples:
        raise DatasetError("refusing to write an empty dataset")
    d_j = samples[0].angles.d_j
    d_e = samples[0].emg.d_e
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["dataset"] = {
        "format": str(FORMAT_VERSION),
        "n_samples": str(len(samples)),
        "d_j": str(d_j),
        "d_e": str(d_e),
        "frame_rate_hz": repr(float(samples[0].angles.frame_rate_hz)),
        "sample_rate_hz": repr(float(samples[0].emg.sample_rate_hz)),
    }
    if extra:
        cp["extra"] = {k: str(v) for k, v in extra.items()}
    if stats is not None:
        cp["normalization"] = {"mean": _fmt_floats(stats.mean), "std": _fmt_floats(stats.std)}
    for idx, s in enumerate(samples):
        tag = f"s{idx:06d}"
        _write_f32(directory / f"{tag}.angles.f32", s.angles.values)
        _write_f32(directory / f"{tag}.emg.f32", s.emg.values)
        section = {
            "angles_file": f"{tag}.angles.f32",
            "angles_shape": f"{s.angles.n_frames},{s.angles.d_j}",
            "emg_file": f"{tag}.emg.f32",
            "emg_shape": f"{s.emg.n_samples},{s.emg.d_e}",
            "label": str(s.gesture_label),
            "subject": str(s.subject_id),
            "split": s.split,
        }
        if s.envelope is not None:
            _write_f32(directory / f"{tag}.envelope.f32", s.envelope)
            section["envelope_file"] = f"{tag}.envelope.f32"
        cp[f"sample:{idx:06d}"] = section
    manifest_path = directory / MANIFEST_NAME
    with open(manifest_path, "w") as fh:
        cp.write(fh)
    return manifest_path


def load_manifest(manifest_path):
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise DatasetError(f"manifest not found: {manifest_path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read(manifest_path)
    if "dataset" not in cp:
        raise DatasetError(f"{manifest_path}: missing [dataset] section")
    ds = cp["dataset"]
    version = int(ds.get("format", "0"))
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format version {version}")
    stats = None
    if "normalization" in cp:
        stats = NormStats(
            mean=_parse_floats(cp["normalization"]["mean"]),
            std=_parse_floats(cp["normalization"]["std"]),
        )
    entries = []
    for section in cp.sections():
        if not section.startswith("sample:"):
            continue
        sec = cp[section]
        entries.append(
            {
                "index": int(section.split(":")[1]),
                "angles_file": sec["angles_file"],
                "angles_shape": tuple(int(v) for v in sec["angles_shape"].split(",")),
                "emg_file": sec["emg_file"],
                "emg_shape": tuple(int(v) for v in sec["emg_shape"].split(",")),
                "label": int(sec["label"]),
                "subject": int(sec["subject"]),
                "split": sec.get("split", "train"),
                "envelope_file": sec.get("envelope_file"),
            }
        )
    entries.sort(key=lambda e: e["index"])
    manifest = DatasetManifest(
        d_j=int(ds["d_j"]),
        d_e=int(ds["d_e"]),
        frame_rate_hz=float(ds["frame_rate_hz"]),
        sample_rate_hz=float(ds["sample_rate_hz"]),
        stats=stats,
        entries=entries,
        extra=dict(cp["extra"]) if "extra" in cp else {},
    )
    return manifest, manifest_path.parent


def load_dataset(manifest_path):
    """Load all samples in manifest order, values exactly as stored.

    Returns (manifest, samples). Missing files, shape mismatches, and
    non-finite values are reported with the offending sample index.
    """
    manifest, root = load_manifest(manifest_path)
    samples = []
    for entry in manifest.entries:
        idx = entry["index"]
        try:
            a_path = root / entry["angles_file"]
            e_path = root / entry["emg_file"]
            for p in (a_path, e_path):
                if not p.exists():
                    raise DatasetError(f"missing file {p}")
            angles = _read_f32(a_path, entry["angles_shape"])
            emg = _read_f32(e_path, entry["emg_shape"])
            envelope = None
            if entry["envelope_file"]:
                envelope = _read_f32(root / entry["envelope_file"], entry["emg_shape"])
            samples.append(
                PairedSample(
                    angles=JointAngleSequence(angles, manifest.frame_rate_hz),
                    emg=EmgSequence(emg, manifest.sample_rate_hz),
                    gesture_label=entry["label"],
                    subject_id=entry["subject"],
                    split=entry["split"],
                    envelope=envelope,
                )
            )
        except DatasetError as err:
            raise DatasetError(f"sample {idx}: {err}") from None
    return manifest, samples


def split_samples_by_tag(samples):
    """Group already-assigned samples by their recorded split tag."""
    groups = {"train": [], "val": [], "test": []}
    for s in samples:
        groups.setdefault(s.split, []).append(s)
    return groups["train"], groups["val"], groups["test"]
