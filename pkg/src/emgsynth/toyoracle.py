"""Deterministic synthetic kinematics->EMG dataset for desk-scale verification.

Each gesture is a template of smooth per-joint sinusoid mixtures; a sample
jitters the template's amplitudes and phases. The EMG oracle is
velocity-rectified: a per-channel activation envelope

    envelope_c(t) = softplus( sum_j M[c, j] * |d theta_j / dt| + b_c )

modulates zero-mean unit-variance band-limited noise. The true envelope is
stored with every sample so tests can check reconstruction against a known
ground truth. Everything is a pure function of the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    DatasetError,
    DatasetManifest,
    EmgSequence,
    JointAngleSequence,
    NormStats,
    PairedSample,
    compute_norm_stats,
    split_dataset,
)
from .nn import softplus

# One sinusoid per joint keeps each joint's speed a deterministic function of
# its own pose (|d theta/dt| = 2 pi f sqrt(amp^2 - (theta-offset)^2)), so a
# per-frame observer can infer the expected activation level from the pose
# alone.  Mixtures of several incommensurate sinusoids would make pose ->
# speed ambiguous and the envelope unidentifiable frame-by-frame.
_COMPONENTS = 1


@dataclass
class ToyOracleConfig:
    d_j: int = 6
    d_e: int = 4
    frame_rate_hz: float = 50.0
    sample_rate_hz: float = 2000.0
    n_gestures: int = 6
    samples_per_gesture: int = 12
    duration_s: float = 3.0
    noise_band_hz: tuple = (20.0, 450.0)
    n_subjects: int = 3
    split_ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if min(self.d_j, self.d_e, self.n_gestures, self.samples_per_gesture, self.n_subjects) < 1:
            raise DatasetError("all dimensions/counts must be positive")
        if self.frame_rate_hz <= 0 or self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise DatasetError("rates and duration must be positive")
        ratio = self.sample_rate_hz / self.frame_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise DatasetError("sample rate must be an integer multiple of the frame rate")
        low, high = self.noise_band_hz
        if not 0.0 <= low < high <= self.sample_rate_hz / 2:
            raise DatasetError("noise band must satisfy 0 <= low < high <= Nyquist")

    @property
    def upsample_factor(self):
        return int(round(self.sample_rate_hz / self.frame_rate_hz))

    @property
    def frames_per_sample(self):
        return int(round(self.duration_s * self.frame_rate_hz))


def oracle_envelope(angle_values, frame_rate_hz, sample_rate_hz, mixing, bias):
    """True activation envelope at EMG rate for given joint trajectories.

    Joint speeds come from central differences at the frame rate; the
    per-frame envelope softplus(M |v| + b) is linearly interpolated onto the
    EMG sample grid.
    """
    theta = np.asarray(angle_values, dtype=np.float64)
    upsample = int(round(sample_rate_hz / frame_rate_hz))
    dt = 1.0 / frame_rate_hz
    speed = np.abs(np.gradient(theta, dt, axis=0))  # (T, d_j)
    env_frames = softplus(speed @ np.asarray(mixing).T + np.asarray(bias))  # (T, d_e)
    T = theta.shape[0]
    t_frames = np.arange(T) / frame_rate_hz
    t_samples = np.arange(T * upsample) / sample_rate_hz
    env = np.empty((T * upsample, env_frames.shape[1]))
    for c in range(env_frames.shape[1]):
        env[:, c] = np.interp(t_samples, t_frames, env_frames[:, c])
    return env


def band_limited_noise(rng, n, sample_rate_hz, band):
    """Zero-mean unit-variance noise restricted to [low, high] Hz."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    shaped = np.fft.irfft(spec, n)
    std = shaped.std()
    if std == 0:
        raise DatasetError("noise band keeps no frequency bins at this length")
    return (shaped - shaped.mean()) / std


def _gesture_templates(cfg, rng):
    """Per gesture: baseline pose offsets plus sinusoid (amp, freq, phase) triples."""
    templates = []
    for _ in range(cfg.n_gestures):
        templates.append(
            {
                "offset": rng.uniform(-0.5, 0.5, cfg.d_j),
                "amp": rng.uniform(0.3, 0.9, (cfg.d_j, _COMPONENTS)),
                "freq": rng.uniform(0.4, 1.6, (cfg.d_j, _COMPONENTS)),
                "phase": rng.uniform(0.0, 2.0 * np.pi, (cfg.d_j, _COMPONENTS)),
            }
        )
    return templates


def _sample_angles(cfg, template, rng):
    T = cfg.frames_per_sample
    t = (np.arange(T) / cfg.frame_rate_hz)[:, None, None]  # (T,1,1)
    amp = template["amp"] * rng.uniform(0.85, 1.15, (cfg.d_j, _COMPONENTS))
    phase = template["phase"] + rng.normal(0.0, 0.2, (cfg.d_j, _COMPONENTS))
    waves = amp * np.sin(2.0 * np.pi * template["freq"] * t + phase)  # (T,d_j,K)
    return template["offset"] + waves.sum(axis=2)


def generate_toy_dataset(cfg: ToyOracleConfig):
    """Build the synthetic dataset; returns (DatasetManifest, samples).

    Samples carry split tags from a seeded 8:1:1 partition (configurable via
    ``split_ratios``) and the manifest holds z-score statistics computed from
    the training split only. Output is bit-reproducible per seed.
    """
    root_ss = np.random.SeedSequence(cfg.seed)
    mix_ss, tmpl_ss, sample_ss, split_ss = root_ss.spawn(4)
    rng_mix = np.random.default_rng(mix_ss)
    # Sparse mixing: each channel is driven by a couple of joints, the way a
    # muscle responds to the joints it actuates.  Summing speeds from many
    # joints would flatten the envelope towards its mean (the fluctuations
    # average out), leaving contrast too weak to survive the amplitude-
    # estimation noise of any |x| smoother; with one or two strong drivers
    # per channel the envelope swings over its full dynamic range at the
    # driving joint's pace.
    mixing = np.zeros((cfg.d_e, cfg.d_j))
    for c in range(cfg.d_e):
        drivers = rng_mix.choice(cfg.d_j, size=2, replace=False)
        mixing[c, drivers] = rng_mix.uniform(0.5, 1.2, size=2)
    bias = rng_mix.uniform(-1.6, -0.8, cfg.d_e)
    templates = _gesture_templates(cfg, np.random.default_rng(tmpl_ss))

    n_total = cfg.n_gestures * cfg.samples_per_gesture
    sample_rngs = [np.random.default_rng(s) for s in sample_ss.spawn(n_total)]
    samples = []
    idx = 0
    for g in range(cfg.n_gestures):
        for k in range(cfg.samples_per_gesture):
            rng = sample_rngs[idx]
            theta = _sample_angles(cfg, templates[g], rng)
            env = oracle_envelope(
                theta, cfg.frame_rate_hz, cfg.sample_rate_hz, mixing, bias
            )
            noise = np.column_stack(
                [
                    band_limited_noise(rng, env.shape[0], cfg.sample_rate_hz, cfg.noise_band_hz)
                    for _ in range(cfg.d_e)
                ]
            )
            samples.append(
                PairedSample(
                    angles=JointAngleSequence(theta, cfg.frame_rate_hz),
                    emg=EmgSequence(env * noise, cfg.sample_rate_hz),
                    gesture_label=g,
                    subject_id=k % cfg.n_subjects,
                    envelope=env,
                )
            )
            idx += 1

    split_seed = int(np.random.default_rng(split_ss).integers(0, 2**31 - 1))
    train, val, test = split_dataset(samples, cfg.split_ratios, split_seed)
    for part, name in ((train, "train"), (val, "val"), (test, "test")):
        for s in part:
            s.split = name
    stats = compute_norm_stats(train)

    entries = []
    for i, s in enumerate(samples):
        tag = f"s{i:06d}"
        entries.append(
            {
                "index": i,
                "angles_file": f"{tag}.angles.f32",
                "angles_shape": (s.angles.n_frames, s.angles.d_j),
                "emg_file": f"{tag}.emg.f32",
                "emg_shape": (s.emg.n_samples, s.emg.d_e),
                "label": s.gesture_label,
                "subject": s.subject_id,
                "split": s.split,
                "envelope_file": f"{tag}.envelope.f32",
            }
        )
    manifest = DatasetManifest(
        d_j=cfg.d_j,
        d_e=cfg.d_e,
        frame_rate_hz=cfg.frame_rate_hz,
        sample_rate_hz=cfg.sample_rate_hz,
        stats=stats,
        entries=entries,
        extra={"generator": "toy-oracle", "seed": str(cfg.seed), "split_seed": str(split_seed)},
    )
    return manifest, samples
