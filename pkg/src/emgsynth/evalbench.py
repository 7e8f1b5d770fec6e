"""Experimental protocols at desk scale.

Three studies mirror the intended use of the model:
  * similarity: metric triple (DTW, FFT MSE, EECC) between generated and
    real signals matched by conditioning sequence;
  * augmentation: gesture classifiers trained on real-only (RR),
    generated-only (GR), and mixed (MR) data, all tested on one held-out
    real split;
  * ablation: the architecture variants trained under one budget and scored
    with the metric triple on held-out conditioning sequences.

All protocols are deterministic given (seed, config); reports carry a config
hash so runs can be tied back to their exact settings.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifiers import ConvWindowClassifier, LinearWindowClassifier
from .dataset import (
    EmgSequence,
    PairedSample,
    normalize_sample,
    split_samples_by_tag,
    window_pairs,
)
from .metrics import envelope_cc, fast_dtw, fft_mse
from .model import VARIANTS, Synthesizer, load_checkpoint
from .training import TrainConfig, train

MODES = ("RR", "GR", "MR")
CLASSIFIER_KINDS = ("linear", "smallconv")


class EvalError(ValueError):
    pass


def default_envelope_window(sample_rate_hz):
    """~50 ms of samples, forced odd (101 at 2 kHz)."""
    w = max(3, int(round(0.05 * sample_rate_hz)))
    return w + 1 if w % 2 == 0 else w


def config_hash(obj):
    """Short stable hash of any JSON-representable config object."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    kind: str
    columns: tuple
    rows: list
    seeds: tuple = ()
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def write_csv(self, path):
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt_cell(row.get(c, "")) for c in self.columns) + "\n")
        return path

    def render_text(self, title=None):
        header = [str(c) for c in self.columns]
        body = [[_fmt_cell(row.get(c, "")) for c in self.columns] for row in self.rows]
        widths = [
            max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
            for i in range(len(header))
        ]
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        lines = []
        if title:
            lines += [title, rule]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        lines.append(rule)
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
        if self.config_hash:
            lines += [rule, f"seeds={list(self.seeds)}  config={self.config_hash}"]
        return "\n".join(lines)


def _fmt_cell(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


# ---------------------------------------------------------------------------
# classifier factory
# ---------------------------------------------------------------------------


def train_classifier(windows, labels, kind, seed=0, **kwargs):
    """Fit a reference classifier on labeled EMG windows (arrays (L, C))."""
    if kind == "linear":
        return LinearWindowClassifier(seed=seed, **kwargs).fit(windows, labels)
    if kind == "smallconv":
        d_e = np.asarray(windows[0]).shape[1]
        n_classes = int(np.unique(labels).size)
        return ConvWindowClassifier(d_e, n_classes, seed=seed, **kwargs).fit(windows, labels)
    raise EvalError(f"unknown classifier kind {kind!r}")


# ---------------------------------------------------------------------------
# similarity protocol
# ---------------------------------------------------------------------------


def evaluate_generation(synth, samples, stats=None, seed=0, envelope_window=None,
                        dtw_radius=1):
    """Metric triple per held-out sample: generate from its angles, compare.

    Returns (summary means dict, per-sample rows). ``stats`` normalizes the
    real EMG into the model's output space when given.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    rows = []
    for i, s in enumerate(samples):
        real = normalize_sample(s, stats) if stats is not None else s
        gen = synth.generate(s.angles.values, rng=rng)
        w = envelope_window or default_envelope_window(s.emg.sample_rate_hz)
        rows.append(
            {
                "pair": i,
                "dtw": fast_dtw(gen, real.emg.values, radius=dtw_radius),
                "fft_mse": fft_mse(gen, real.emg.values),
                "eecc": envelope_cc(gen, real.emg.values, w),
            }
        )
    summary = {k: float(np.mean([r[k] for r in rows])) for k in ("dtw", "fft_mse", "eecc")}
    return summary, rows


def run_similarity_report(real_set, generated_set, envelope_window=None,
                          dtw_radius=1, seed=0):
    """Mean DTW / FFT MSE / EECC over pairs matched by conditioning sequence.

    ``real_set`` and ``generated_set`` are equal-length lists of (T, C)
    arrays (or EmgSequence) where index i of both came from the same angle
    sequence.
    """
    if len(real_set) != len(generated_set):
        raise EvalError(
            f"unmatched pair counts: {len(real_set)} real vs {len(generated_set)} generated"
        )
    if not real_set:
        raise EvalError("empty pair lists")
    rows = []
    for i, (r, g) in enumerate(zip(real_set, generated_set)):
        rv = r.values if isinstance(r, EmgSequence) else np.asarray(r)
        gv = g.values if isinstance(g, EmgSequence) else np.asarray(g)
        if envelope_window is None:
            sr = r.sample_rate_hz if isinstance(r, EmgSequence) else 2000.0
            w = default_envelope_window(sr)
        else:
            w = envelope_window
        rows.append(
            {
                "pair": i,
                "dtw": fast_dtw(gv, rv, radius=dtw_radius),
                "fft_mse": fft_mse(gv, rv),
                "eecc": envelope_cc(gv, rv, w),
            }
        )
    mean_row = {"pair": "mean"}
    mean_row.update(
        {k: float(np.mean([r[k] for r in rows])) for k in ("dtw", "fft_mse", "eecc")}
    )
    return ExperimentReport(
        kind="similarity",
        columns=("pair", "dtw", "fft_mse", "eecc"),
        rows=rows + [mean_row],
        seeds=(seed,),
        config_hash=config_hash(
            {"n_pairs": len(rows), "envelope_window": envelope_window,
             "dtw_radius": dtw_radius}
        ),
        extra={"mean": {k: mean_row[k] for k in ("dtw", "fft_mse", "eecc")}},
    )


# ---------------------------------------------------------------------------
# augmentation protocol (RR / GR / MR)
# ---------------------------------------------------------------------------


@dataclass
class ProtocolSpec:
    modes: tuple = MODES
    classifiers: tuple = CLASSIFIER_KINDS
    seed: int = 0
    n_labels: int = 6
    train_fraction: float = 0.8
    window_frames: int = 16
    window_stride: int = 8

    def __post_init__(self):
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise EvalError(f"unknown modes {bad}; valid: {MODES}")
        if not 0.0 < self.train_fraction < 1.0:
            raise EvalError("train_fraction must be in (0, 1)")


def _windows_of(samples, spec):
    out = []
    for s in samples:
        out.extend(window_pairs(s, spec.window_frames, spec.window_stride))
    return out


def _stratified_split(samples, labels_kept, fraction, rng):
    train, test = [], []
    for lab in labels_kept:
        group = [s for s in samples if s.gesture_label == lab]
        order = rng.permutation(len(group))
        n_train = min(max(int(round(fraction * len(group))), 1), len(group) - 1)
        train += [group[i] for i in order[:n_train]]
        test += [group[i] for i in order[n_train:]]
    return train, test


def run_augmentation_protocol(samples, generator, spec: ProtocolSpec, stats=None):
    """Accuracy table over {RR, GR, MR} x classifiers, one shared real test set.

    RR trains on the real 80% split; GR trains on signals generated from
    that split's angle sequences (never on real EMG — enforced by provenance
    tags); MR trains on the union. All modes are tested on the same held-out
    real windows.
    """
    if isinstance(generator, (str, Path)):
        path = Path(generator)
        if not path.exists():
            raise EvalError(f"missing checkpoint: {path}")
        generator, _, _ = load_checkpoint(path)
    labels = sorted({s.gesture_label for s in samples})
    if len(labels) < 2:
        raise EvalError(f"need at least 2 gesture labels, found {len(labels)}")
    kept = labels[: spec.n_labels]
    subset = [s for s in samples if s.gesture_label in kept]
    if stats is not None:
        subset = [normalize_sample(s, stats) for s in subset]

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 23]))
    train_real, test_real = _stratified_split(subset, kept, spec.train_fraction, rng)

    gen_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 101]))
    synth_samples = []
    for s in train_real:
        gen = generator.generate(s.angles.values, rng=gen_rng)
        synth_samples.append(
            PairedSample(
                angles=s.angles,
                emg=EmgSequence(gen, s.emg.sample_rate_hz),
                gesture_label=s.gesture_label,
                subject_id=s.subject_id,
                split=s.split,
                provenance="synthetic",
            )
        )

    rr_windows = _windows_of(train_real, spec)
    gr_windows = _windows_of(synth_samples, spec)
    test_windows = _windows_of(test_real, spec)
    if any(w.provenance != "synthetic" for w in gr_windows):
        raise EvalError("GR training set contains real data")
    if any(w.provenance != "real" for w in test_windows):
        raise EvalError("test split contains synthetic data")

    mode_sets = {
        "RR": rr_windows,
        "GR": gr_windows,
        "MR": rr_windows + gr_windows,
    }
    test_x = [w.emg.values for w in test_windows]
    test_y = [w.gesture_label for w in test_windows]
    test_digest = hashlib.sha256(
        np.ascontiguousarray(np.stack(test_x)).tobytes()
    ).hexdigest()[:12]

    rows = []
    for kind in spec.classifiers:
        row = {"classifier": kind}
        for mode in spec.modes:
            ws = mode_sets[mode]
            clf = train_classifier(
                [w.emg.values for w in ws], [w.gesture_label for w in ws],
                kind, seed=spec.seed,
            )
            row[mode] = 100.0 * clf.accuracy(test_x, test_y)
        rows.append(row)
    avg = {"classifier": "average"}
    for mode in spec.modes:
        avg[mode] = float(np.mean([r[mode] for r in rows]))
    rows.append(avg)

    return ExperimentReport(
        kind="augmentation",
        columns=("classifier",) + tuple(spec.modes),
        rows=rows,
        seeds=(spec.seed,),
        config_hash=config_hash(asdict(spec)),
        extra={
            "test_digest": test_digest,
            "n_train_real": len(rr_windows),
            "n_train_synth": len(gr_windows),
            "n_test": len(test_windows),
            "labels": kept,
            "units": "accuracy %",
        },
    )


# ---------------------------------------------------------------------------
# ablation protocol
# ---------------------------------------------------------------------------

ABLATION_ORDER = ("no_angle_encoder", "no_gru", "no_ang2gist", "no_discriminator", "full")


def run_ablation(train_windows, eval_samples, model_cfg, train_cfg: TrainConfig,
                 variants=ABLATION_ORDER, seeds=(0, 1, 2), stats=None,
                 envelope_window=None, dtw_radius=1):
    """Train every variant under one budget; score on held-out sequences.

    Returns a report with one row per variant: the median over seeds of the
    mean DTW / FFT MSE / EECC triple. Per-seed values are kept in
    ``extra['per_seed']``.
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise EvalError(f"unknown variants {unknown}; valid: {VARIANTS}")
    if stats is not None:
        eval_samples = [normalize_sample(s, stats) for s in eval_samples]
    per_seed = {}
    rows = []
    for variant in variants:
        triples = []
        for seed in seeds:
            mc = replace(model_cfg, variant=variant, seed=seed)
            tc = replace(train_cfg, seed=seed)
            synth, _, _ = train(train_windows, mc, tc)
            summary, _ = evaluate_generation(
                synth, eval_samples, seed=seed,
                envelope_window=envelope_window, dtw_radius=dtw_radius,
            )
            triples.append(summary)
        per_seed[variant] = triples
        rows.append(
            {
                "variant": variant,
                "dtw": float(np.median([t["dtw"] for t in triples])),
                "fft_mse": float(np.median([t["fft_mse"] for t in triples])),
                "eecc": float(np.median([t["eecc"] for t in triples])),
            }
        )
    return ExperimentReport(
        kind="ablation",
        columns=("variant", "dtw", "fft_mse", "eecc"),
        rows=rows,
        seeds=tuple(seeds),
        config_hash=config_hash(
            {"model": asdict(model_cfg), "train": asdict(train_cfg),
             "variants": list(variants)}
        ),
        extra={"per_seed": per_seed},
    )
