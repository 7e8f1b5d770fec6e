"""Static figure output: real/generated signal overlays and loss curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "emgsynth"  # deterministic element ids

import matplotlib.pyplot as plt
import numpy as np

from .metrics import envelope
from .evalbench import default_envelope_window


def plot_pair_overlay(out_svg, real, generated, sample_rate_hz,
                      envelope_window=None, title=None):
    """One subplot per channel: real and generated traces plus envelopes."""
    real = np.asarray(real, dtype=np.float64)
    generated = np.asarray(generated, dtype=np.float64)
    if real.ndim == 1:
        real = real[:, None]
    if generated.ndim == 1:
        generated = generated[:, None]
    if real.shape != generated.shape:
        raise ValueError(f"shape mismatch: real {real.shape} vs generated {generated.shape}")
    w = envelope_window or default_envelope_window(sample_rate_hz)
    t = np.arange(real.shape[0]) / sample_rate_hz
    n_ch = real.shape[1]
    fig, axes = plt.subplots(n_ch, 1, figsize=(9, 1.9 * n_ch), sharex=True, squeeze=False)
    env_r = envelope(real, w)
    env_g = envelope(generated, w)
    for c in range(n_ch):
        ax = axes[c, 0]
        ax.plot(t, real[:, c], color="0.65", lw=0.5, label="real")
        ax.plot(t, generated[:, c], color="tab:orange", lw=0.5, alpha=0.7, label="generated")
        ax.plot(t, env_r[:, c], color="black", lw=1.2, label="real envelope")
        ax.plot(t, env_g[:, c], color="tab:red", lw=1.2, label="generated envelope")
        ax.set_ylabel(f"ch {c}")
        if c == 0:
            ax.legend(loc="upper right", fontsize=7, ncol=4)
    axes[-1, 0].set_xlabel("time [s]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    out_svg = Path(out_svg)
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_svg


def write_series_csv(out_csv, real, generated, sample_rate_hz, envelope_window=None):
    """The series behind the overlay plot, one row per sample."""
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    generated = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if real.shape[0] == 1:
        real, generated = real.T, generated.T
    w = envelope_window or default_envelope_window(sample_rate_hz)
    env_r = envelope(real, w)
    env_g = envelope(generated, w)
    t = np.arange(real.shape[0]) / sample_rate_hz
    cols = ["t"]
    series = [t]
    for c in range(real.shape[1]):
        cols += [f"real_{c}", f"gen_{c}", f"real_env_{c}", f"gen_env_{c}"]
        series += [real[:, c], generated[:, c], env_r[:, c], env_g[:, c]]
    data = np.column_stack(series)
    out_csv = Path(out_csv)
    with open(out_csv, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return out_csv


def plot_loss_curves(out_svg, history):
    """Per-epoch mean losses from train() history rows."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, style in (("disc_loss", "-"), ("gen_loss", "--"), ("kl", ":")):
        ax.plot(epochs, [h[key] for h in history], style, label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    out_svg = Path(out_svg)
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_svg
