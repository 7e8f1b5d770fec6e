"""Min-max optimization loop: alternating SGD on discriminator and synthesizer.

Each batch takes one discriminator step (genuine pairs scored real; generated
frames and, optionally, genuine frames under the wrong window's conditioning
scored fake) followed by one synthesizer step (adversarial term weighted by
alpha plus the KL regularizer on the context posterior). Everything
downstream of the config seed is deterministic: batch order, noise draws,
parameter updates, logs.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import normalize_sample, window_pairs
from .losses import disc_loss_from_logits, gen_loss_from_logits, kl_loss, kl_loss_grad
from .model import ModelConfig, Synthesizer, build_discriminator, save_checkpoint
from .nn import clip_grads_, load_tensors, save_tensors

LOG_COLUMNS = ("epoch", "batch", "disc_loss", "gen_loss", "kl", "lr")


class TrainingDiverged(RuntimeError):
    """Raised when a loss becomes non-finite; carries epoch/batch context."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    lr: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 5e-4
    alpha: float = 2.0
    lr_drop_epochs: tuple = (21, 24, 27)
    lr_drop_factor: float = 10.0
    seed: int = 0
    clip_norm: float = 10.0
    saturating_gen_loss: bool = False
    mismatched_pairs: bool = True
    window_frames: int = 16
    window_stride: int = 8
    checkpoint_every: int = 0  # epochs between mid-run checkpoints; 0 = final only

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.window_frames < 1 or self.window_stride < 1:
            raise ValueError("window_frames and window_stride must be positive")
        if min(self.lr, self.momentum, self.weight_decay, self.alpha) < 0:
            raise ValueError("lr, momentum, weight_decay, alpha must be >= 0")
        if self.lr <= 0 or self.lr_drop_factor <= 0:
            raise ValueError("lr and lr_drop_factor must be positive")
        drops = tuple(int(e) for e in self.lr_drop_epochs)
        if any(b <= a for a, b in zip(drops, drops[1:])) or any(e < 1 for e in drops):
            raise ValueError("lr_drop_epochs must be strictly increasing and >= 1")
        self.lr_drop_epochs = drops


def lr_at(epoch, cfg: TrainConfig):
    """Step schedule: base rate divided by the drop factor at each drop epoch."""
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    k = sum(1 for d in cfg.lr_drop_epochs if d <= epoch)
    return cfg.lr * cfg.lr_drop_factor ** (-k)


def sgd_update(param, grad, momentum_buf, lr, momentum, weight_decay):
    """One heavy-ball step; returns (new_param, new_buf).

    buf' = momentum * buf + grad + weight_decay * param
    param' = param - lr * buf'
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    momentum_buf = np.asarray(momentum_buf, dtype=np.float64)
    if not (param.shape == grad.shape == momentum_buf.shape):
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, buf {momentum_buf.shape}"
        )
    buf_new = momentum * momentum_buf + grad + weight_decay * param
    return param - lr * buf_new, buf_new


def apply_sgd_(module, buffers, lr, momentum, weight_decay):
    """Update all module parameters in place; buffers keyed by qualified name."""
    grads = dict(module.named_grads())
    for name, param in module.named_parameters():
        buf = buffers.get(name)
        if buf is None:
            buf = np.zeros_like(param)
        p_new, b_new = sgd_update(param, grads[name], buf, lr, momentum, weight_decay)
        param[...] = p_new
        buffers[name] = b_new


# ---------------------------------------------------------------------------
# train state (optimizer buffers + RNG), restorable bit-exactly
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    epoch: int = 0
    gen_buffers: dict = field(default_factory=dict)
    disc_buffers: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)


def save_train_state(path, state: TrainState):
    tensors = {f"gen_buf.{k}": v for k, v in state.gen_buffers.items()}
    tensors.update({f"disc_buf.{k}": v for k, v in state.disc_buffers.items()})
    meta = {"kind": "train-state", "epoch": state.epoch, "rng_state": state.rng_state}
    save_tensors(path, tensors, meta=meta, dtype="<f8")


def load_train_state(path) -> TrainState:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "train-state":
        raise ValueError(f"{path}: not a train-state file")
    state = TrainState(epoch=int(meta["epoch"]), rng_state=meta["rng_state"])
    for name, value in tensors.items():
        group, key = name.split(".", 1)
        target = state.gen_buffers if group == "gen_buf" else state.disc_buffers
        target[key] = np.asarray(value, dtype=np.float64)
    return state


def _capture_rng(rng):
    """PCG64 state as JSON-safe plain ints."""
    s = rng.bit_generator.state
    return {
        "bit_generator": s["bit_generator"],
        "state": {"state": int(s["state"]["state"]), "inc": int(s["state"]["inc"])},
        "has_uint32": int(s["has_uint32"]),
        "uinteger": int(s["uinteger"]),
    }


def _restore_rng(snapshot):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = snapshot
    return rng


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def assemble_windows(samples, cfg: TrainConfig, stats=None):
    """Normalize (optional) and slice samples into fixed-length windows."""
    out = []
    for s in samples:
        if stats is not None:
            s = normalize_sample(s, stats)
        out.extend(window_pairs(s, cfg.window_frames, cfg.window_stride))
    return out


def _stack_windows(windows):
    if not windows:
        raise ValueError("no training windows given")
    T = windows[0].angles.n_frames
    for w in windows:
        if w.angles.n_frames != T:
            raise ValueError("training windows must share one window length")
    S = np.stack([w.angles.values for w in windows])
    X = np.stack([w.emg.values for w in windows])
    return S, X


def train(windows, model_cfg: ModelConfig, cfg: TrainConfig, out_dir=None,
          synth=None, disc=None):
    """Run the full schedule over fixed-length training windows.

    Returns (synth, disc, history) where history holds one dict per epoch
    with mean disc/gen/KL losses and the learning rate. When ``out_dir`` is
    given, writes ``losses.csv`` (one row per batch), an init checkpoint
    captured before any update, optional cadence checkpoints, the final
    checkpoint, and the final optimizer/RNG state.
    """
    S_all, X_all = _stack_windows(windows)
    n, T, _ = S_all.shape
    U = model_cfg.upsample_factor
    if X_all.shape[1] != T * U:
        raise ValueError(
            f"EMG window length {X_all.shape[1]} != {T} frames x upsample {U}"
        )
    if synth is None:
        synth = Synthesizer(model_cfg)
    use_disc = model_cfg.variant != "no_discriminator"
    if use_disc and disc is None:
        disc = build_discriminator(model_cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    state = TrainState(rng_state=_capture_rng(rng))

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = log_writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "checkpoint-init.ckpt", synth, disc,
                        extra_meta={"epoch": 0, "train_config": asdict(cfg)})
        log_fh = open(out_dir / "losses.csv", "w", newline="")
        log_writer = csv.writer(log_fh)
        log_writer.writerow(LOG_COLUMNS)

    d_h, d_noise = model_cfg.d_h, model_cfg.d_noise
    history = []
    try:
        for epoch in range(1, cfg.epochs + 1):
            lr = lr_at(epoch, cfg)
            order = rng.permutation(n)
            sums = np.zeros(3)
            n_batches = 0
            for bi, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                S = S_all[idx]
                X = X_all[idx]
                b = len(idx)
                eps_s = rng.standard_normal((b, d_h))
                eps_t = rng.standard_normal((b, T, d_noise))
                frames, cache = synth.forward_sequence(S, eps_s, eps_t)
                fake_flat = frames.reshape(b * T, U, model_cfg.d_e)
                real = X.reshape(b, T, U, model_cfg.d_e)
                S_aug = frame_conditioning(S)
                s_flat = S_aug.reshape(b * T, 2 * model_cfg.d_j)
                h0_flat = np.repeat(cache["h0"], T, axis=0)

                if use_disc:
                    disc.zero_grad()
                    real_flat = real.reshape(b * T, U, model_cfg.d_e)
                    _, z_real, c_real = disc.forward(real_flat, s_flat, h0_flat)
                    _, z_fake, c_fake = disc.forward(fake_flat, s_flat, h0_flat)
                    c_mis = None
                    if cfg.mismatched_pairs and b >= 2:
                        # Genuine signals paired with another window's pose and
                        # context, scored as fakes.  Real-vs-generated alone
                        # separates on realism tells, so the discriminator is
                        # never forced to price (signal, pose) agreement and
                        # the generator is never graded on tracking the pose;
                        # these pairs make consistency a first-class tell.
                        roll = np.roll(np.arange(b), 1)
                        s_mis = S_aug[roll].reshape(b * T, 2 * model_cfg.d_j)
                        h0_mis = np.repeat(cache["h0"][roll], T, axis=0)
                        _, z_mis, c_mis = disc.forward(real_flat, s_mis, h0_mis)
                        z_fake_all = np.concatenate([z_fake, z_mis])
                    else:
                        z_fake_all = z_fake
                    d_loss, g_zr, g_zf_all = disc_loss_from_logits(z_real, z_fake_all)
                    disc.backward(cfg.alpha * g_zr, c_real)
                    disc.backward(cfg.alpha * g_zf_all[: z_fake.size], c_fake)
                    if c_mis is not None:
                        disc.backward(cfg.alpha * g_zf_all[z_fake.size :], c_mis)
                    clip_grads_(disc, cfg.clip_norm)
                    apply_sgd_(disc, state.disc_buffers, lr, cfg.momentum,
                               cfg.weight_decay)

                    synth.zero_grad()
                    disc.zero_grad()
                    _, z_fake2, c_fake2 = disc.forward(fake_flat, s_flat, h0_flat)
                    g_loss, g_zf2 = gen_loss_from_logits(
                        z_fake2, saturating=cfg.saturating_gen_loss
                    )
                    # The conditioning inputs (s_t, h0) act as fixed context in the
                    # generator update: the adversarial signal reaches the encoder
                    # only through the synthesized frames.  Letting the generator
                    # also steer the discriminator through its conditioning input
                    # opens a degenerate direction that collapses training.
                    gx_flat, _ = disc.backward(cfg.alpha * g_zf2, c_fake2)
                    g_frames = gx_flat.reshape(b, T, U, model_cfg.d_e)
                    g_h0_ext = None
                else:
                    synth.zero_grad()
                    diff = frames - real
                    g_loss = float(np.mean(diff**2))
                    g_frames = cfg.alpha * 2.0 * diff / diff.size
                    g_h0_ext = None
                    d_loss = 0.0

                kl = kl_loss(cache["mu"], cache["sigma_sq"])
                g_mu_kl, g_sig_kl = kl_loss_grad(cache["mu"], cache["sigma_sq"])
                synth.backward_sequence(
                    g_frames, cache,
                    g_h0_ext=g_h0_ext, g_mu_ext=g_mu_kl, g_sigma_ext=g_sig_kl,
                )
                clip_grads_(synth, cfg.clip_norm)
                apply_sgd_(synth, state.gen_buffers, lr, cfg.momentum,
                           cfg.weight_decay)

                if not np.isfinite([d_loss, g_loss, kl]).all():
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} batch {bi}: "
                        f"disc={d_loss} gen={g_loss} kl={kl}"
                    )
                sums += (d_loss, g_loss, kl)
                n_batches += 1
                if log_writer is not None:
                    log_writer.writerow(
                        [epoch, bi, repr(d_loss), repr(float(g_loss)), repr(kl), repr(lr)]
                    )
            means = sums / n_batches
            history.append(
                {
                    "epoch": epoch,
                    "disc_loss": means[0],
                    "gen_loss": means[1],
                    "kl": means[2],
                    "lr": lr,
                }
            )
            state.epoch = epoch
            state.rng_state = _capture_rng(rng)
            if (
                out_dir is not None
                and cfg.checkpoint_every
                and epoch % cfg.checkpoint_every == 0
                and epoch < cfg.epochs
            ):
                save_checkpoint(
                    out_dir / f"checkpoint-epoch{epoch:03d}.ckpt", synth, disc,
                    extra_meta={"epoch": epoch, "train_config": asdict(cfg)},
                )
    finally:
        if log_fh is not None:
            log_fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint-final.ckpt", synth, disc,
                        extra_meta={"epoch": cfg.epochs, "train_config": asdict(cfg)})
        save_train_state(out_dir / "train-state.ckpt", state)
    return synth, disc, history
