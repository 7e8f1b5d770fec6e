"""Network components for kinematics-conditioned EMG synthesis.

Pipeline: an angle encoder embeds each joint-angle frame and produces a
posterior (mu, sigma^2) over a global context vector h0 (sampled with the
reparameterization identity h0 = mu + sqrt(sigma^2) * eps). A lower GRU layer
consumes embedding+noise per frame; its outputs drive an upper gated unit
whose hidden state is initialized with h0 and whose output ("gist" vector)
is shaped by an input-dependent per-channel filter. A transposed-convolution
decoder turns each gist vector into one EMG frame of ``upsample_factor``
samples, and a per-frame discriminator scores (frame, angle frame, h0)
triples.

All forward passes have matching hand-written backward passes; gradcheck
tests compare them against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .nn import (
    BatchNorm1d,
    Conv1d,
    ConvTranspose1d,
    Linear,
    Module,
    init_uniform,
    leaky_relu,
    leaky_relu_grad,
    load_tensors,
    save_tensors,
    sigmoid,
)

LOGVAR_CLAMP = 10.0


def _factorize_stride(n):
    """Factor an upsample factor into per-layer strides (largest first)."""
    if n < 1:
        raise ValueError("upsample factor must be >= 1")
    if n == 1:
        return (1,)
    strides, rest = [], n
    for p in (7, 5, 3, 2):
        while rest % p == 0:
            strides.append(p)
            rest //= p
    if rest != 1:
        strides.append(rest)  # large prime: single wide layer
    return tuple(sorted(strides, reverse=True))


VARIANTS = ("full", "no_angle_encoder", "no_gru", "no_ang2gist", "no_discriminator")


@dataclass
class ModelConfig:
    d_j: int = 6
    d_e: int = 4
    upsample_factor: int = 8
    d_emb: int = 32
    d_noise: int = 8
    d_g: int = 64
    d_h: int = 64
    filter_len: int = 5
    cond_dim: int = 16
    disc_channels: tuple = (16, 32)
    encoder_activation: str = "tanh"
    variant: str = "full"
    seed: int = 0

    VARIANTS = VARIANTS

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {self.VARIANTS}")
        if self.filter_len % 2 == 0:
            raise ValueError("filter_len must be odd")
        if self.encoder_activation not in ("tanh", "identity"):
            raise ValueError("encoder_activation must be 'tanh' or 'identity'")


# ---------------------------------------------------------------------------
# latent context
# ---------------------------------------------------------------------------


def sample_context(mu, sigma_sq, eps):
    """h0 = mu + sqrt(sigma_sq) * eps (differentiable in mu/sigma for fixed eps)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if np.any(sigma_sq <= 0):
        raise ValueError("sample_context: variance must be strictly positive")
    return mu + np.sqrt(sigma_sq) * np.asarray(eps, dtype=np.float64)


class AngleEncoder(Module):
    """Per-frame affine embedding, temporal mean pooling, posterior heads."""

    def __init__(self, d_j, d_emb, d_h, rng, activation="tanh"):
        super().__init__()
        self.d_j, self.d_emb, self.d_h = d_j, d_emb, d_h
        self.activation = activation
        self.embed = self.add_child("embed", Linear(d_j, d_emb, rng))
        self.head_mu = self.add_child("head_mu", Linear(d_emb, d_h, rng))
        self.head_logvar = self.add_child("head_logvar", Linear(d_emb, d_h, rng))

    def encode(self, S):
        """S: (B, T, d_j) -> (emb (B,T,d_emb), mu (B,d_h), sigma_sq (B,d_h), cache)."""
        if S.ndim != 3 or S.shape[2] != self.d_j:
            raise ValueError(f"expected angles of shape (B, T, {self.d_j}), got {S.shape}")
        pre, c_emb = self.embed.forward(S)
        emb = np.tanh(pre) if self.activation == "tanh" else pre
        pooled = emb.mean(axis=1)
        mu, c_mu = self.head_mu.forward(pooled)
        lv_raw, c_lv = self.head_logvar.forward(pooled)
        lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
        sigma_sq = np.exp(lv)
        cache = (emb, c_emb, c_mu, c_lv, lv_raw, sigma_sq, S.shape[1])
        return emb, mu, sigma_sq, cache

    def backward(self, g_emb, g_mu, g_sigma_sq, cache):
        emb, c_emb, c_mu, c_lv, lv_raw, sigma_sq, T = cache
        g_lv = g_sigma_sq * sigma_sq
        g_lv = g_lv * ((lv_raw > -LOGVAR_CLAMP) & (lv_raw < LOGVAR_CLAMP))
        g_pooled = self.head_mu.backward(g_mu, c_mu)
        g_pooled += self.head_logvar.backward(g_lv, c_lv)
        g_emb = g_emb + g_pooled[:, None, :] / T
        g_pre = g_emb * (1.0 - emb * emb) if self.activation == "tanh" else g_emb
        self.embed.backward(g_pre, c_emb)


class RawAngleContext(Module):
    """Encoder ablation: identity embeddings, pooled raw angles as mu, unit variance."""

    def __init__(self, d_j, d_h):
        super().__init__()
        self.d_j, self.d_emb, self.d_h = d_j, d_j, d_h

    def encode(self, S):
        pooled = S.mean(axis=1)
        mu = np.zeros((S.shape[0], self.d_h))
        mu[:, : min(self.d_j, self.d_h)] = pooled[:, : self.d_h]
        sigma_sq = np.ones((S.shape[0], self.d_h))
        return S, mu, sigma_sq, None

    def backward(self, g_emb, g_mu, g_sigma_sq, cache):
        pass


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------


class GruCell(Module):
    """Gated recurrent cell; the emitted output equals the new state."""

    def __init__(self, d_in, d_state, rng):
        super().__init__()
        self.d_in, self.d_state = d_in, d_state
        for gate in ("z", "r", "h"):
            self.add_param(f"W{gate}", init_uniform(rng, (d_in, d_state), d_in))
            self.add_param(f"U{gate}", init_uniform(rng, (d_state, d_state), d_state))
            self.add_param(f"b{gate}", np.zeros(d_state))

    def step(self, x, h):
        if x.shape[1] != self.d_in or h.shape[1] != self.d_state:
            raise ValueError(
                f"gru_step: expected input dim {self.d_in} / state dim {self.d_state}, "
                f"got {x.shape[1]} / {h.shape[1]}"
            )
        p = self.params
        z = sigmoid(x @ p["Wz"] + h @ p["Uz"] + p["bz"])
        r = sigmoid(x @ p["Wr"] + h @ p["Ur"] + p["br"])
        c = np.tanh(x @ p["Wh"] + (r * h) @ p["Uh"] + p["bh"])
        h_new = (1.0 - z) * h + z * c
        return h_new, (x, h, z, r, c)

    def backward_step(self, g_h_new, cache):
        x, h, z, r, c = cache
        p, g = self.params, self.grads
        gz = g_h_new * (c - h)
        gc = g_h_new * z
        gh = g_h_new * (1.0 - z)
        ac = gc * (1.0 - c * c)
        g["Wh"] += x.T @ ac
        g["Uh"] += (r * h).T @ ac
        g["bh"] += ac.sum(axis=0)
        gx = ac @ p["Wh"].T
        grh = ac @ p["Uh"].T
        gr = grh * h
        gh += grh * r
        az = gz * z * (1.0 - z)
        ar = gr * r * (1.0 - r)
        g["Wz"] += x.T @ az
        g["Uz"] += h.T @ az
        g["bz"] += az.sum(axis=0)
        g["Wr"] += x.T @ ar
        g["Ur"] += h.T @ ar
        g["br"] += ar.sum(axis=0)
        gx += az @ p["Wz"].T + ar @ p["Wr"].T
        gh += az @ p["Uz"].T + ar @ p["Ur"].T
        return gx, gh


class Ang2GistCell(Module):
    """Gated unit whose output is the state passed through an input-conditioned
    per-channel filter.

    The update/reset gates follow the usual logistic form, but the candidate
    state does not apply the reset gate; r is emitted in the step cache only,
    so its parameters receive zero gradient. The filter head maps the input to
    one odd-length kernel per state channel, applied as a same-padded
    correlation along the state's channel axis.
    """

    def __init__(self, d_in, d_state, k_filter, rng):
        super().__init__()
        if k_filter % 2 == 0 or k_filter < 1:
            raise ValueError("filter length must be odd and positive")
        self.d_in, self.d_state, self.k_filter = d_in, d_state, k_filter
        for gate in ("z", "r", "h"):
            self.add_param(f"W{gate}", init_uniform(rng, (d_in, d_state), d_in))
            self.add_param(f"U{gate}", init_uniform(rng, (d_state, d_state), d_state))
            self.add_param(f"b{gate}", np.zeros(d_state))
        self.add_param("Wf", init_uniform(rng, (d_in, d_state * k_filter), d_in))
        bf = np.zeros((d_state, k_filter))
        bf[:, k_filter // 2] = 1.0  # start at the identity filter
        self.add_param("bf", bf.reshape(-1))

    def step(self, i_t, h):
        if i_t.shape[1] != self.d_in or h.shape[1] != self.d_state:
            raise ValueError(
                f"ang2gist_step: expected input dim {self.d_in} / state dim "
                f"{self.d_state}, got {i_t.shape[1]} / {h.shape[1]}"
            )
        p = self.params
        B, d, K = i_t.shape[0], self.d_state, self.k_filter
        hw = K // 2
        z = sigmoid(i_t @ p["Wz"] + h @ p["Uz"] + p["bz"])
        r = sigmoid(i_t @ p["Wr"] + h @ p["Ur"] + p["br"])
        c = np.tanh(i_t @ p["Wh"] + h @ p["Uh"] + p["bh"])
        h_new = (1.0 - z) * h + z * c
        kern = (i_t @ p["Wf"] + p["bf"]).reshape(B, d, K)
        hp = np.pad(h_new, ((0, 0), (hw, hw)))
        o = np.zeros_like(h_new)
        for k in range(K):
            o += kern[:, :, k] * hp[:, k : k + d]
        return o, h_new, (i_t, h, z, r, c, kern, hp)

    def backward_step(self, g_o, g_h_new_ext, cache):
        i_t, h, z, r, c, kern, hp = cache
        p, g = self.params, self.grads
        B, d, K = i_t.shape[0], self.d_state, self.k_filter
        hw = K // 2
        gkern = np.empty((B, d, K))
        ghp = np.zeros_like(hp)
        for k in range(K):
            gkern[:, :, k] = g_o * hp[:, k : k + d]
            ghp[:, k : k + d] += g_o * kern[:, :, k]
        g_h_new = ghp[:, hw : hw + d] + g_h_new_ext
        gkf = gkern.reshape(B, d * K)
        g["Wf"] += i_t.T @ gkf
        g["bf"] += gkf.sum(axis=0)
        gi = gkf @ p["Wf"].T
        gz = g_h_new * (c - h)
        gc = g_h_new * z
        gh = g_h_new * (1.0 - z)
        ac = gc * (1.0 - c * c)
        g["Wh"] += i_t.T @ ac
        g["Uh"] += h.T @ ac
        g["bh"] += ac.sum(axis=0)
        gi += ac @ p["Wh"].T
        gh += ac @ p["Uh"].T
        az = gz * z * (1.0 - z)
        g["Wz"] += i_t.T @ az
        g["Uz"] += h.T @ az
        g["bz"] += az.sum(axis=0)
        gi += az @ p["Wz"].T
        gh += az @ p["Uz"].T
        return gi, gh


# ---------------------------------------------------------------------------
# frame decoder / discriminator
# ---------------------------------------------------------------------------


class FrameGenerator(Module):
    """Transposed-convolution stack: one gist vector -> one EMG frame."""

    def __init__(self, d_h, d_e, upsample_factor, rng, strides=None):
        super().__init__()
        self.d_h, self.d_e, self.upsample_factor = d_h, d_e, upsample_factor
        strides = tuple(strides) if strides else _factorize_stride(upsample_factor)
        if int(np.prod(strides)) != upsample_factor:
            raise ValueError(
                f"stride product {int(np.prod(strides))} != upsample factor {upsample_factor}"
            )
        self.strides = strides
        self.layers = []
        self.norms = []
        c_in = d_h
        for li, s in enumerate(strides):
            last = li == len(strides) - 1
            c_out = d_e if last else max(d_e, d_h >> (li + 1))
            layer = self.add_child(f"up{li}", ConvTranspose1d(c_in, c_out, s, rng))
            self.layers.append(layer)
            # batch-normalize every hidden deconv output; the final layer
            # stays a plain affine map so output amplitude is unconstrained
            self.norms.append(None if last else self.add_child(f"norm{li}", BatchNorm1d(c_out)))
            c_in = c_out

    def forward(self, o, training=True):
        """o: (B, d_h) -> frames (B, upsample_factor, d_e), cache."""
        x = o[:, :, None]
        caches = []
        for layer, norm in zip(self.layers, self.norms):
            x, c = layer.forward(x)
            if norm is not None:
                x, cn = norm.forward(x, training)
                caches.append((c, cn, x))
                x = leaky_relu(x)
            else:
                caches.append((c, None, None))
        return x.transpose(0, 2, 1), caches

    def backward(self, g_frames, caches):
        gx = g_frames.transpose(0, 2, 1)
        for li in range(len(self.layers) - 1, -1, -1):
            c, cn, pre = caches[li]
            if pre is not None:
                gx = gx * leaky_relu_grad(pre)
                gx = self.norms[li].backward(gx, cn)
            gx = self.layers[li].backward(gx, c)
        return gx[:, :, 0]


def frame_conditioning(S):
    """Per-frame conditioning for the discriminator: angles + local change.

    The discriminator scores one frame at a time, so unlike the recurrent
    generator it cannot integrate the sequence to recover how fast the pose
    is moving — and muscle activity tracks movement speed, not posture
    alone.  Concatenating the backward difference hands the per-frame head
    the same kinematic information the generator accumulates in its hidden
    state.  Shapes: (..., T, d_j) -> (..., T, 2*d_j); the t=0 difference
    duplicates t=1 so no frame is left without a speed estimate.
    """
    S = np.asarray(S, dtype=np.float64)
    d = np.zeros_like(S)
    if S.shape[-2] >= 2:
        d[..., 1:, :] = S[..., 1:, :] - S[..., :-1, :]
        d[..., 0, :] = d[..., 1, :]
    return np.concatenate([S, d], axis=-1)


class FrameDiscriminator(Module):
    """Conv encoder over one EMG frame + embedded (angle frame, h0) conditioning."""

    def __init__(self, d_e, d_j, d_h, frame_len, rng, channels=(16, 32), cond_dim=16):
        super().__init__()
        self.d_e, self.d_j, self.d_h, self.frame_len = d_e, d_j, d_h, frame_len
        # Conditioning per frame is the angle vector plus its local change
        # (see frame_conditioning): muscle activity tracks movement speed,
        # and a per-frame head cannot recover speed from posture alone.
        self.s_dim = 2 * d_j
        self.convs = []
        self.geometry = []
        # Raw samples are zero-mean noise whose realism tell is their local
        # amplitude — a second-order statistic that a linear first conv layer
        # cannot see.  Squared copies of each channel expose per-sample power
        # to the first layer directly (and stay smooth for gradient checks).
        c_in, L = 2 * d_e, frame_len
        for li, c_out in enumerate(channels):
            if L >= 4:
                k, s, p = 4, 2, 1
            else:
                k, s, p = L, 1, 0
            conv = self.add_child(f"conv{li}", Conv1d(c_in, c_out, k, s, p, rng))
            self.convs.append(conv)
            L = (L + 2 * p - k) // s + 1
            self.geometry.append(L)
            c_in = c_out
        self.flat_dim = c_in * L
        # Per-frame log mean power per channel plus its square: a pinned
        # amplitude summary.  Learned conv features keep being repurposed by
        # the realism arms race, so a consistency scorer reading them chases
        # a moving basis and never converges; these two fixed statistics are
        # enough to express the optimal check "does this frame's loudness
        # match what the pose predicts" (a quadratic in log power).
        self.amp_dim = 2 * d_e
        self.embed_s = self.add_child("embed_s", Linear(self.s_dim, cond_dim, rng))
        self.embed_h = self.add_child("embed_h", Linear(d_h, cond_dim, rng))
        # The head must mix signal features with the conditioning embeddings —
        # a purely linear head scores them additively and can never test
        # whether the frame is consistent with the pose, so it needs at least
        # one hidden layer.
        in_dim = self.flat_dim + self.amp_dim + 2 * cond_dim
        head_dim = 2 * in_dim // 3
        self.mix = self.add_child("mix", Linear(in_dim, head_dim, rng))
        self.head = self.add_child("head", Linear(head_dim, 1, rng))
        # Inner-product (projection) terms between the conditioning embedding
        # and the signal features.  Whether a frame *matches* its pose is a
        # feature-times-conditioning interaction; with only concatenation the
        # net must discover products inside the MLP, which first-order SGD
        # finds very slowly.  The bilinear paths make that interaction
        # directly learnable (one over conv features, one over the pinned
        # amplitude summary) while the concatenated path still scores
        # unconditional realism.
        self.proj = self.add_child("proj", Linear(2 * cond_dim, self.flat_dim, rng))
        self.proj_amp = self.add_child("proj_amp", Linear(2 * cond_dim, self.amp_dim, rng))

    def forward(self, x_frame, s_t, h0):
        """x_frame: (B, frame_len, d_e); returns (m in (0,1), logit, cache)."""
        if x_frame.shape[1:] != (self.frame_len, self.d_e):
            raise ValueError(
                f"expected frames of shape (B, {self.frame_len}, {self.d_e}), got {x_frame.shape}"
            )
        if s_t.shape[1] != self.s_dim or h0.shape[1] != self.d_h:
            raise ValueError("conditioning dimension mismatch")
        x_raw = x_frame.transpose(0, 2, 1)
        power = (x_raw * x_raw).mean(axis=2)  # (B, d_e)
        a = np.log(power + 1e-8)  # the eps floor also bounds the gradient
        amp = np.concatenate([a, a * a], axis=1)
        x = np.concatenate([x_raw, x_raw * x_raw], axis=1)
        conv_caches = []
        for conv in self.convs:
            x, c = conv.forward(x)
            conv_caches.append((c, x))
            x = leaky_relu(x)
        flat = x.reshape(x.shape[0], -1)
        se_pre, c_se = self.embed_s.forward(s_t)
        he_pre, c_he = self.embed_h.forward(h0)
        se, he = np.tanh(se_pre), np.tanh(he_pre)
        feats = np.concatenate([flat, amp, se, he], axis=1)
        mix_pre, c_mix = self.mix.forward(feats)
        mixed = leaky_relu(mix_pre)
        logit, c_head = self.head.forward(mixed)
        cond = np.concatenate([se, he], axis=1)
        pvec, c_proj = self.proj.forward(cond)
        avec, c_proj_amp = self.proj_amp.forward(cond)
        logit = logit[:, 0] + (pvec * flat).sum(axis=1) + (avec * amp).sum(axis=1)
        m = sigmoid(logit)
        cache = (
            conv_caches, x.shape, x_raw, power, a, amp, c_se, c_he, se, he,
            c_mix, mix_pre, c_head, c_proj, pvec, flat, c_proj_amp, avec,
        )
        return m, logit, cache

    def backward(self, g_logit, cache):
        """Backprop from logit gradient; returns (g_x_frame, g_h0)."""
        (
            conv_caches, conv_shape, x_raw, power, a, amp, c_se, c_he, se, he,
            c_mix, mix_pre, c_head, c_proj, pvec, flat, c_proj_amp, avec,
        ) = cache
        g_mixed = self.head.backward(g_logit[:, None], c_head)
        g_feats = self.mix.backward(g_mixed * leaky_relu_grad(mix_pre), c_mix)
        n_flat, n_amp = self.flat_dim, self.amp_dim
        cd = se.shape[1]
        g_flat = g_feats[:, :n_flat]
        g_amp = g_feats[:, n_flat : n_flat + n_amp]
        g_se = g_feats[:, n_flat + n_amp : n_flat + n_amp + cd]
        g_he = g_feats[:, n_flat + n_amp + cd :]
        g_flat = g_flat + g_logit[:, None] * pvec
        g_amp = g_amp + g_logit[:, None] * avec
        g_cond = self.proj.backward(g_logit[:, None] * flat, c_proj)
        g_cond = g_cond + self.proj_amp.backward(g_logit[:, None] * amp, c_proj_amp)
        g_se = (g_se + g_cond[:, :cd]) * (1.0 - se * se)
        g_he = (g_he + g_cond[:, cd:]) * (1.0 - he * he)
        self.embed_s.backward(g_se, c_se)
        g_h0 = self.embed_h.backward(g_he, c_he)
        gx = g_flat.reshape(conv_shape)
        for conv, (c, pre) in zip(reversed(self.convs), reversed(conv_caches)):
            gx = gx * leaky_relu_grad(pre)
            gx = conv.backward(gx, c)
        g_raw = gx[:, : self.d_e] + 2.0 * x_raw * gx[:, self.d_e :]
        d_e = self.d_e
        g_a = g_amp[:, :d_e] + 2.0 * a * g_amp[:, d_e:]
        g_raw = g_raw + (g_a / (power + 1e-8))[:, :, None] * (
            2.0 * x_raw / self.frame_len
        )
        return g_raw.transpose(0, 2, 1), g_h0


# ---------------------------------------------------------------------------
# full synthesis pipeline (generator side)
# ---------------------------------------------------------------------------


class Synthesizer(Module):
    """Composition: encoder -> sampled context -> lower GRU -> gist unit -> frames."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        self.cfg = cfg
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        v = cfg.variant
        if v == "no_angle_encoder":
            self.encoder = self.add_child("encoder", RawAngleContext(cfg.d_j, cfg.d_h))
        else:
            self.encoder = self.add_child(
                "encoder",
                AngleEncoder(cfg.d_j, cfg.d_emb, cfg.d_h, rng, activation=cfg.encoder_activation),
            )
        d_emb = self.encoder.d_emb
        self.gru = None
        d_g = d_emb + cfg.d_noise
        if v != "no_gru":
            d_g = cfg.d_g
            self.gru = self.add_child("gru", GruCell(d_emb + cfg.d_noise, d_g, rng))
        self.d_g = d_g
        if v == "no_ang2gist":
            self.upper = self.add_child("upper", GruCell(d_g, cfg.d_h, rng))
            self.upper_kind = "gru"
        else:
            self.upper = self.add_child(
                "upper", Ang2GistCell(d_g, cfg.d_h, cfg.filter_len, rng)
            )
            self.upper_kind = "gist"
        self.generator = self.add_child(
            "generator", FrameGenerator(cfg.d_h, cfg.d_e, cfg.upsample_factor, rng)
        )

    # -- forward -----------------------------------------------------------

    def forward_sequence(self, S, eps_s, eps_t, training=True):
        """S: (B,T,d_j), eps_s: (B,d_h), eps_t: (B,T,d_noise) -> (frames, cache).

        frames has shape (B, T, upsample_factor, d_e). ``training`` selects
        batch vs running statistics in the frame decoder's normalization
        layers; backward_sequence requires a training-mode cache.
        """
        B, T, _ = S.shape
        emb, mu, sigma_sq, enc_cache = self.encoder.encode(S)
        h0 = sample_context(mu, sigma_sq, eps_s)
        xs = np.concatenate([emb, eps_t], axis=2)
        i_seq = np.empty((B, T, self.d_g))
        gru_caches = []
        if self.gru is not None:
            g = np.zeros((B, self.d_g))
            for t in range(T):
                g, c = self.gru.step(xs[:, t], g)
                i_seq[:, t] = g
                gru_caches.append(c)
        else:
            i_seq = xs
        o_seq = np.empty((B, T, self.cfg.d_h))
        upper_caches = []
        h = h0
        for t in range(T):
            if self.upper_kind == "gist":
                o, h, c = self.upper.step(i_seq[:, t], h)
            else:
                h, c = self.upper.step(i_seq[:, t], h)
                o = h
            o_seq[:, t] = o
            upper_caches.append(c)
        frames_flat, gen_cache = self.generator.forward(
            o_seq.reshape(B * T, self.cfg.d_h), training=training
        )
        frames = frames_flat.reshape(B, T, self.cfg.upsample_factor, self.cfg.d_e)
        cache = {
            "B": B,
            "T": T,
            "enc": enc_cache,
            "gru": gru_caches,
            "upper": upper_caches,
            "gen": gen_cache,
            "eps_s": eps_s,
            "sigma_sq": sigma_sq,
            "mu": mu,
            "h0": h0,
        }
        return frames, cache

    def backward_sequence(self, g_frames, cache, g_h0_ext=None, g_mu_ext=None, g_sigma_ext=None):
        """Backprop through the whole pipeline, accumulating parameter grads."""
        B, T = cache["B"], cache["T"]
        g_o = self.generator.backward(
            g_frames.reshape(B * T, self.cfg.upsample_factor, self.cfg.d_e), cache["gen"]
        ).reshape(B, T, self.cfg.d_h)
        g_i = np.empty((B, T, self.d_g))
        gh = np.zeros((B, self.cfg.d_h))
        for t in range(T - 1, -1, -1):
            if self.upper_kind == "gist":
                gi_t, gh = self.upper.backward_step(g_o[:, t], gh, cache["upper"][t])
            else:
                gi_t, gh = self.upper.backward_step(g_o[:, t] + gh, cache["upper"][t])
            g_i[:, t] = gi_t
        g_h0 = gh if g_h0_ext is None else gh + g_h0_ext
        g_mu = g_h0.copy()
        g_sigma = g_h0 * cache["eps_s"] * 0.5 / np.sqrt(cache["sigma_sq"])
        if g_mu_ext is not None:
            g_mu += g_mu_ext
        if g_sigma_ext is not None:
            g_sigma += g_sigma_ext
        if self.gru is not None:
            gg = np.zeros((B, self.d_g))
            g_x = np.empty((B, T, self.gru.d_in))
            for t in range(T - 1, -1, -1):
                gx_t, gg = self.gru.backward_step(g_i[:, t] + gg, cache["gru"][t])
                g_x[:, t] = gx_t
        else:
            g_x = g_i
        g_emb = g_x[:, :, : self.encoder.d_emb]
        self.encoder.backward(g_emb, g_mu, g_sigma, cache["enc"])

    # -- inference ---------------------------------------------------------

    def generate(self, S, rng=None, eps_s=None, eps_t=None):
        """Generate EMG for angle sequences.

        S: (T, d_j) or (B, T, d_j). Noise comes from ``rng`` unless explicit
        eps arrays are given (pass zeros for deterministic output).
        Returns (B, T*upsample_factor, d_e), squeezed if S was unbatched.
        """
        S = np.asarray(S, dtype=np.float64)
        single = S.ndim == 2
        if single:
            S = S[None]
        B, T, _ = S.shape
        if eps_s is None or eps_t is None:
            if rng is None:
                raise ValueError("need rng when eps_s/eps_t are not supplied")
            eps_s = rng.standard_normal((B, self.cfg.d_h))
            eps_t = rng.standard_normal((B, T, self.cfg.d_noise))
        frames, _ = self.forward_sequence(S, eps_s, eps_t, training=False)
        out = frames.reshape(B, T * self.cfg.upsample_factor, self.cfg.d_e)
        return out[0] if single else out


def build_discriminator(cfg: ModelConfig, rng=None):
    rng = rng if rng is not None else np.random.default_rng(cfg.seed + 1)
    return FrameDiscriminator(
        cfg.d_e,
        cfg.d_j,
        cfg.d_h,
        cfg.upsample_factor,
        rng,
        channels=cfg.disc_channels,
        cond_dim=cfg.cond_dim,
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, synthesizer, discriminator=None, extra_meta=None):
    tensors = synthesizer.state_dict(prefix="gen.")
    if discriminator is not None:
        tensors.update(discriminator.state_dict(prefix="disc."))
    meta = {"kind": "model", "config": asdict(synthesizer.cfg)}
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, tensors, meta=meta)


def load_checkpoint(path):
    """Returns (synthesizer, discriminator or None, meta)."""
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "model":
        raise ValueError(f"{path}: not a model checkpoint")
    cfg_dict = dict(meta["config"])
    cfg_dict["disc_channels"] = tuple(cfg_dict.get("disc_channels", (16, 32)))
    cfg = ModelConfig(**cfg_dict)
    synthesizer = Synthesizer(cfg)
    synthesizer.load_state(tensors, prefix="gen.")
    discriminator = None
    if any(name.startswith("disc.") for name in tensors):
        discriminator = build_discriminator(cfg)
        discriminator.load_state(tensors, prefix="disc.")
    return synthesizer, discriminator, meta
