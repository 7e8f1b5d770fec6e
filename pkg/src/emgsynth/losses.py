"""Objective terms: Gaussian-prior KL regularizer and the adversarial pair.

Each loss has a closed-form gradient helper used by the training loop; the
probability-space adversarial losses operate on discriminator outputs in
(0,1), while the logit-space twins are the numerically safe path used during
optimization (identical values up to float rounding).
"""

from __future__ import annotations

import numpy as np

from .nn import sigmoid, softplus


# ---------------------------------------------------------------------------
# KL divergence to the standard normal
# ---------------------------------------------------------------------------


def kl_loss(mu, sigma_sq):
    """KL( N(mu, diag(sigma_sq)) || N(0, I) ), summed over dimensions.

    Batched inputs (B, d) return the mean over rows.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if np.any(sigma_sq <= 0):
        raise ValueError("kl_loss: variance must be strictly positive")
    per = 0.5 * (sigma_sq + mu * mu - 1.0 - np.log(sigma_sq))
    if per.ndim <= 1:
        return float(per.sum())
    return float(per.sum(axis=-1).mean())


def kl_loss_grad(mu, sigma_sq):
    """d kl_loss / d(mu, sigma_sq); batched rows are averaged like the value."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    scale = 1.0 if mu.ndim <= 1 else 1.0 / mu.shape[0]
    g_mu = mu * scale
    g_sigma = 0.5 * (1.0 - 1.0 / sigma_sq) * scale
    return g_mu, g_sigma


# ---------------------------------------------------------------------------
# adversarial losses on probabilities
# ---------------------------------------------------------------------------


def _check_probs(p, name):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(f"{name}: probabilities must lie strictly in (0, 1)")
    return p


def adversarial_losses(d_real, d_fake, saturating=False):
    """(disc_loss, gen_loss) from discriminator outputs on real/fake batches.

    disc_loss = -mean log d_real - mean log(1 - d_fake), the negated value
    function, minimized by the discriminator. gen_loss defaults to the
    non-saturating surrogate -mean log d_fake; with ``saturating=True`` it is
    mean log(1 - d_fake), the raw value-function term the generator minimizes.
    """
    d_real = _check_probs(d_real, "d_real")
    d_fake = _check_probs(d_fake, "d_fake")
    disc_loss = float(-np.mean(np.log(d_real)) - np.mean(np.log(1.0 - d_fake)))
    if saturating:
        gen_loss = float(np.mean(np.log(1.0 - d_fake)))
    else:
        gen_loss = float(-np.mean(np.log(d_fake)))
    return disc_loss, gen_loss


def adversarial_losses_grad(d_real, d_fake, saturating=False):
    """Gradients of (disc_loss wrt d_real, disc_loss wrt d_fake, gen_loss wrt d_fake)."""
    d_real = _check_probs(d_real, "d_real")
    d_fake = _check_probs(d_fake, "d_fake")
    n_r, n_f = d_real.size, d_fake.size
    g_disc_real = -1.0 / (n_r * d_real)
    g_disc_fake = 1.0 / (n_f * (1.0 - d_fake))
    if saturating:
        g_gen_fake = -1.0 / (n_f * (1.0 - d_fake))
    else:
        g_gen_fake = -1.0 / (n_f * d_fake)
    return g_disc_real, g_disc_fake, g_gen_fake


# ---------------------------------------------------------------------------
# logit-space forms (used by the training loop)
# ---------------------------------------------------------------------------


def disc_loss_from_logits(z_real, z_fake):
    """Value and logit gradients of the discriminator loss, overflow-safe."""
    z_real = np.asarray(z_real, dtype=np.float64)
    z_fake = np.asarray(z_fake, dtype=np.float64)
    loss = float(np.mean(softplus(-z_real)) + np.mean(softplus(z_fake)))
    g_real = (sigmoid(z_real) - 1.0) / z_real.size
    g_fake = sigmoid(z_fake) / z_fake.size
    return loss, g_real, g_fake


def gen_loss_from_logits(z_fake, saturating=False):
    """Value and logit gradient of the generator loss."""
    z_fake = np.asarray(z_fake, dtype=np.float64)
    if saturating:
        loss = float(-np.mean(softplus(z_fake)))
        g_fake = -sigmoid(z_fake) / z_fake.size
    else:
        loss = float(np.mean(softplus(-z_fake)))
        g_fake = (sigmoid(z_fake) - 1.0) / z_fake.size
    return loss, g_fake


# ---------------------------------------------------------------------------
# objective composition
# ---------------------------------------------------------------------------


def total_objective(gan_value, kl_value, alpha):
    """alpha * gan_value + kl_value.

    Generator side passes its adversarial loss and the KL term; the
    discriminator side passes kl_value = 0 (the KL term does not involve the
    discriminator parameters).
    """
    return alpha * gan_value + kl_value
