"""Minimal numpy layer toolkit with explicit forward/backward passes.

Every layer computes gradients analytically (no autodiff framework); the test
suite cross-checks each backward pass against central finite differences.
Layers accumulate parameter gradients into ``self.grads`` and return input
gradients from ``backward`` so modules can be composed by hand.

Conventions: batch axis first, float64 in memory, checkpoints on disk are
little-endian float32 (see ``save_tensors``/``load_tensors``).
"""

from __future__ import annotations

import json
import struct

import numpy as np

# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


def leaky_relu(x, slope=0.2):
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope=0.2):
    return np.where(x >= 0, 1.0, slope)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


class Module:
    """Parameter/gradient registry with hierarchical naming."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: dict[str, "Module"] = {}
        self.state: dict[str, np.ndarray] = {}

    def add_param(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def add_state(self, name, value):
        """Register a non-trainable array (saved in checkpoints, no gradient)."""
        value = np.asarray(value, dtype=np.float64)
        self.state[name] = value
        return value

    def named_state(self):
        for name, value in self.state.items():
            yield name, value
        for cname, child in self.children.items():
            for name, value in child.named_state():
                yield f"{cname}.{name}", value

    def add_child(self, name, module):
        self.children[name] = module
        return module

    def named_parameters(self):
        for name, value in self.params.items():
            yield name, value
        for cname, child in self.children.items():
            for name, value in child.named_parameters():
                yield f"{cname}.{name}", value

    def named_grads(self):
        for name, value in self.grads.items():
            yield name, value
        for cname, child in self.children.items():
            for name, value in child.named_grads():
                yield f"{cname}.{name}", value

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0
        for child in self.children.values():
            child.zero_grad()

    def load_state(self, tensors, prefix=""):
        """Copy values from a flat {qualified_name: array} dict into params."""
        for store in (self.params, self.state):
            for name, value in store.items():
                key = prefix + name
                if key not in tensors:
                    raise KeyError(f"checkpoint is missing tensor {key!r}")
                src = np.asarray(tensors[key], dtype=np.float64)
                if src.shape != value.shape:
                    raise ValueError(
                        f"tensor {key!r} has shape {src.shape}, expected {value.shape}"
                    )
                value[...] = src
        for cname, child in self.children.items():
            child.load_state(tensors, prefix=f"{prefix}{cname}.")

    def state_dict(self, prefix=""):
        out = {prefix + name: value.copy() for name, value in self.named_parameters()}
        for name, value in self.named_state():
            out[prefix + name] = value.copy()
        return out


def init_uniform(rng, shape, fan_in):
    """Uniform in +-sqrt(1/fan_in), applied to weights and biases alike."""
    bound = np.sqrt(1.0 / max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# linear layer
# ---------------------------------------------------------------------------


class Linear(Module):
    """y = x @ W + b with x of shape (..., d_in)."""

    def __init__(self, d_in, d_out, rng):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.add_param("W", init_uniform(rng, (d_in, d_out), d_in))
        self.add_param("b", init_uniform(rng, (d_out,), d_in))

    def forward(self, x):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, gy, cache):
        x = cache
        x2 = x.reshape(-1, self.d_in)
        gy2 = gy.reshape(-1, self.d_out)
        self.grads["W"] += x2.T @ gy2
        self.grads["b"] += gy2.sum(axis=0)
        return gy @ self.params["W"].T


# ---------------------------------------------------------------------------
# 1-d convolutions (batch, channel, length)
# ---------------------------------------------------------------------------


def conv1d_forward(x, w, b, stride, pad):
    """x: (B, Cin, L), w: (Cout, Cin, K) -> (B, Cout, Lout)."""
    B, Cin, L = x.shape
    Cout, _, K = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    Lout = (L + 2 * pad - K) // stride + 1
    if Lout < 1:
        raise ValueError(f"conv1d: kernel {K} does not fit input length {L} (pad={pad})")
    y = np.zeros((B, Cout, Lout))
    for k in range(K):
        xs = xp[:, :, k : k + stride * Lout : stride]
        y += np.matmul(w[:, :, k], xs)
    if b is not None:
        y += b[None, :, None]
    return y, (xp, L)


def conv1d_backward(gy, w, stride, pad, cache):
    xp, L = cache
    Cout, Cin, K = w.shape
    Lout = gy.shape[2]
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for k in range(K):
        xs = xp[:, :, k : k + stride * Lout : stride]
        gw[:, :, k] = np.tensordot(gy, xs, axes=([0, 2], [0, 2]))
        gxp[:, :, k : k + stride * Lout : stride] += np.matmul(w[:, :, k].T, gy)
    gb = gy.sum(axis=(0, 2))
    gx = gxp[:, :, pad : pad + L] if pad else gxp
    return gx, gw, gb


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, stride, pad, rng):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.add_param("W", init_uniform(rng, (c_out, c_in, kernel), c_in * kernel))
        self.add_param("b", init_uniform(rng, (c_out,), c_in * kernel))

    def forward(self, x):
        return conv1d_forward(x, self.params["W"], self.params["b"], self.stride, self.pad)

    def backward(self, gy, cache):
        gx, gw, gb = conv1d_backward(gy, self.params["W"], self.stride, self.pad, cache)
        self.grads["W"] += gw
        self.grads["b"] += gb
        return gx


class ConvTranspose1d(Module):
    """Temporal upsampler; output length is exactly stride * input length.

    Implemented as zero-insertion followed by a stride-1 correlation with the
    flipped kernel. Kernel/padding are derived from the stride so the length
    contract ((L-1)*s + K - 2p == L*s) holds for any stride >= 1.
    """

    def __init__(self, c_in, c_out, stride, rng):
        super().__init__()
        self.stride = stride
        self.kernel = 2 * stride + (stride % 2) if stride > 1 else 1
        self.pad = (self.kernel - stride + 1) // 2
        self.add_param("W", init_uniform(rng, (c_in, c_out, self.kernel), c_in * self.kernel))
        self.add_param("b", init_uniform(rng, (c_out,), c_in * self.kernel))

    def _flipped(self):
        return self.params["W"][:, :, ::-1].transpose(1, 0, 2)

    def forward(self, x):
        B, Cin, L = x.shape
        s, K, p = self.stride, self.kernel, self.pad
        xd = np.zeros((B, Cin, (L - 1) * s + 1))
        xd[:, :, ::s] = x
        y, cache = conv1d_forward(xd, self._flipped(), self.params["b"], 1, K - 1 - p)
        return y, cache

    def backward(self, gy, cache):
        s, K, p = self.stride, self.kernel, self.pad
        gxd, gwf, gb = conv1d_backward(gy, self._flipped(), 1, K - 1 - p, cache)
        self.grads["W"] += gwf.transpose(1, 0, 2)[:, :, ::-1]
        self.grads["b"] += gb
        return gxd[:, :, ::s]


class BatchNorm1d(Module):
    """Per-channel batch normalization for (batch, channel, length) arrays.

    Training mode normalizes by batch statistics and maintains exponential
    running averages; inference mode normalizes by the running averages so a
    single sequence can be synthesized without batch-statistics leakage.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.add_param("gamma", np.ones(channels))
        self.add_param("beta", np.zeros(channels))
        self.add_state("run_mean", np.zeros(channels))
        self.add_state("run_var", np.ones(channels))

    def forward(self, x, training):
        if training:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            m = self.momentum
            self.state["run_mean"][...] = (1 - m) * self.state["run_mean"] + m * mean
            self.state["run_var"][...] = (1 - m) * self.state["run_var"] + m * var
        else:
            mean = self.state["run_mean"]
            var = self.state["run_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None]) * inv[:, None]
        y = self.params["gamma"][:, None] * xhat + self.params["beta"][:, None]
        return y, (xhat, inv, training)

    def backward(self, gy, cache):
        xhat, inv, training = cache
        self.grads["gamma"] += (gy * xhat).sum(axis=(0, 2))
        self.grads["beta"] += gy.sum(axis=(0, 2))
        gxhat = gy * self.params["gamma"][:, None]
        if not training:
            return gxhat * inv[:, None]
        n = xhat.shape[0] * xhat.shape[2]
        sum_g = gxhat.sum(axis=(0, 2), keepdims=True)
        sum_gx = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return (gxhat - sum_g / n - xhat * sum_gx / n) * inv[:, None]


# ---------------------------------------------------------------------------
# gradient utilities
# ---------------------------------------------------------------------------


def global_grad_norm(module):
    total = 0.0
    for _, g in module.named_grads():
        total += float(np.sum(g * g))
    return np.sqrt(total)


def clip_grads_(module, max_norm):
    norm = global_grad_norm(module)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for _, g in module.named_grads():
            g *= scale
    return norm


def finite_difference_grad(fn, array, h=1e-5):
    """Central-difference gradient of scalar fn() w.r.t. a parameter array.

    Perturbs the array in place and restores it; fn must close over the array.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_grad_error(analytic, numeric):
    """max |a-n| scaled by the larger gradient magnitude; 0 when both vanish.

    The vanishing cutoff absorbs central-difference roundoff (~1e-10 on an
    O(1) loss): parameters whose influence cancels exactly — e.g. a bias
    directly in front of batch normalization — report zero analytically but
    produce pure float noise under finite differencing.
    """
    diff = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
    scale = max(
        float(np.max(np.abs(analytic))) if analytic.size else 0.0,
        float(np.max(np.abs(numeric))) if numeric.size else 0.0,
    )
    if scale < 1e-8:
        return 0.0
    return diff / scale


# ---------------------------------------------------------------------------
# tensor container file format
# ---------------------------------------------------------------------------

_MAGIC = b"EGTN"
_VERSION = 1


_DTYPE_CODES = {"<f4": 0, "<f8": 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_tensors(path, tensors, meta=None, dtype="<f4"):
    """Write {name: array} as a versioned little-endian binary container.

    Layout: magic, u32 version, u8 dtype code, u32 meta_len + UTF-8 JSON
    meta, u32 count, then per tensor: u16 name_len + name, u8 ndim,
    i64 dims, raw data. Model checkpoints use float32; optimizer state uses
    float64 so resuming is bit-exact.
    """
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported container dtype {dtype!r}")
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<B", _DTYPE_CODES[dtype]))
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=dtype)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<q", d))
            fh.write(arr.tobytes())


def load_tensors(path):
    """Read a tensor container; returns ({name: array}, meta dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensor container file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        (dtype_code,) = struct.unpack("<B", fh.read(1))
        if dtype_code not in _CODE_DTYPES:
            raise ValueError(f"{path}: unknown dtype code {dtype_code}")
        dt = np.dtype(_CODE_DTYPES[dtype_code])
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<q", fh.read(8))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(dt.itemsize * n), dtype=dt).reshape(shape)
            tensors[name] = data.copy()
        return tensors, meta
