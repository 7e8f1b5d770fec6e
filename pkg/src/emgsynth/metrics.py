"""Similarity metrics between recorded and generated signals.

All functions accept 1-D sequences (T,) or channel-stacked 2-D arrays
(T, C). Multichannel scores are the mean of per-channel scores except DTW,
which aligns whole frames under the Euclidean frame distance.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

_INF = float("inf")


class MetricError(ValueError):
    pass


def _as_frames(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise MetricError(f"{name} must be a non-empty 1-D or 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MetricError(f"{name} contains non-finite values")
    return arr


def _check_channels(a, b):
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"channel counts differ: {a.shape[1]} vs {b.shape[1]}")


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def fft_mse(a, b):
    """Mean squared difference of unnormalized FFT magnitude spectra.

    Sequences must have identical shape; the result averages over frequency
    bins and channels. Phase is discarded, so a sign flip (or any constant
    phase rotation) of either input leaves the score unchanged.
    """
    A = _as_frames(a, "a")
    B = _as_frames(b, "b")
    if A.shape != B.shape:
        raise MetricError(f"fft_mse needs equal shapes, got {A.shape} vs {B.shape}")
    if A.shape[0] < 2:
        raise MetricError("fft_mse needs at least 2 samples")
    mag_a = np.abs(np.fft.fft(A, axis=0))
    mag_b = np.abs(np.fft.fft(B, axis=0))
    return float(np.mean((mag_a - mag_b) ** 2))


# ---------------------------------------------------------------------------
# dynamic time warping
# ---------------------------------------------------------------------------


def _dtw_full(A, B):
    """Exact DTW by full dynamic programming; returns (value, warp path).

    Steps are (1,0), (0,1), (1,1) with Euclidean frame distance and no step
    weighting. The path is the list of aligned index pairs, diagonal moves
    preferred on ties.
    """
    N, M = A.shape[0], B.shape[0]
    cost = cdist(A, B)
    rows = [[0.0] + [_INF] * M]
    for i in range(1, N + 1):
        prev = rows[i - 1]
        cur = [_INF] * (M + 1)
        c = cost[i - 1].tolist()
        for j in range(1, M + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c[j - 1] + best
        rows.append(cur)
    i, j = N, M
    path = []
    while i >= 1 and j >= 1:
        path.append((i - 1, j - 1))
        if i == 1 and j == 1:
            break
        diag, up, left = rows[i - 1][j - 1], rows[i - 1][j], rows[i][j - 1]
        if diag <= up and diag <= left:
            i, j = i - 1, j - 1
        elif up <= left:
            i = i - 1
        else:
            j = j - 1
    path.reverse()
    return float(rows[N][M]), path


def dtw_exact(a, b):
    """Exact dynamic-time-warping distance (full O(N*M) table)."""
    A = _as_frames(a, "a")
    B = _as_frames(b, "b")
    _check_channels(A, B)
    value, _ = _dtw_full(A, B)
    return value


def _halve(A):
    n = A.shape[0] - (A.shape[0] % 2)
    return 0.5 * (A[0:n:2] + A[1:n:2])


def _project_ranges(path, N, M, radius):
    """Expand a coarse warp path into per-row column windows at full scale.

    Each coarse cell is widened by ``radius`` in both directions and mapped
    onto its 2x2 block of fine cells, then every row window gains a flat
    refinement margin: the coarse path was solved on pair-averaged signals,
    so the true fine-scale path can stray a few cells beyond the unexpanded
    projection, and the margin buys back most of that accuracy at O(N) extra
    work. Rows the projection misses (odd-length tails) inherit the previous
    row's window, and the final row is extended to reach the (N-1, M-1)
    corner so the windowed table is always solvable.
    """
    lo = [M] * N
    hi = [0] * N
    for pi, pj in path:
        for i in range(pi - radius, pi + radius + 1):
            jl = 2 * max(pj - radius, 0)
            jh = 2 * (pj + radius) + 2
            for r in (2 * i, 2 * i + 1):
                if 0 <= r < N:
                    if jl < lo[r]:
                        lo[r] = jl
                    if jh > hi[r]:
                        hi[r] = jh
    margin = 2 * radius + 4
    for r in range(N):
        if lo[r] >= hi[r]:  # uncovered tail row
            lo[r], hi[r] = (lo[r - 1], hi[r - 1]) if r else (0, 1)
        lo[r] = max(lo[r] - margin, 0)
        hi[r] = min(hi[r] + margin, M)
    hi[N - 1] = M
    return list(zip(lo, hi))


def _dtw_window(A, B, ranges):
    """DTW restricted to per-row column ranges; returns (value, path)."""
    N, M = A.shape[0], B.shape[0]
    rows = []
    for i in range(N):
        rlo, rhi = ranges[i]
        cost = np.linalg.norm(A[i, None, :] - B[rlo:rhi], axis=1).tolist()
        cur = [_INF] * (rhi - rlo)
        if i > 0:
            plo, phi, pvals = rows[-1]
        for k in range(rhi - rlo):
            j = rlo + k
            if i == 0 and j == 0:
                cur[k] = cost[k]
                continue
            best = _INF
            if i > 0:
                if plo <= j < phi and pvals[j - plo] < best:
                    best = pvals[j - plo]
                if plo <= j - 1 < phi and pvals[j - 1 - plo] < best:
                    best = pvals[j - 1 - plo]
            if k > 0 and cur[k - 1] < best:
                best = cur[k - 1]
            cur[k] = cost[k] + best
        rows.append((rlo, rhi, cur))
    rlo, rhi, cur = rows[-1]
    value = cur[M - 1 - rlo]
    i, j = N - 1, M - 1
    path = []
    while True:
        path.append((i, j))
        if i == 0 and j == 0:
            break
        diag = up = left = _INF
        if i > 0:
            plo, phi, pvals = rows[i - 1][0], rows[i - 1][1], rows[i - 1][2]
            if plo <= j - 1 < phi:
                diag = pvals[j - 1 - plo]
            if plo <= j < phi:
                up = pvals[j - plo]
        clo = rows[i][0]
        if j - 1 >= clo:
            left = rows[i][2][j - 1 - clo]
        if diag <= up and diag <= left:
            i, j = i - 1, j - 1
        elif up <= left:
            i = i - 1
        else:
            j = j - 1
    path.reverse()
    return float(value), path


def _fast_dtw(A, B, radius):
    if A.shape[0] <= radius + 2 or B.shape[0] <= radius + 2:
        return _dtw_full(A, B)
    _, coarse_path = _fast_dtw(_halve(A), _halve(B), radius)
    ranges = _project_ranges(coarse_path, A.shape[0], B.shape[0], radius)
    return _dtw_window(A, B, ranges)


def fast_dtw(a, b, radius=1):
    """Coarse-to-fine DTW approximation (halve, solve, refine near the path).

    Runs in roughly linear time and memory in the window size. The result is
    an upper bound of :func:`dtw_exact`; once ``radius`` reaches
    ``max(len(a), len(b))`` the recursion bottoms out in the exact table and
    the two agree bitwise.
    """
    if radius < 0:
        raise MetricError("radius must be >= 0")
    A = _as_frames(a, "a")
    B = _as_frames(b, "b")
    _check_channels(A, B)
    value, _ = _fast_dtw(A, B, int(radius))
    return value


# ---------------------------------------------------------------------------
# activation envelopes
# ---------------------------------------------------------------------------


def envelope(x, window_samples):
    """Centered moving average of |x| with edge windows truncated.

    The window must be odd (so it centers exactly) and no longer than the
    signal. Interior positions average exactly ``window_samples`` rectified
    values; near the edges the window shrinks to what fits, so the output
    has the same length as the input. Invariant under sign flips.
    """
    X = _as_frames(x, "x")
    w = int(window_samples)
    T = X.shape[0]
    if w < 1 or w % 2 == 0:
        raise MetricError(f"window must be a positive odd integer, got {window_samples}")
    if w > T:
        raise MetricError(f"window of {w} samples exceeds signal length {T}")
    absx = np.abs(X)
    cs = np.concatenate([np.zeros((1, X.shape[1])), np.cumsum(absx, axis=0)], axis=0)
    idx = np.arange(T)
    lo = np.clip(idx - (w - 1) // 2, 0, T)
    hi = np.clip(idx + w // 2 + 1, 0, T)
    out = (cs[hi] - cs[lo]) / (hi - lo)[:, None]
    return out[:, 0] if np.asarray(x).ndim == 1 else out


def envelope_cc(x, y, window_samples):
    """Pearson correlation between the activation envelopes of two signals.

    Envelopes are computed per channel with :func:`envelope`; the score is
    the mean per-channel correlation. Raises on constant envelopes, where
    the correlation is undefined.
    """
    X = _as_frames(x, "x")
    Y = _as_frames(y, "y")
    if X.shape != Y.shape:
        raise MetricError(f"envelope_cc needs equal shapes, got {X.shape} vs {Y.shape}")
    ex = envelope(X, window_samples)
    ey = envelope(Y, window_samples)
    ex = ex - ex.mean(axis=0)
    ey = ey - ey.mean(axis=0)
    var_x = (ex**2).sum(axis=0)
    var_y = (ey**2).sum(axis=0)
    bad = np.flatnonzero((var_x == 0) | (var_y == 0))
    if bad.size:
        raise MetricError(f"zero envelope variance in channel {int(bad[0])}")
    r = (ex * ey).sum(axis=0) / np.sqrt(var_x * var_y)
    return float(r.mean())
