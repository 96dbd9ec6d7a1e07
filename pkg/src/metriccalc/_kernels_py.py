"""Pure numpy implementations of the hot loops.

Every function here has a twin in ``_core.pyx`` with the same signature and
the same results (bit-for-bit for max/min reductions).  ``metriccalc.kernels``
picks one of the two at import time.
"""
import numpy as np

# relative slack for closed-ball membership, d <= r * (1 + BALL_RTOL)
BALL_RTOL = 1e-12

_BLOCK = 256


def scale_maxima(indptr, indices, dists, values, radii):
    """Per-point, per-scale maxima of |f(y) - f(x)| and |f(y) - f(x)| / d(x, y).

    ``radii`` is strictly decreasing.  Row ``x`` of the CSR neighbour lists
    must hold every y != x with d(x, y) <= radii[0] that should be visible.

    Returns ``(amp, slope)`` of shape (n, K): amp[x, k] is the largest
    increment over the closed ball B(x, radii[k]) and slope[x, k] the largest
    difference quotient over the punctured ball.  Empty balls give 0.
    """
    n = len(indptr) - 1
    radii = np.asarray(radii, dtype=float)
    K = len(radii)
    amp = np.zeros((n, K))
    slope = np.zeros((n, K))
    if len(indices) == 0:
        return amp, slope
    rows = np.repeat(np.arange(n), np.diff(indptr))
    delta = np.abs(values[indices] - values[rows])
    q = delta / dists
    # bucket = deepest scale whose ball still contains the neighbour
    lim = radii * (1.0 + BALL_RTOL)
    bucket = np.searchsorted(-lim, -dists, side="right") - 1
    keep = bucket >= 0
    flat = rows[keep] * K + bucket[keep]
    amp_b = np.zeros(n * K)
    slope_b = np.zeros(n * K)
    np.maximum.at(amp_b, flat, delta[keep])
    np.maximum.at(slope_b, flat, q[keep])
    # ball k contains buckets k, k+1, ..., K-1
    amp = np.maximum.accumulate(amp_b.reshape(n, K)[:, ::-1], axis=1)[:, ::-1]
    slope = np.maximum.accumulate(slope_b.reshape(n, K)[:, ::-1], axis=1)[:, ::-1]
    return np.ascontiguousarray(amp), np.ascontiguousarray(slope)


def cross_dist(a, b, alpha):
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if alpha != 1.0:
        d = d**alpha
    return d


def max_slope_coords(coords, alpha, values):
    """Largest |f(i) - f(j)| / d(i, j) over pairs, d = |x_i - x_j|^alpha.

    Returns ``(value, i, j)`` with the lexicographically first maximizing pair
    (i < j); ``(0.0, -1, -1)`` when there is nothing to compare.
    """
    n = len(values)
    best, bi, bj = 0.0, -1, -1
    for lo in range(0, n, _BLOCK):
        hi = min(n, lo + _BLOCK)
        d = cross_dist(coords[lo:hi], coords, alpha)
        q = _block_slopes(d, values, lo, hi)
        flat = int(np.argmax(q))
        val = q.flat[flat]
        if val > best:
            best = float(val)
            bi, bj = lo + flat // n, flat % n
    return best, bi, bj


def max_slope_dense(dist, values):
    """Same as :func:`max_slope_coords` for an explicit distance matrix."""
    n = len(values)
    best, bi, bj = 0.0, -1, -1
    for lo in range(0, n, _BLOCK):
        hi = min(n, lo + _BLOCK)
        q = _block_slopes(dist[lo:hi], values, lo, hi)
        flat = int(np.argmax(q))
        val = q.flat[flat]
        if val > best:
            best = float(val)
            bi, bj = lo + flat // n, flat % n
    return best, bi, bj


def _block_slopes(d, values, lo, hi):
    n = len(values)
    q = np.zeros_like(d)
    rows = np.arange(lo, hi)[:, None]
    upper = np.arange(n)[None, :] > rows
    delta = np.abs(values[lo:hi, None] - values[None, :])
    np.divide(delta, d, out=q, where=upper)
    return q


def mcshane_coords(coords, alpha, anchors, anchor_values, lip):
    """min over anchors a of f(a) + lip * d(a, y), for every point y."""
    n = coords.shape[0]
    out = np.full(n, np.inf)
    sub = coords[anchors]
    for lo in range(0, len(anchors), _BLOCK):
        hi = min(len(anchors), lo + _BLOCK)
        d = cross_dist(sub[lo:hi], coords, alpha)
        cand = anchor_values[lo:hi, None] + lip * d
        np.minimum(out, cand.min(axis=0), out=out)
    return out


def mcshane_dense(dist, anchors, anchor_values, lip):
    out = np.full(dist.shape[0], np.inf)
    for lo in range(0, len(anchors), _BLOCK):
        hi = min(len(anchors), lo + _BLOCK)
        cand = anchor_values[lo:hi, None] + lip * dist[anchors[lo:hi]]
        np.minimum(out, cand.min(axis=0), out=out)
    return out
