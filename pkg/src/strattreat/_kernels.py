"""Compiled Gaussian-kernel moment sums.

For each query point ``q`` these accumulate, over training points ``j``,

    S = sum_j K_j z_j z_j',   T = sum_j K_j z_j y_j,

with ``z_j = (1, (x_j - q) / h)`` (local linear) or ``z_j = 1`` (local
constant). Kernel weights are shifted by the smallest squared distance
per query, so the nearest training point always has weight 1 and the sums
never underflow. The shift cancels in every ratio the callers form.
"""

import numpy as np
from numba import njit

_FLAGS = {"contract", "arcp", "nsz", "afn", "reassoc"}


@njit(cache=True, fastmath=_FLAGS)
def _moments_1d(xq, xt, yt, h, degree):
    m = xq.shape[0]
    n = xt.shape[0]
    inv = 1.0 / h
    out = np.zeros((m, 5))
    for i in range(m):
        q = xq[i]
        umin = (xt[0] - q) * inv
        umin = umin * umin
        for j in range(1, n):
            u = (xt[j] - q) * inv
            if u * u < umin:
                umin = u * u
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        t0 = 0.0
        t1 = 0.0
        if degree == 0:
            for j in range(n):
                u = (xt[j] - q) * inv
                kw = np.exp(-0.5 * (u * u - umin))
                s0 += kw
                t0 += kw * yt[j]
        else:
            for j in range(n):
                u = (xt[j] - q) * inv
                kw = np.exp(-0.5 * (u * u - umin))
                s0 += kw
                s1 += kw * u
                s2 += kw * u * u
                t0 += kw * yt[j]
                t1 += kw * u * yt[j]
        out[i, 0] = s0
        out[i, 1] = s1
        out[i, 2] = s2
        out[i, 3] = t0
        out[i, 4] = t1
    return out


@njit(cache=True, fastmath=_FLAGS)
def _moments_nd(xq, xt, yt, h, degree):
    m, k = xq.shape
    n = xt.shape[0]
    p = k + 1 if degree == 1 else 1
    S = np.zeros((m, p, p))
    T = np.zeros((m, p))
    u2 = np.empty(n)
    z = np.empty(p)
    for i in range(m):
        umin = np.inf
        for j in range(n):
            s = 0.0
            for c in range(k):
                u = (xt[j, c] - xq[i, c]) / h[c]
                s += u * u
            u2[j] = s
            if s < umin:
                umin = s
        for j in range(n):
            kw = np.exp(-0.5 * (u2[j] - umin))
            z[0] = 1.0
            if degree == 1:
                for c in range(k):
                    z[c + 1] = (xt[j, c] - xq[i, c]) / h[c]
            for a in range(p):
                T[i, a] += kw * z[a] * yt[j]
                for b in range(a, p):
                    S[i, a, b] += kw * z[a] * z[b]
        for a in range(p):
            for b in range(a + 1, p):
                S[i, b, a] = S[i, a, b]
    return S, T


def kernel_moments(xq, xt, yt, h, degree):
    """Return ``(S, T)`` with shapes ``(m, p, p)`` and ``(m, p)``.

    ``xq`` is ``(m, k)``, ``xt`` is ``(n, k)``, ``h`` has length ``k``.
    """
    xq = np.ascontiguousarray(xq, dtype=np.float64)
    xt = np.ascontiguousarray(xt, dtype=np.float64)
    yt = np.ascontiguousarray(yt, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    m, k = xq.shape
    if k == 1:
        o = _moments_1d(xq[:, 0], xt[:, 0], yt, float(h[0]), degree)
        if degree == 0:
            return o[:, 0].reshape(m, 1, 1), o[:, 3].reshape(m, 1)
        S = np.empty((m, 2, 2))
        S[:, 0, 0] = o[:, 0]
        S[:, 0, 1] = S[:, 1, 0] = o[:, 1]
        S[:, 1, 1] = o[:, 2]
        return S, o[:, 3:5].copy()
    return _moments_nd(xq, xt, yt, h, degree)
