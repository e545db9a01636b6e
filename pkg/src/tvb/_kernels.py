"""Compiled inner loops for the batched GMM coordinate ascent.

Both kernels walk each member's points once, so the responsibilities, the
weighted moments and the membership entropy come out of a single pass.
Layouts: X (n, p), w (G, n), r (G, n, K).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _accumulate(X, wg, rg, Nk, sx, sxx, g):
    n, p = X.shape
    K = rg.shape[1]
    ent = 0.0
    for i in range(n):
        wi = wg[i]
        if wi == 0.0:
            continue
        for k in range(K):
            rk = rg[i, k]
            if rk > 0.0:
                ent += wi * rk * np.log(rk)
            c = wi * rk
            Nk[g, k] += c
            for a in range(p):
                xa = c * X[i, a]
                sx[g, k, a] += xa
                for b in range(p):
                    sxx[g, k, a, b] += xa * X[i, b]
    return ent


@njit(cache=True)
def moments(X, w, r):
    """Weighted counts, first and second moments and sum w r log r."""
    G, n, K = r.shape
    p = X.shape[1]
    Nk = np.zeros((G, K))
    sx = np.zeros((G, K, p))
    sxx = np.zeros((G, K, p, p))
    ent = np.zeros(G)
    for g in range(G):
        ent[g] = _accumulate(X, w[g], r[g], Nk, sx, sxx, g)
    return Nk, sx, sxx, ent


@njit(cache=True)
def estep_moments(X, w, const, half_nu, W, m):
    """Responsibilities from the current factors, then their moments.

    log rho_nk = const_k - half_nu_k * (x_n - m_k)' W_k (x_n - m_k)
    """
    G, K = const.shape
    n, p = X.shape
    r = np.empty((G, n, K))
    Nk = np.zeros((G, K))
    sx = np.zeros((G, K, p))
    sxx = np.zeros((G, K, p, p))
    ent = np.zeros(G)
    d = np.empty(p)
    lr = np.empty(K)
    for g in range(G):
        for i in range(n):
            top = -np.inf
            for k in range(K):
                for a in range(p):
                    d[a] = X[i, a] - m[g, k, a]
                q = 0.0
                for a in range(p):
                    acc = 0.0
                    for b in range(p):
                        acc += W[g, k, a, b] * d[b]
                    q += d[a] * acc
                if q < 0.0:
                    q = 0.0
                v = const[g, k] - half_nu[g, k] * q
                lr[k] = v
                if v > top:
                    top = v
            tot = 0.0
            for k in range(K):
                lr[k] = np.exp(lr[k] - top)
                tot += lr[k]
            for k in range(K):
                r[g, i, k] = lr[k] / tot
        ent[g] = _accumulate(X, w[g], r[g], Nk, sx, sxx, g)
    return r, Nk, sx, sxx, ent
