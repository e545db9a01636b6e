"""Weighted k-means++ seeding plus Lloyd refinement, batched over weight vectors.

Used only to initialise responsibilities. Every member of a batch draws from its
own generator so results do not depend on how members are grouped.
"""

import numpy as np

LLOYD_ITER = 25


def _sq_dist(X, centers):
    # X (n, p), centers (G, K, p) -> (G, n, K)
    xx = np.einsum("np,np->n", X, X)
    cc = np.einsum("gkp,gkp->gk", centers, centers)
    cross = np.einsum("np,gkp->gnk", X, centers)
    return np.maximum(xx[None, :, None] - 2.0 * cross + cc[:, None, :], 0.0)


def kmeans_pp_labels(X, weights, K, rngs):
    """Hard cluster labels for each weight vector.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Points shared by all members.
    weights : ndarray, shape (G, n)
        Nonnegative point multiplicities, one row per member.
    K : int
        Number of clusters.
    rngs : sequence of numpy.random.Generator
        One generator per member.

    Returns
    -------
    labels : ndarray of int, shape (G, n)
    ok : ndarray of bool, shape (G,)
        False where fewer than K distinct weighted points exist, so k-means
        cannot produce K nonempty clusters.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(weights, dtype=float)
    G, n = w.shape
    p = X.shape[1]
    centers = np.zeros((G, K, p))
    ok = np.ones(G, dtype=bool)
    for g in range(G):
        rng = rngs[g]
        wg = w[g]
        total = wg.sum()
        if total <= 0:
            ok[g] = False
            continue
        first = rng.choice(n, p=wg / total)
        centers[g, 0] = X[first]
        d2 = np.sum((X - X[first]) ** 2, axis=1)
        for k in range(1, K):
            score = wg * d2
            s = score.sum()
            if s <= 0:
                ok[g] = False
                break
            idx = rng.choice(n, p=score / s)
            centers[g, k] = X[idx]
            d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    labels = np.argmin(_sq_dist(X, centers), axis=2)
    for _ in range(LLOYD_ITER):
        onehot = np.eye(K)[labels] * w[:, :, None]
        mass = onehot.sum(axis=1)
        sums = np.einsum("gnk,np->gkp", onehot, X)
        safe = np.where(mass > 0, mass, 1.0)
        new_centers = np.where(mass[:, :, None] > 0, sums / safe[:, :, None], centers)
        new_labels = np.argmin(_sq_dist(X, new_centers), axis=2)
        centers = new_centers
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    onehot = np.eye(K)[labels] * w[:, :, None]
    ok &= np.all(onehot.sum(axis=1) > 0, axis=1)
    return labels, ok


def soften(labels, K, hit=0.9):
    """One-hot labels smoothed to ``hit`` on the assigned cluster."""
    if K == 1:
        return np.ones(labels.shape + (1,))
    r = np.full(labels.shape + (K,), (1.0 - hit) / (K - 1))
    np.put_along_axis(r, labels[..., None], hit, axis=-1)
    return r


def init_responsibilities(X, weights, K, rngs, hit=0.9):
    """Softened k-means++ responsibilities with a uniform-random fallback."""
    labels, ok = kmeans_pp_labels(X, weights, K, rngs)
    r = soften(labels, K, hit)
    for g in np.flatnonzero(~ok):
        raw = rngs[g].uniform(size=(X.shape[0], K))
        r[g] = raw / raw.sum(axis=1, keepdims=True)
    return r
