"""Independent reference implementations used as test oracles.

These are deliberately brute force and share no code with the package.
"""

import numpy as np


def dbscan(points, eps, min_pts):
    """Plain O(n^2) DBSCAN; noise is labelled -1."""
    P = np.asarray(points, dtype=float)
    D = np.linalg.norm(P[:, None] - P[None], axis=2)
    nb = D <= eps
    core = nb.sum(axis=1) >= min_pts
    labels = np.full(len(P), -1)
    c = 0
    for i in range(len(P)):
        if not core[i] or labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = c
        while stack:
            j = stack.pop()
            if not core[j]:
                continue
            for q in np.flatnonzero(nb[j]):
                if labels[q] < 0:
                    labels[q] = c
                    stack.append(q)
        c += 1
    return labels


def co_clustering_agreement(a, b):
    """Fraction of point pairs (non-noise in both) on which two labelings agree."""
    a, b = np.asarray(a), np.asarray(b)
    m = (a >= 0) & (b >= 0)
    a, b = a[m], b[m]
    A = a[:, None] == a[None]
    B = b[:, None] == b[None]
    return float((A == B).mean())


def blob_config(seed):
    """Seeded 2-blob / 3-blob / blob-plus-outliers point sets with their blob count."""
    rng = np.random.default_rng(seed)
    kind = seed % 3
    centers = [[(0, 0), (1, 1)], [(0, 0), (1, 0), (0.5, 0.9)], [(0, 0)]][kind]
    P = np.vstack([rng.normal(c, 0.05, size=(200, 2)) for c in centers])
    if kind == 2:
        far = rng.uniform(0.6, 1.5, size=(5, 2)) * rng.choice([-1, 1], size=(5, 2))
        P = np.vstack([P, far])
    return P, len(centers)


def finite_difference_check(loss_fn, params, h=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (loss, grads)`` with params a list of (W, b) pairs.
    """
    _, grads = loss_fn(params)
    worst = 0.0
    for (W, b), (gW, gb) in zip(params, grads):
        for arr, g in ((W, gW), (b, gb)):
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                lp = loss_fn(params)[0]
                arr[idx] = old - h
                lm = loss_fn(params)[0]
                arr[idx] = old
                num = (lp - lm) / (2 * h)
                scale = max(abs(num), abs(g[idx]), 1e-7)
                worst = max(worst, abs(num - g[idx]) / scale)
    return worst


def mahalanobis_brute(x, mu, cov):
    d = np.asarray(x) - np.asarray(mu)
    return float(np.sqrt(d @ np.linalg.inv(cov) @ d))


def random_spd(rng, m):
    A = rng.normal(size=(m, m))
    return A @ A.T + 0.1 * np.eye(m)


def polyline_distance_dense(points, line, per_segment=2000):
    """Nearest distance from points to a densely resampled polyline."""
    seg = []
    for a, b in zip(line[:-1], line[1:]):
        t = np.linspace(0, 1, per_segment)[:, None]
        seg.append(a + t * (b - a))
    dense = np.vstack(seg)
    return np.array([np.min(np.linalg.norm(dense - p, axis=1)) for p in points])
