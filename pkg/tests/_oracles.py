"""Slow, direct re-computations used as test oracles.

Nothing here imports the package's numerical internals.
"""

import numpy as np


def pairwise(coords):
    coords = np.asarray(coords, float)
    n = len(coords)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = np.hypot(*(coords[i] - coords[j]))
    return d


def bisquare(d, b):
    z = d / b
    return np.where(z < 1, (1 - z ** 2) ** 2, 0.0)


def local_wls(X, y, w):
    """Weighted normal equations solved densely."""
    W = np.diag(w)
    A = X.T @ W @ X
    C = np.linalg.solve(A, X.T @ W)
    return C @ y, C


def gwr_brute(X, y, Wrows):
    """GWR from explicit weight rows: beta, hat matrix, SEs, sigma2."""
    n, p = X.shape
    beta = np.zeros((n, p))
    S = np.zeros((n, n))
    CC = np.zeros((n, p))
    for i in range(n):
        b, C = local_wls(X, y, Wrows[i])
        beta[i] = b
        S[i] = X[i] @ C
        CC[i] = np.diag(C @ C.T)
    resid = y - S @ y
    enp = 2 * np.trace(S) - np.trace(S.T @ S)
    sigma2 = resid @ resid / (n - enp)
    return beta, S, np.sqrt(CC * sigma2), sigma2


def aicc_closed(rss, n, k):
    sigma = np.sqrt(rss / n)
    return 2 * n * np.log(sigma) + n * np.log(2 * np.pi) + n * (n + k) / (n - 2 - k)


def moran_brute(v, W):
    v = np.asarray(v, float) - np.mean(v)
    n = len(v)
    return n / W.sum() * (v @ W @ v) / (v @ v)
