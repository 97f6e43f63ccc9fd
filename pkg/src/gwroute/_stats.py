import math

import numpy as np
from scipy import stats

from .errors import CollinearityError, SaturatedModelError


def aicc(rss, n, trS):
    """Corrected AIC shared by every model in the package.

    ``2n ln(sigma) + n ln(2 pi) + n (n + trS) / (n - 2 - trS)`` with
    ``sigma = sqrt(rss / n)``.
    """
    denom = n - 2.0 - trS
    if denom <= 0:
        raise SaturatedModelError(
            f"n - 2 - tr(S) = {denom:.3g} <= 0: the fit is saturated (bandwidth too small)")
    if rss <= 0:
        return -math.inf
    sigma = math.sqrt(rss / n)
    return 2 * n * math.log(sigma) + n * math.log(2 * math.pi) + n * (n + trS) / denom


def t_pvalues(t, df):
    """Two-sided p-values from Student's t."""
    return 2.0 * stats.t.sf(np.abs(t), df)


def pseudo_df(n, enp):
    """Residual degrees of freedom for local pseudo t-tests: floor(n - enp), at least 1."""
    return max(1, int(math.floor(n - enp)))


def r_squared(y, resid):
    tss = float(np.sum((y - y.mean()) ** 2))
    rss = float(resid @ resid)
    return 1.0 - rss / tss if tss > 0 else float("nan")


def dependent_columns(X, names, rtol=1e-10):
    """Names of columns that are linear combinations of earlier columns."""
    dep = []
    kept = []
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    for j in range(X.shape[1]):
        trial = Xs[:, kept + [j]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= rtol * max(s[0], 1.0) * max(trial.shape):
            dep.append(names[j])
        else:
            kept.append(j)
    return dep


def require_full_rank(X, names, what="design matrix"):
    dep = dependent_columns(X, names)
    if dep:
        raise CollinearityError(
            f"{what} is rank deficient; linearly dependent column(s): {', '.join(dep)}",
            columns=dep)
