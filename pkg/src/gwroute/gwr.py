"""Standard GWR: local weighted least squares at every data point.

Local fits are computed in fixed-size blocks of calibration locations.
Blocks can be spread over threads; because block boundaries never depend
on the worker count, results are bit-identical for any ``threads`` value.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._stats import aicc, pseudo_df, r_squared, t_pvalues
from .dataset import SpatialDataset, as_distance_matrix
from .errors import (
    BandwidthError,
    LocalSingularityError,
    OptimizationError,
    SaturatedModelError,
)
from .kernel import Bandwidth, KernelSpec, weight_rows

log = logging.getLogger(__name__)

BLOCK = 128
HAT_LIMIT = 5_000
COND_LIMIT = 1e12
PLATEAU_AICC = 2.0
OVERFIT_FRACTION = 0.02


def default_threads():
    try:
        return max(1, int(os.environ.get("GWROUTE_THREADS", "1")))
    except ValueError:
        return 1


def _blocks(n):
    return [np.arange(s, min(s + BLOCK, n)) for s in range(0, n, BLOCK)]


def _map_blocks(func, n, threads):
    blocks = _blocks(n)
    threads = threads or default_threads()
    if threads <= 1 or len(blocks) == 1:
        return [func(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, blocks))


def _singular(A, W, p):
    d = np.einsum("rii->ri", A)
    bad = np.count_nonzero(W, axis=1) < p
    bad |= np.any(d <= 0, axis=1)
    scale = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    An = A * scale[:, :, None] * scale[:, None, :]
    ok = ~bad
    if np.any(ok):
        cond = np.linalg.cond(An[ok])
        bad[np.flatnonzero(ok)[~(cond < COND_LIMIT)]] = True
    return bad


def _local_solve(X, y, W, rows):
    """Coefficients, hat diagonals and A^-1 for the locations in ``rows``."""
    p = X.shape[1]
    A = np.einsum("rj,jp,jq->rpq", W, X, X, optimize=True)
    bad = _singular(A, W, p)
    A_safe = np.where(bad[:, None, None], np.eye(p), A)
    Ainv = np.linalg.inv(A_safe)
    rhs = W @ (X * y[:, None])
    beta = np.einsum("rpq,rq->rp", Ainv, rhs)
    xi = X[rows]
    wii = W[np.arange(rows.size), rows]
    hat_ii = wii * np.einsum("rp,rpq,rq->r", xi, Ainv, xi)
    return beta, hat_ii, Ainv, bad


@dataclass
class GwrFit:
    """Result of a standard GWR calibrated at the data points."""

    names: list
    spec: KernelSpec
    params: np.ndarray
    bse: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    hat_diag: np.ndarray
    trS: float
    trSS: float
    enp: float
    df: int
    rss: float
    sigma2: float
    aicc: float
    r2: float
    n: int
    coords: np.ndarray
    S: np.ndarray = None
    model: str = "gwr"
    warnings: list = field(default_factory=list)

    @property
    def local_names(self):
        return list(self.names)

    def surfaces(self):
        return {nm: (self.params[:, j], self.bse[:, j], self.tvalues[:, j], self.pvalues[:, j])
                for j, nm in enumerate(self.names)}

    def summary_dict(self):
        return {
            "model": self.model, "n": self.n, "kernel": self.spec.kernel,
            "bandwidth": str(self.spec.bandwidth),
            "bandwidth_value": self.spec.bandwidth.value, "rss": self.rss, "sigma2": self.sigma2,
            "trS": self.trS, "trSS": self.trSS, "enp": self.enp, "df": self.df,
            "aicc": self.aicc, "r2": self.r2,
            "coefficient_summary": _surface_summary(self.names, self.params),
            "warnings": list(self.warnings),
        }


def _surface_summary(names, params):
    out = {}
    for j, nm in enumerate(names):
        q = np.percentile(params[:, j], [0, 25, 50, 75, 100])
        out[nm] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
    return out


def _raise_singular(bad_rows, spec):
    bad_rows = sorted(int(i) for i in bad_rows)
    raise LocalSingularityError(
        f"local regression is singular at {len(bad_rows)} location(s) with "
        f"{spec.kernel} {spec.bandwidth}: first {bad_rows[:10]}", locations=bad_rows)


def local_fit(i, X, y, dm, spec):
    """Coefficients and hat-row ingredients for calibration location ``i``.

    Returns ``(beta_i, C_i)`` with ``C_i = (X' W_i X)^-1 X' W_i`` so that
    ``beta_i = C_i y`` and the i-th hat row is ``X[i] @ C_i``.
    """
    w = weight_rows(dm, spec, [i])[0]
    A = (X * w[:, None]).T @ X
    if _singular(A[None], w[None], X.shape[1])[0]:
        raise LocalSingularityError(f"local regression is singular at location {i}", locations=[i])
    C = np.linalg.solve(A, X.T * w)
    return C @ y, C


def gwr_criterion(X, y, dm, spec, threads=None):
    """AICc of a GWR fit without building standard errors or the hat matrix."""
    n, p = X.shape
    spec.check(n)

    def work(rows):
        W = weight_rows(dm, spec, rows)
        beta, hat_ii, _, bad = _local_solve(X, y, W, rows)
        return np.einsum("rp,rp->r", X[rows], beta), hat_ii, bad

    parts = _map_blocks(work, n, threads)
    bad = np.concatenate([b for _, _, b in parts])
    if bad.any():
        _raise_singular(np.flatnonzero(bad), spec)
    fitted = np.concatenate([f for f, _, _ in parts])
    trS = float(np.sum(np.concatenate([h for _, h, _ in parts])))
    resid = y - fitted
    return aicc(float(resid @ resid), n, trS)


def gwr_arrays(X, y, names, dm, spec, threads=None, keep_hat=None):
    """Full GWR fit on arrays (``X`` includes any intercept column)."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    spec.check(n)
    keep_hat = n <= HAT_LIMIT if keep_hat is None else keep_hat

    def work(rows):
        W = weight_rows(dm, spec, rows)
        beta, hat_ii, Ainv, bad = _local_solve(X, y, W, rows)
        # C_i = Ainv X' W_i ; var(beta_i) ∝ Ainv X' W_i^2 X Ainv
        B = np.einsum("rj,jp,jq->rpq", W ** 2, X, X, optimize=True)
        ccT = np.einsum("rpa,rab,rbp->rp", Ainv, B, Ainv, optimize=True)
        G = np.einsum("rpq,rq->rp", Ainv, X[rows])
        Srows = (G @ X.T) * W
        ss = np.einsum("rj,rj->r", Srows, Srows)
        return beta, hat_ii, ccT, bad, (Srows if keep_hat else None), ss

    parts = _map_blocks(work, n, threads)
    bad = np.concatenate([pt[3] for pt in parts])
    if bad.any():
        _raise_singular(np.flatnonzero(bad), spec)
    beta = np.vstack([pt[0] for pt in parts])
    hat_diag = np.concatenate([pt[1] for pt in parts])
    ccT = np.vstack([pt[2] for pt in parts])
    S = np.vstack([pt[4] for pt in parts]) if keep_hat else None
    trSS = float(np.sum(np.concatenate([pt[5] for pt in parts])))
    fitted = np.einsum("ip,ip->i", X, beta)
    resid = y - fitted
    rss = float(resid @ resid)
    trS = float(np.sum(hat_diag))
    enp = 2.0 * trS - trSS
    if n - enp <= 0:
        raise SaturatedModelError(f"effective number of parameters {enp:.3g} >= n = {n}")
    sigma2 = rss / (n - enp)
    bse = np.sqrt(np.maximum(ccT, 0.0) * sigma2)
    df = pseudo_df(n, enp)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = beta / bse
    pvals = t_pvalues(tvals, df)
    return GwrFit(
        names=list(names), spec=spec, params=beta, bse=bse, tvalues=tvals, pvalues=pvals,
        fitted=fitted, residuals=resid, hat_diag=hat_diag, trS=trS, trSS=trSS, enp=enp, df=df,
        rss=rss, sigma2=sigma2, aicc=aicc(rss, n, trS), r2=r_squared(y, resid), n=n,
        coords=np.asarray(dm.coords), S=S)


def fit_gwr(ds: SpatialDataset, predictors=None, spec: KernelSpec = None, dm=None,
            threads=None) -> GwrFit:
    """Standard GWR of the response on ``predictors`` (plus intercept) at ``spec``.

    Local standard errors use ``sigma2 = RSS / (n - enp)`` with
    ``enp = 2 tr(S) - tr(S'S)``; pseudo t-tests use ``floor(n - enp)``
    degrees of freedom. Raises :class:`LocalSingularityError` listing every
    location whose local regression cannot be solved.
    """
    if spec is None:
        raise BandwidthError("a KernelSpec is required; use optimize_bandwidth to choose one")
    X, names = ds.design(predictors)
    dm = as_distance_matrix(ds if dm is None else dm)
    return gwr_arrays(X, ds.response, names, dm, spec, threads=threads)


def cv_score(ds_or_X, y=None, dm=None, spec=None, predictors=None, threads=None):
    """Leave-one-out cross-validation score, ``sum_i (y_i - yhat_(i))^2``.

    Accepts either a dataset (with ``predictors``) or a design matrix plus
    ``y`` and a distance matrix. Singular leave-one-out fits give ``+inf``
    with a warning.
    """
    if isinstance(ds_or_X, SpatialDataset):
        X, _ = ds_or_X.design(predictors)
        y = ds_or_X.response
        dm = as_distance_matrix(ds_or_X if dm is None else dm)
    else:
        X = np.asarray(ds_or_X, float)
    n, p = X.shape
    spec.check(n)

    def work(rows):
        W = weight_rows(dm, spec, rows, loo=True)
        beta, _, _, bad = _local_solve(X, y, W, rows)
        return np.einsum("rp,rp->r", X[rows], beta), bad

    parts = _map_blocks(work, n, threads)
    bad = np.concatenate([b for _, b in parts])
    if bad.any():
        warnings.warn(f"leave-one-out fit singular at {bad.sum()} location(s) for "
                      f"{spec.kernel} {spec.bandwidth}; CV score set to +inf", stacklevel=2)
        return math.inf
    pred = np.concatenate([f for f, _ in parts])
    return float(np.sum((y - pred) ** 2))


# -- bandwidth search ---------------------------------------------------------

@dataclass
class BandwidthCurve:
    bandwidths: np.ndarray
    values: np.ndarray
    criterion: str
    form: str
    lower: float
    upper: float
    plateau: bool = False
    boundary_minimum: bool = False
    overfit: bool = False

    def as_rows(self):
        return [(float(b), float(v)) for b, v in zip(self.bandwidths, self.values)]

    def is_unimodal(self, tol=1e-6):
        """True when finite values fall then rise (ripples below ``tol`` ignored)."""
        v = self.values[np.isfinite(self.values)]
        if v.size < 3:
            return True
        k = int(np.argmin(v))
        down = np.all(np.diff(v[:k + 1]) <= tol)
        up = np.all(np.diff(v[k:]) >= -tol)
        return bool(down and up)

    def summary_dict(self):
        return {"criterion": self.criterion, "form": self.form, "lower": self.lower,
                "upper": self.upper, "plateau": self.plateau,
                "boundary_minimum": self.boundary_minimum, "overfit": self.overfit,
                "points": self.as_rows()}


def bandwidth_bounds(dm, p, form):
    """Search interval guaranteeing ``2p`` positively weighted points everywhere."""
    need = min(2 * p, dm.n)
    if form == "adaptive":
        return need, dm.n
    lower = float(np.max(dm.kth_distance(min(need + 1, dm.n))))
    upper = dm.max_pair_distance
    if lower >= upper:
        lower = upper * 0.5
    return lower, upper


def golden_section(f, lower, upper, tol, integer=False, max_iter=500):
    """Minimise ``f`` on [lower, upper]; returns (argmin, {x: f(x)}).

    Both bounds are evaluated too, so a minimum on the boundary is found and
    can be flagged. ``+inf`` evaluations (singular fits) push the bracket
    towards larger bandwidths. On integers the bracket shrinks on the rounded
    lattice until at most three candidates remain, which are all evaluated.
    """
    cache = {}

    def F(x):
        x = int(round(x)) if integer else float(x)
        if x not in cache:
            cache[x] = f(x)
            log.debug("bandwidth %s -> %s", x, cache[x])
        return cache[x]

    delta = 0.38197
    a, c = (int(lower), int(upper)) if integer else (float(lower), float(upper))
    F(a)
    F(c)
    if integer:
        it = 0
        while c - a > 2 and it < max_iter:
            it += 1
            b = int(round(a + delta * (c - a)))
            d = int(round(c - delta * (c - a)))
            if d <= b:
                d = b + 1
            fb, fd = F(b), F(d)
            if math.isinf(fb) and math.isinf(fd):
                a = b
            elif fb <= fd:
                c = d
            else:
                a = b
        for x in range(a, c + 1):
            F(x)
    else:
        b = a + delta * (c - a)
        d = c - delta * (c - a)
        fb, fd = F(b), F(d)
        it = 0
        while c - a > tol and it < max_iter:
            it += 1
            if fb <= fd and not (math.isinf(fb) and math.isinf(fd)):
                c, d, fd = d, b, fb
                b = a + delta * (c - a)
                fb = F(b)
            else:
                a, b, fb = b, d, fd
                d = c - delta * (c - a)
                fd = F(d)
    finite = {x: v for x, v in cache.items() if np.isfinite(v)}
    if not finite:
        raise OptimizationError("every candidate bandwidth failed", curve=cache)
    best = min(sorted(finite), key=lambda x: finite[x])
    return best, cache


def make_curve(cache, criterion, form, lower, upper, best, tol, n=None):
    xs = np.array(sorted(cache))
    vals = np.array([cache[x] for x in xs], dtype=float)
    finite = vals[np.isfinite(vals)]
    plateau = criterion == "aicc" and finite.size > 1 and np.ptp(finite) < PLATEAU_AICC
    near = tol if form == "fixed" else 1
    boundary = (best - lower <= near) or (upper - best <= near)
    overfit = form == "adaptive" and n is not None and best < OVERFIT_FRACTION * n
    return BandwidthCurve(xs, vals, criterion, form, float(lower), float(upper),
                          bool(plateau), bool(boundary), bool(overfit))


def fixed_tolerance(dm):
    return max(0.1, 1e-4 * dm.max_pair_distance)


def select_bandwidth(criterion_fn, dm, p, form, criterion="aicc", bounds=None):
    """Golden-section bandwidth choice for any ``criterion_fn(Bandwidth) -> float``.

    Evaluation failures (singular local fits, saturated AICc) count as
    ``+inf``.
    """
    lower, upper = bounds or bandwidth_bounds(dm, p, form)
    tol = fixed_tolerance(dm)

    def f(value):
        try:
            return criterion_fn(Bandwidth(form, value))
        except (LocalSingularityError, SaturatedModelError, BandwidthError):
            return math.inf

    best, cache = golden_section(f, lower, upper, tol, integer=(form == "adaptive"))
    curve = make_curve(cache, criterion, form, lower, upper, best, tol, n=dm.n)
    return Bandwidth(form, best), curve


def optimize_bandwidth(ds: SpatialDataset, predictors=None, kernel="bisquare", form="fixed",
                       criterion="aicc", dm=None, threads=None, bounds=None):
    """Choose a GWR bandwidth by golden-section search on AICc or CV.

    Returns the chosen :class:`Bandwidth` and the :class:`BandwidthCurve` of
    every evaluated candidate, flagged for plateaus, boundary minima and
    (adaptive) over-fitting.
    """
    X, _ = ds.design(predictors)
    y = ds.response
    dm = as_distance_matrix(ds if dm is None else dm)
    if criterion not in ("aicc", "cv"):
        raise ValueError(f"criterion must be 'aicc' or 'cv', not {criterion!r}")

    def crit(bw):
        spec = KernelSpec(kernel, bw)
        if criterion == "aicc":
            return gwr_criterion(X, y, dm, spec, threads=threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cv_score(X, y, dm, spec, threads=threads)

    return select_bandwidth(crit, dm, X.shape[1], form, criterion, bounds)


def bandwidth_curve(ds, predictors=None, kernel="bisquare", form="fixed", criterion="aicc",
                    grid=None, n_points=40, dm=None, threads=None):
    """Criterion evaluated on a grid of bandwidths (for plotting and inspection)."""
    X, _ = ds.design(predictors)
    dm = as_distance_matrix(ds if dm is None else dm)
    lower, upper = bandwidth_bounds(dm, X.shape[1], form)
    if grid is None:
        grid = np.linspace(lower, upper, n_points)
        if form == "adaptive":
            grid = np.unique(np.round(grid).astype(int))
    cache = {}
    for b in grid:
        b = int(b) if form == "adaptive" else float(b)
        spec = KernelSpec(kernel, Bandwidth(form, b))
        try:
            if criterion == "aicc":
                cache[b] = gwr_criterion(X, ds.response, dm, spec, threads=threads)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    cache[b] = cv_score(X, ds.response, dm, spec, threads=threads)
        except (LocalSingularityError, SaturatedModelError):
            cache[b] = math.inf
    finite = {k: v for k, v in cache.items() if np.isfinite(v)}
    if not finite:
        raise OptimizationError("every grid bandwidth failed", curve=cache)
    best = min(finite, key=finite.get)
    return make_curve(cache, criterion, form, lower, upper, best, fixed_tolerance(dm), n=dm.n)
