"""Residual autocorrelation (Moran's I), collinearity and outlier diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, stats

from .dataset import INTERCEPT, SpatialDataset, as_distance_matrix
from .errors import UserInputError
from .kernel import weight_rows

CN_LIMIT = 30.0
VIF_LIMIT = 10.0
VDP_LIMIT = 0.5
CORR_LIMIT = 0.8
OUTLIER_LIMIT = 3.0


# -- spatial weights ----------------------------------------------------------

@dataclass
class WeightMatrix:
    w: sparse.csr_matrix
    scheme: str
    row_standardized: bool
    islands: list = field(default_factory=list)

    @property
    def n(self):
        return self.w.shape[0]

    @property
    def s0(self):
        return float(self.w.sum())

    def scaled(self, factor):
        return WeightMatrix(self.w * factor, self.scheme, self.row_standardized, list(self.islands))


def parse_scheme(text):
    """``knn:8``, ``distance_band:150`` or ``inverse_distance:2`` -> (kind, value)."""
    kind, _, value = str(text).partition(":")
    if kind == "knn":
        return kind, int(value or 8)
    if kind in ("distance_band", "inverse_distance"):
        return kind, float(value or (1.0 if kind == "inverse_distance" else "nan"))
    raise UserInputError(f"unknown weight scheme {text!r}")


def build_weight_matrix(ds_or_dm, scheme="knn:8", row_standardize=True):
    """Spatial weights between observations (zero diagonal).

    Schemes: ``knn:k`` (k nearest others, ties by row order),
    ``distance_band:d`` (binary, neighbours within d) and
    ``inverse_distance:power``. Rows without neighbours are reported as
    islands with a warning and stay all-zero after standardisation.
    """
    dm = as_distance_matrix(ds_or_dm)
    kind, value = parse_scheme(scheme) if isinstance(scheme, str) else scheme
    n = dm.n
    rows, cols, vals = [], [], []
    if kind == "knn":
        k = int(value)
        if not 0 < k < n:
            raise UserInputError(f"knn needs 0 < k < n, got k={k}")
        for i in range(n):
            order = dm.order[i] if dm.materialized else np.argsort(dm.row(i), kind="stable")
            nb = [j for j in order[: k + 1] if j != i][:k]
            rows += [i] * k
            cols += nb
            vals += [1.0] * k
    elif kind == "distance_band":
        if not value > 0:
            raise UserInputError("distance band must be > 0")
        for i in range(n):
            d = dm.row(i)
            nb = np.flatnonzero(d <= value)
            nb = nb[nb != i]
            rows += [i] * nb.size
            cols += nb.tolist()
            vals += [1.0] * nb.size
    elif kind == "inverse_distance":
        for i in range(n):
            d = dm.row(i)
            nb = np.flatnonzero(d > 0)
            rows += [i] * nb.size
            cols += nb.tolist()
            vals += (d[nb] ** -float(value)).tolist()
    else:
        raise UserInputError(f"unknown weight scheme {kind!r}")
    w = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    rs = np.asarray(w.sum(1)).ravel()
    islands = np.flatnonzero(rs == 0).tolist()
    if islands:
        warnings.warn(f"{len(islands)} observation(s) have no neighbours under {scheme}: "
                      f"rows {islands[:10]}{' ...' if len(islands) > 10 else ''}", stacklevel=2)
    if row_standardize:
        inv = np.where(rs > 0, 1.0 / np.where(rs > 0, rs, 1.0), 0.0)
        w = sparse.diags(inv) @ w
    label = f"{kind}({value:g})" if isinstance(value, float) else f"{kind}({value})"
    return WeightMatrix(w.tocsr(), label, row_standardize, islands)


def _standardize(w):
    rs = np.asarray(w.sum(1)).ravel()
    inv = np.where(rs > 0, 1.0 / np.where(rs > 0, rs, 1.0), 0.0)
    return (sparse.diags(inv) @ w).tocsr()


# -- Moran's I ----------------------------------------------------------------

@dataclass
class MoranResult:
    I: float
    expectation: float
    variance: float
    z: float
    p_value: float
    mode: str
    p_permutation: float = None
    permutations: int = 0
    seed: int = None

    def summary_dict(self):
        return {"I": self.I, "expectation": self.expectation, "variance": self.variance,
                "z": self.z, "p_value": self.p_value, "mode": self.mode,
                "p_permutation": self.p_permutation, "permutations": self.permutations,
                "seed": self.seed}


def _moran_stat(v, W, s0):
    return (v.size / s0) * float(v @ (W @ v)) / float(v @ v)


def morans_i(values, w: WeightMatrix, mode="raw", X=None, permutations=0, seed=0):
    """Moran's I with an analytical two-sided normal p-value.

    ``mode="raw"`` centres ``values`` and uses the normality moments with
    ``E[I] = -1/(n-1)``. ``mode="residual_adjusted"`` takes ``values`` as OLS
    residuals of design ``X`` (intercept included) and uses the exact
    regression-residual moments with ``M = I - X (X'X)^-1 X'``.
    With ``permutations > 0`` a seeded permutation p-value is added.
    """
    v = np.asarray(values, float).ravel()
    n = v.size
    if n != w.n:
        raise UserInputError("values and weight matrix sizes differ")
    if np.ptp(v) == 0:
        raise UserInputError("Moran's I is undefined for constant values")
    W = w.w
    s0 = w.s0
    if mode == "raw":
        v = v - v.mean()
        ei = -1.0 / (n - 1)
        Wd = W.toarray()
        s1 = 0.5 * float(np.sum((Wd + Wd.T) ** 2))
        s2 = float(np.sum((Wd.sum(0) + Wd.sum(1)) ** 2))
        var = (n * n * s1 - n * s2 + 3 * s0 * s0) / (s0 * s0 * (n * n - 1)) - ei * ei
    elif mode == "residual_adjusted":
        if X is None:
            raise UserInputError("residual_adjusted mode needs the design matrix X")
        X = np.asarray(X, float)
        k = X.shape[1]
        Q, _ = np.linalg.qr(X)
        Wd = W.toarray()
        # MW = W - Q Q' W
        MW = Wd - Q @ (Q.T @ Wd)
        tr_mw = float(np.trace(MW))
        tr_mwmwt = float(np.sum(MW * MW))
        tr_mw2 = float(np.sum(MW * MW.T))
        ei = n * tr_mw / ((n - k) * s0)
        var = (n / s0) ** 2 * (tr_mwmwt + tr_mw2 + tr_mw ** 2) / ((n - k) * (n - k + 2)) - ei * ei
    else:
        raise UserInputError(f"unknown Moran mode {mode!r}")
    I = _moran_stat(v, W, s0)
    z = (I - ei) / math.sqrt(var)
    p = float(2.0 * stats.norm.sf(abs(z)))
    res = MoranResult(I, ei, var, z, p, mode)
    if permutations:
        rng = np.random.default_rng(seed)
        sims = np.array([_moran_stat(rng.permutation(v), W, s0) for _ in range(permutations)])
        centre = sims.mean()
        extreme = np.sum(np.abs(sims - centre) >= abs(I - centre))
        res.p_permutation = float((extreme + 1) / (permutations + 1))
        res.permutations = int(permutations)
        res.seed = seed
    return res


# -- collinearity -------------------------------------------------------------

@dataclass
class CollinearityReport:
    names: list
    correlations: np.ndarray = None
    high_correlations: list = field(default_factory=list)
    vif: np.ndarray = None
    condition_number: float = None
    condition_indices: np.ndarray = None
    vdp: np.ndarray = None          # rows: condition indices, cols: coefficients
    dependencies: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    # local parts (n leading dimension)
    local_cn: np.ndarray = None
    local_vif: np.ndarray = None
    local_vdp: np.ndarray = None
    gw_correlations: dict = None
    singular_locations: list = field(default_factory=list)

    def summary_dict(self):
        out = {"names": self.names, "flags": list(self.flags),
               "dependencies": list(self.dependencies)}
        if self.vif is not None:
            preds = [nm for nm in self.names if nm != INTERCEPT]
            out["vif"] = {nm: float(v) for nm, v in zip(preds, self.vif)}
            out["condition_number"] = float(self.condition_number)
            out["correlations"] = self.correlations.tolist()
            out["high_correlations"] = self.high_correlations
            out["vdp"] = self.vdp.tolist()
            out["condition_indices"] = self.condition_indices.tolist()
        if self.local_cn is not None:
            cn = self.local_cn[np.isfinite(self.local_cn)]
            out["local_cn"] = {"max": float(np.max(self.local_cn)),
                               "median": float(np.median(cn)) if cn.size else None,
                               "n_over_limit": int(np.sum(self.local_cn > CN_LIMIT))}
            out["singular_locations"] = list(self.singular_locations)
        return out


def _cn_vdp(Xs, names):
    """Condition number, condition indices and VDPs of a design (columns unit-normed)."""
    norms = np.linalg.norm(Xs, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    Z = Xs / norms
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    smax = s[0]
    tiny = smax * max(Z.shape) * np.finfo(float).eps
    degenerate = s <= tiny
    cn = math.inf if degenerate.any() else float(smax / s[-1])
    s_safe = np.where(degenerate, tiny, s)
    phi = (Vt.T ** 2) / (s_safe ** 2)[None, :]         # coefficients x indices
    vdp = (phi / phi.sum(1, keepdims=True)).T           # indices x coefficients
    ci = np.where(degenerate, math.inf, smax / s_safe)
    deps = []
    for j in np.flatnonzero(degenerate):
        v = Vt[j]
        involved = [names[i] for i in np.flatnonzero(np.abs(v) > 1e-6)]
        deps.append(involved)
    return cn, ci, vdp, deps


def _vifs(P, w=None):
    """VIF of each column of ``P`` from (weighted) auxiliary regressions."""
    n, m = P.shape
    w = np.ones(n) if w is None else w
    sw = np.sqrt(w)
    out = np.empty(m)
    for k in range(m):
        others = np.column_stack([np.ones(n), np.delete(P, k, axis=1)]) * sw[:, None]
        target = P[:, k] * sw
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        r = target - others @ coef
        mu = np.sum(w * P[:, k]) / np.sum(w)
        tss = float(np.sum(w * (P[:, k] - mu) ** 2))
        rss = float(r @ r)
        if tss <= 0 or rss <= 1e-12 * tss:
            out[k] = math.inf
        else:
            out[k] = tss / rss
    return out


def _weighted_corr(P, w):
    sw = w / w.sum()
    mu = sw @ P
    D = P - mu
    cov = (D * sw[:, None]).T @ D
    sd = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        return cov / np.outer(sd, sd)


def global_collinearity(ds: SpatialDataset, predictors=None):
    """Correlations, VIFs, condition number and variance-decomposition proportions.

    The condition number and VDPs come from the SVD of the design with the
    intercept included and every column scaled to unit length.
    """
    X, names = ds.design(predictors)
    P = X[:, 1:]
    if P.shape[1] < 2:
        raise UserInputError("collinearity diagnostics need at least two predictors")
    return _collinearity(X, names)


def _collinearity(X, names):
    P = X[:, 1:]
    preds = names[1:]
    corr = np.corrcoef(P, rowvar=False)
    high = [(preds[a], preds[b], float(corr[a, b]))
            for a in range(len(preds)) for b in range(a + 1, len(preds))
            if abs(corr[a, b]) > CORR_LIMIT]
    vif = _vifs(P)
    cn, ci, vdp, deps = _cn_vdp(X, names)
    flags = [f"|r({a}, {b})| = {abs(r):.3f} > {CORR_LIMIT}" for a, b, r in high]
    flags += [f"VIF({nm}) = {v:.3g} > {VIF_LIMIT}" for nm, v in zip(preds, vif) if v > VIF_LIMIT]
    if cn > CN_LIMIT:
        flags.append(f"condition number {cn:.3g} > {CN_LIMIT}")
        for j in np.flatnonzero(ci > CN_LIMIT):
            heavy = [names[k] for k in np.flatnonzero(vdp[j] > VDP_LIMIT)]
            if len(heavy) >= 2:
                flags.append(f"VDP > {VDP_LIMIT} for {', '.join(heavy)} at condition index "
                             f"{ci[j]:.3g}")
    return CollinearityReport(names=names, correlations=corr, high_correlations=high, vif=vif,
                              condition_number=cn, condition_indices=ci, vdp=vdp,
                              dependencies=deps, flags=flags)


def local_collinearity(ds: SpatialDataset, predictors=None, spec=None, dm=None):
    """Geographically weighted CN, VIFs, VDPs and GW correlations at every location.

    Singular locations are listed, not raised.
    """
    X, names = ds.design(predictors)
    dm = as_distance_matrix(ds if dm is None else dm)
    n, p = X.shape
    P = X[:, 1:]
    m = P.shape[1]
    W = weight_rows(dm, spec)
    cn = np.empty(n)
    vif = np.empty((n, m))
    vdp = np.empty((n, p, p))
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    gwc = {(names[a + 1], names[b + 1]): np.empty(n) for a, b in pairs}
    singular = []
    for i in range(n):
        w = W[i]
        cn[i], _, vdp[i], deps = _cn_vdp(X * np.sqrt(w)[:, None], names)
        if deps:
            singular.append(i)
        vif[i] = _vifs(P, w) if m >= 2 else np.ones(m)
        if pairs:
            c = _weighted_corr(P, w)
            for a, b in pairs:
                gwc[(names[a + 1], names[b + 1])][i] = c[a, b]
    flags = []
    over = int(np.sum(cn > CN_LIMIT))
    if over:
        flags.append(f"local condition number > {CN_LIMIT} at {over} location(s)")
    vif_over = int(np.sum(np.any(vif > VIF_LIMIT, axis=1)))
    if vif_over:
        flags.append(f"local VIF > {VIF_LIMIT} at {vif_over} location(s)")
    return CollinearityReport(names=names, flags=flags, local_cn=cn, local_vif=vif,
                              local_vdp=vdp, gw_correlations=gwc, singular_locations=singular)


def gw_correlation(a, b, weights):
    """Weighted Pearson correlation of ``a`` and ``b`` for each row of ``weights``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    out = np.empty(weights.shape[0])
    for i, w in enumerate(weights):
        out[i] = _weighted_corr(np.column_stack([a, b]), w)[0, 1]
    return out


# -- outliers -----------------------------------------------------------------

@dataclass
class StandardizedResiduals:
    values: np.ndarray
    flags: np.ndarray
    excluded: list

    @property
    def n_flagged(self):
        return int(self.flags.sum())


def standardized_residuals(fit=None, residuals=None, sigma2=None, hat_diag=None,
                           limit=OUTLIER_LIMIT):
    """Internally studentised residuals with |r*| > ``limit`` flagged.

    Takes any fit exposing ``residuals``, ``sigma2`` and (optionally)
    ``hat_diag``, or the arrays directly. Observations with leverage >= 1
    are excluded (NaN) with a warning.
    """
    if fit is not None:
        residuals = fit.residuals
        sigma2 = fit.sigma2
        hat_diag = getattr(fit, "hat_diag", None)
    e = np.asarray(residuals, float)
    if sigma2 is None:
        sigma2 = float(e @ e) / e.size
    sigma = math.sqrt(sigma2)
    if hat_diag is None:
        r = e / sigma
        excluded = []
    else:
        h = np.asarray(hat_diag, float)
        ok = h < 1
        excluded = np.flatnonzero(~ok).tolist()
        if excluded:
            warnings.warn(f"{len(excluded)} observation(s) with leverage >= 1 excluded",
                          stacklevel=2)
        r = np.full(e.shape, np.nan)
        r[ok] = e[ok] / (sigma * np.sqrt(1.0 - h[ok]))
    flags = np.abs(np.nan_to_num(r)) > limit
    return StandardizedResiduals(r, flags, excluded)
