"""Mixed GWR (some coefficients global) and multiscale GWR (one bandwidth per term)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._stats import aicc, pseudo_df, r_squared, require_full_rank, t_pvalues
from .dataset import INTERCEPT, SpatialDataset, as_distance_matrix, center
from .errors import (
    BandwidthError,
    CollinearityError,
    LocalSingularityError,
    SaturatedModelError,
)
from .gwr import (
    _blocks,
    _local_solve,
    _raise_singular,
    _surface_summary,
    bandwidth_bounds,
    fixed_tolerance,
    golden_section,
    make_curve,
)
from .kernel import Bandwidth, KernelSpec, weight_rows

log = logging.getLogger(__name__)


def _norm_term(name):
    return INTERCEPT if name.lower() == INTERCEPT.lower() else name


# -- mixed GWR ----------------------------------------------------------------

@dataclass
class MxGwrFit:
    names: list
    global_names: list
    local_names: list
    spec: KernelSpec
    global_params: np.ndarray
    global_bse: np.ndarray
    global_tvalues: np.ndarray
    global_pvalues: np.ndarray
    params: np.ndarray            # local surfaces, n x len(local_names)
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
    model: str = "mxgwr"
    warnings: list = field(default_factory=list)

    def surfaces(self):
        """Every term as a surface; global terms are constant over locations."""
        out = {}
        for nm in self.names:
            if nm in self.local_names:
                j = self.local_names.index(nm)
                out[nm] = (self.params[:, j], self.bse[:, j], self.tvalues[:, j],
                           self.pvalues[:, j])
            else:
                j = self.global_names.index(nm)
                out[nm] = tuple(np.full(self.n, v[j]) for v in (
                    self.global_params, self.global_bse, self.global_tvalues,
                    self.global_pvalues))
        return out

    def summary_dict(self):
        return {
            "model": self.model, "n": self.n, "kernel": self.spec.kernel,
            "bandwidth": str(self.spec.bandwidth),
            "bandwidth_value": self.spec.bandwidth.value, "rss": self.rss, "sigma2": self.sigma2,
            "trS": self.trS, "trSS": self.trSS, "enp": self.enp, "df": self.df,
            "aicc": self.aicc, "r2": self.r2,
            "global_coefficients": {
                nm: {"estimate": float(b), "se": float(s), "t": float(t), "p": float(p)}
                for nm, b, s, t, p in zip(self.global_names, self.global_params,
                                          self.global_bse, self.global_tvalues,
                                          self.global_pvalues)},
            "local_coefficient_summary": _surface_summary(self.local_names, self.params),
            "warnings": list(self.warnings),
        }


def _smoother_parts(XB, y, dm, spec):
    """Hat matrix and coefficient maps C_i of a GWR on the local columns."""
    n, pB = XB.shape
    S = np.empty((n, n))
    C = np.empty((n, pB, n))
    bad_all = []
    for rows in _blocks(n):
        W = weight_rows(dm, spec, rows)
        _, _, Ainv, bad = _local_solve(XB, y, W, rows)
        bad_all.extend(rows[bad].tolist())
        Cb = np.einsum("rpq,jq->rpj", Ainv, XB) * W[:, None, :]
        C[rows] = Cb
        S[rows] = np.einsum("rp,rpj->rj", XB[rows], Cb)
    if bad_all:
        _raise_singular(bad_all, spec)
    return S, C


def _split_terms(names, global_vars, local_vars):
    global_vars = [_norm_term(v) for v in (global_vars or [])]
    local_vars = [_norm_term(v) for v in (local_vars or [])]
    unknown = [v for v in global_vars + local_vars if v not in names]
    if unknown:
        raise ValueError(f"unknown terms: {', '.join(unknown)}")
    both = set(global_vars) & set(local_vars)
    if both:
        raise ValueError(f"terms listed as both global and local: {', '.join(sorted(both))}")
    unassigned = [v for v in names if v not in global_vars and v not in local_vars]
    unassigned_pred = [v for v in unassigned if v != INTERCEPT]
    if unassigned_pred:
        raise ValueError("every predictor must be assigned to the global or local set; "
                         f"missing {', '.join(unassigned_pred)}")
    if INTERCEPT in unassigned:
        local_vars = [INTERCEPT] + local_vars
    g = [v for v in names if v in global_vars]
    l_ = [v for v in names if v in local_vars]
    return g, l_


def mxgwr_arrays(X, y, names, global_vars, local_vars, dm, spec):
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n = X.shape[0]
    gn, ln = _split_terms(list(names), global_vars, local_vars)
    XA = X[:, [names.index(v) for v in gn]]
    XB = X[:, [names.index(v) for v in ln]]
    pA, pB = XA.shape[1], XB.shape[1]
    if pB:
        spec.check(n)
        S_B, C = _smoother_parts(XB, y, dm, spec)
    else:
        S_B, C = np.zeros((n, n)), np.zeros((n, 0, n))
    I_SB = np.eye(n) - S_B
    if pA:
        XA_t = I_SB @ XA
        try:
            require_full_rank(XA_t, gn, "residualised global design")
        except CollinearityError as exc:
            raise CollinearityError(f"after removing the local part: {exc}",
                                    columns=exc.columns) from None
        Q, R = np.linalg.qr(XA_t)
        G = np.linalg.solve(R, Q.T @ I_SB)          # pA x n
        beta_A = G @ y
        S = S_B + I_SB @ XA @ G
    else:
        G = np.zeros((0, n))
        beta_A = np.zeros(0)
        S = S_B
    fitted = S @ y
    resid = y - fitted
    rss = float(resid @ resid)
    trS = float(np.trace(S))
    trSS = float(np.sum(S * S))
    enp = 2 * trS - trSS
    if n - enp <= 0:
        raise SaturatedModelError(f"effective number of parameters {enp:.3g} >= n = {n}")
    sigma2 = rss / (n - enp)
    df = pseudo_df(n, enp)

    gse = np.sqrt(np.einsum("pj,pj->p", G, G) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        gt = beta_A / gse
    gp = t_pvalues(gt, df)

    partial = y - XA @ beta_A
    beta_B = np.einsum("ipj,j->ip", C, partial)
    var_B = np.empty((n, pB))
    CX = np.einsum("ipj,ja->ipa", C, XA)
    for rows in _blocks(n):
        M = C[rows] - np.einsum("rpa,aj->rpj", CX[rows], G)
        var_B[rows] = np.einsum("rpj,rpj->rp", M, M)
    lse = np.sqrt(var_B * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lt = beta_B / lse
    lp = t_pvalues(lt, df)
    return MxGwrFit(
        names=list(names), global_names=gn, local_names=ln, spec=spec,
        global_params=beta_A, global_bse=gse, global_tvalues=gt, global_pvalues=gp,
        params=beta_B, bse=lse, tvalues=lt, pvalues=lp, fitted=fitted, residuals=resid,
        hat_diag=np.diag(S).copy(), trS=trS, trSS=trSS, enp=enp, df=df, rss=rss,
        sigma2=sigma2, aicc=aicc(rss, n, trS), r2=r_squared(y, resid), n=n,
        coords=np.asarray(dm.coords))


def fit_mxgwr(ds: SpatialDataset, predictors=None, global_vars=(), local_vars=(), spec=None,
              kernel="bisquare", form="fixed", dm=None):
    """Mixed GWR: ``global_vars`` fixed over space, ``local_vars`` at one bandwidth.

    Global coefficients come from the local-part-residualised regression;
    local surfaces are a GWR of the partial residuals. The intercept is
    local unless listed in ``global_vars``. When ``spec`` is None the local
    bandwidth is chosen by AICc on the full mixed fit.
    """
    X, names = ds.design(predictors)
    dm = as_distance_matrix(ds if dm is None else dm)
    y = ds.response
    if spec is None:
        spec, _ = optimize_mxgwr_bandwidth(X, y, names, global_vars, local_vars, dm, kernel, form)
    return mxgwr_arrays(X, y, names, global_vars, local_vars, dm, spec)


def optimize_mxgwr_bandwidth(X, y, names, global_vars, local_vars, dm, kernel="bisquare",
                             form="fixed"):
    _, ln = _split_terms(list(names), global_vars, local_vars)
    lower, upper = bandwidth_bounds(dm, len(ln), form)
    tol = fixed_tolerance(dm)

    def f(value):
        try:
            spec = KernelSpec(kernel, Bandwidth(form, value))
            return mxgwr_arrays(X, y, names, global_vars, local_vars, dm, spec).aicc
        except (LocalSingularityError, SaturatedModelError, BandwidthError, CollinearityError):
            return math.inf

    best, cache = golden_section(f, lower, upper, tol, integer=(form == "adaptive"))
    return (KernelSpec(kernel, Bandwidth(form, best)),
            make_curve(cache, "aicc", form, lower, upper, best, tol, n=dm.n))


# -- multiscale GWR -----------------------------------------------------------

@dataclass
class MsGwrFit:
    names: list
    kernel: str
    bandwidths: list
    params: np.ndarray
    bse: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    components: np.ndarray
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
    converged: bool
    trace: list
    selection_trace: list = field(default_factory=list)
    centered_bandwidths: bool = False
    max_pair_distance: float = float("nan")
    term_enp: np.ndarray = None
    term_curves: dict = None       # term -> BandwidthCurve of its last selection
    model: str = "msgwr"
    warnings: list = field(default_factory=list)

    @property
    def non_converged(self):
        return not self.converged

    @property
    def local_names(self):
        return list(self.names)

    def bandwidth(self, name):
        return self.bandwidths[self.names.index(name)]

    def surfaces(self):
        return {nm: (self.params[:, j], self.bse[:, j], self.tvalues[:, j], self.pvalues[:, j])
                for j, nm in enumerate(self.names)}

    def summary_dict(self):
        return {
            "model": self.model, "n": self.n, "kernel": self.kernel,
            "bandwidths": {nm: str(b) for nm, b in zip(self.names, self.bandwidths)},
            "bandwidth_values": {nm: b.value for nm, b in zip(self.names, self.bandwidths)},
            "rss": self.rss, "sigma2": self.sigma2, "trS": self.trS, "trSS": self.trSS,
            "enp": self.enp, "df": self.df, "aicc": self.aicc, "r2": self.r2,
            "converged": self.converged, "centered_bandwidths": self.centered_bandwidths,
            "term_enp": {nm: float(v) for nm, v in zip(self.names, self.term_enp)}
            if self.term_enp is not None else None,
            "term_curves": {nm: c.summary_dict() for nm, c in self.term_curves.items()}
            if self.term_curves else None,
            "convergence_trace": self.trace, "bandwidth_selection_trace": self.selection_trace,
            "coefficient_summary": _surface_summary(self.names, self.params),
            "warnings": list(self.warnings),
        }


def _univariate_aicc(x, eps, W):
    A = W @ (x * x)
    if np.any(A <= 0):
        return math.inf
    fitted = x * (W @ (x * eps)) / A
    trS = float(np.sum(x * x * np.diag(W) / A))
    r = eps - fitted
    try:
        return aicc(float(r @ r), x.size, trS)
    except SaturatedModelError:
        return math.inf


def _coef_map(x, W):
    A = W @ (x * x)
    if np.any(A <= 0):
        bad = np.flatnonzero(A <= 0)
        raise LocalSingularityError(f"univariate local fit singular at {bad.size} location(s)",
                                    locations=bad.tolist())
    return W * x[None, :] / A[:, None]


def _select_term_bandwidth(x, eps, dm, kernel, form, bounds):
    lower, upper = bounds
    tol = fixed_tolerance(dm)

    def f(value):
        W = weight_rows(dm, KernelSpec(kernel, Bandwidth(form, value)))
        return _univariate_aicc(x, eps, W)

    best, cache = golden_section(f, lower, upper, tol, integer=(form == "adaptive"))
    return Bandwidth(form, best), make_curve(cache, "aicc", form, lower, upper, best, tol, n=dm.n)


def _ols_init(X, y, names):
    require_full_rank(X, names)
    P = np.linalg.pinv(X)          # p x n, rows are OLS coefficient maps
    beta = P @ y
    return beta, P


def _select_bandwidths(X, y, names, dm, kernel, form, max_sweeps, soc_tol):
    """Backfitting with per-term bandwidth re-selection; returns bandwidths and trace."""
    n, p = X.shape
    beta, _ = _ols_init(X, y, names)
    f = X * beta[None, :]
    bws = [None] * p
    curves = [None] * p
    frozen = [False] * p
    bounds = bandwidth_bounds(dm, 1, form)
    rss_old = float(np.sum((y - f.sum(1)) ** 2))
    trace = []
    for sweep in range(1, max_sweeps + 1):
        prev = list(bws)
        for k in range(p):
            eps = y - f.sum(1) + f[:, k]
            if not frozen[k]:
                bws[k], curves[k] = _select_term_bandwidth(X[:, k], eps, dm, kernel, form,
                                                           bounds)
            W = weight_rows(dm, KernelSpec(kernel, bws[k]))
            f[:, k] = X[:, k] * (_coef_map(X[:, k], W) @ eps)
        for k in range(p):
            if prev[k] is not None and not frozen[k]:
                a, b = prev[k].value, bws[k].value
                stable = abs(a - b) < 0.01 * a if form == "fixed" else abs(a - b) < 1
                frozen[k] = stable
        rss = float(np.sum((y - f.sum(1)) ** 2))
        soc = abs(rss_old - rss) / rss if rss > 0 else 0.0
        trace.append({"sweep": sweep, "rss": rss, "soc": soc,
                      "bandwidths": [b.value for b in bws], "frozen": list(frozen)})
        log.info("bandwidth sweep %d rss=%.6g soc=%.3g bws=%s", sweep, rss, soc,
                 [round(b.value, 2) for b in bws])
        rss_old = rss
        if soc < soc_tol and sweep > 1:
            return bws, curves, trace, True
    return bws, curves, trace, False


def msgwr_arrays(X, y, names, dm, bandwidths, kernel="bisquare", max_sweeps=100,
                 soc_tol=1e-5):
    """Backfitting at fixed per-term bandwidths, tracking each term's hat operator."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    if len(bandwidths) != p:
        raise BandwidthError(f"need {p} bandwidths (one per term), got {len(bandwidths)}")
    beta0, P = _ols_init(X, y, names)
    coef_maps = []
    for k, bw in enumerate(bandwidths):
        spec = KernelSpec(kernel, bw)
        spec.check(n)
        coef_maps.append(_coef_map(X[:, k], weight_rows(dm, spec)))
    # B[k] maps y to the coefficient surface of term k; R[k] = diag(x_k) B[k]
    B = np.repeat(P[:, None, :], n, axis=1)
    R = X.T[:, :, None] * B
    R_tot = R.sum(0)
    f = X * beta0[None, :]
    rss_old = float(np.sum((y - f.sum(1)) ** 2))
    trace = []
    converged = False
    for sweep in range(1, max_sweeps + 1):
        for k in range(p):
            eps = y - f.sum(1) + f[:, k]
            Ck = coef_maps[k]
            f[:, k] = X[:, k] * (Ck @ eps)
            Bk = Ck - Ck @ (R_tot - R[k])
            Rk = X[:, k][:, None] * Bk
            R_tot += Rk - R[k]
            B[k], R[k] = Bk, Rk
        rss = float(np.sum((y - f.sum(1)) ** 2))
        soc = abs(rss_old - rss) / rss if rss > 0 else 0.0
        trace.append({"sweep": sweep, "rss": rss, "soc": soc})
        log.info("backfit sweep %d rss=%.8g soc=%.3g", sweep, rss, soc)
        rss_old = rss
        if soc < soc_tol:
            converged = True
            break
    fitted = f.sum(1)
    resid = y - fitted
    rss = float(resid @ resid)
    trS = float(np.trace(R_tot))
    trSS = float(np.sum(R_tot * R_tot))
    enp = 2 * trS - trSS
    fit_warnings = []
    if not converged:
        fit_warnings.append(f"backfitting did not converge in {max_sweeps} sweeps")
    if n - enp <= 0:
        raise SaturatedModelError(f"effective number of parameters {enp:.3g} >= n = {n}")
    sigma2 = rss / (n - enp)
    df = pseudo_df(n, enp)
    params = np.einsum("kij,j->ik", B, y)
    bse = np.sqrt(np.einsum("kij,kij->ik", B, B) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = params / bse
    pvals = t_pvalues(tvals, df)
    term_enp = np.einsum("kii->k", R)
    return MsGwrFit(
        names=list(names), kernel=kernel, bandwidths=list(bandwidths), params=params, bse=bse,
        tvalues=tvals, pvalues=pvals, components=f, fitted=fitted, residuals=resid,
        hat_diag=np.diag(R_tot).copy(), trS=trS, trSS=trSS, enp=enp, df=df, rss=rss,
        sigma2=sigma2, aicc=aicc(rss, n, trS), r2=r_squared(y, resid), n=n,
        coords=np.asarray(dm.coords), converged=converged, trace=trace,
        max_pair_distance=dm.max_pair_distance, term_enp=term_enp, warnings=fit_warnings)


def msgwr_fixed_bandwidths(ds: SpatialDataset, predictors=None, bandwidths=None,
                           kernel="bisquare", dm=None, max_sweeps=100, soc_tol=1e-5):
    """Multiscale GWR with every term's bandwidth held fixed.

    ``bandwidths`` is a sequence (intercept first, then predictors in order)
    or a mapping from term name to :class:`Bandwidth`.
    """
    X, names = ds.design(predictors)
    dm = as_distance_matrix(ds if dm is None else dm)
    if isinstance(bandwidths, dict):
        bandwidths = [bandwidths[nm] for nm in names]
    return msgwr_arrays(X, ds.response, names, dm, list(bandwidths), kernel, max_sweeps, soc_tol)


def fit_msgwr(ds: SpatialDataset, predictors=None, kernel="bisquare", form="fixed",
              max_sweeps=100, soc_tol=1e-5, center_for_bandwidths=True, dm=None):
    """Multiscale GWR with per-term bandwidths chosen by AICc during backfitting.

    Terms are visited intercept first, then predictors in order. Each sweep
    re-selects a term's bandwidth (golden section on the AICc of the
    univariate GWR of its partial residual) until it moves by less than 1%
    (fixed) or one neighbour (adaptive) between sweeps, then freezes it.
    With ``center_for_bandwidths`` the selection runs on mean-centred
    predictors and the final fit re-runs on the raw data with those
    bandwidths held fixed, so reported coefficients are on the raw scale.
    """
    dm = as_distance_matrix(ds if dm is None else dm)
    work = ds
    if center_for_bandwidths and ds.m:
        work, _ = center(ds, list(ds.select(predictors).predictor_names
                                  if predictors is not None else ds.predictor_names))
    X, names = work.design(predictors)
    bws, curves, sel_trace, sel_converged = _select_bandwidths(
        X, work.response, names, dm, kernel, form, max_sweeps, soc_tol)
    fit = msgwr_fixed_bandwidths(ds, predictors, bws, kernel, dm, max_sweeps, soc_tol)
    fit.selection_trace = sel_trace
    fit.term_curves = dict(zip(names, curves))
    fit.centered_bandwidths = bool(center_for_bandwidths)
    if not sel_converged:
        fit.converged = False
        fit.warnings.append(f"bandwidth selection did not converge in {max_sweeps} sweeps")
    return fit
