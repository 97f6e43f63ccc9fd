"""Fixed-coefficient models: OLS and the spatial error model fitted by REML."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from ._stats import aicc, r_squared, require_full_rank, t_pvalues
from .dataset import SpatialDataset, as_distance_matrix
from .errors import ConvergenceError, InsufficientDataError

log = logging.getLogger(__name__)


@dataclass
class GlobalFit:
    model: str
    names: list
    params: np.ndarray
    bse: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rss: float
    sigma2: float
    r2: float
    aicc: float
    n: int
    df_resid: int
    hat_diag: np.ndarray = None
    f_stat: float = float("nan")
    f_pvalue: float = float("nan")
    degenerate: bool = False
    # SAM only
    cov_params: dict = None
    reml_loglik: float = None
    n_params: int = None
    warnings: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.names)

    def coef(self, name):
        return float(self.params[self.names.index(name)])

    def summary_dict(self):
        out = {
            "model": self.model,
            "n": self.n,
            "coefficients": {
                nm: {"estimate": float(b), "se": float(s), "t": float(t), "p": float(p)}
                for nm, b, s, t, p in zip(self.names, self.params, self.bse,
                                          self.tvalues, self.pvalues)
            },
            "rss": self.rss,
            "sigma2": self.sigma2,
            "r2": self.r2,
            "aicc": self.aicc,
            "df_resid": self.df_resid,
            "f_stat": self.f_stat,
            "f_pvalue": self.f_pvalue,
            "degenerate": self.degenerate,
            "warnings": list(self.warnings),
        }
        if self.cov_params is not None:
            out["cov_params"] = dict(self.cov_params)
            out["reml_loglik"] = self.reml_loglik
            out["n_params"] = self.n_params
        return out


def _design(ds, predictors):
    X, names = ds.design(predictors)
    return X, names, ds.response


def ols(X, y, names):
    """OLS on arrays. ``X`` must already contain the intercept column."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, k = X.shape
    require_full_rank(X, names)
    if n <= k:
        raise InsufficientDataError(f"n = {n} observations for {k} coefficients")
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    df = n - k
    sigma2 = rss / df
    Rinv = linalg.solve_triangular(R, np.eye(k))
    cov = Rinv @ Rinv.T * sigma2
    bse = np.sqrt(np.diag(cov))
    degenerate = rss <= 1e-20 * max(float(y @ y), 1e-300)
    fit_warnings = []
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = beta / bse
    if degenerate:
        fit_warnings.append("residual sum of squares is zero: the response is reproduced exactly")
        tvals = np.full(k, np.inf)
        pvals = np.zeros(k)
    else:
        pvals = t_pvalues(tvals, df)
    tss = float(np.sum((y - y.mean()) ** 2))
    if k > 1 and not degenerate and tss > 0:
        f_stat = ((tss - rss) / (k - 1)) / sigma2
        f_p = float(stats.f.sf(f_stat, k - 1, df))
    else:
        f_stat = f_p = float("nan")
    hat = np.einsum("ij,ij->i", Q, Q)
    return GlobalFit(
        model="ols", names=list(names), params=beta, bse=bse, tvalues=tvals, pvalues=pvals,
        fitted=fitted, residuals=resid, rss=rss, sigma2=sigma2, r2=r_squared(y, resid),
        aicc=aicc(rss, n, k) if not degenerate else -math.inf, n=n, df_resid=df,
        hat_diag=hat, f_stat=float(f_stat), f_pvalue=f_p, degenerate=degenerate,
        warnings=fit_warnings)


def fit_ols(ds: SpatialDataset, predictors=None) -> GlobalFit:
    """Ordinary least squares of the response on ``predictors`` plus an intercept.

    Raises :class:`~gwroute.errors.CollinearityError` naming the dependent
    columns when the design is rank deficient.
    """
    X, names, y = _design(ds, predictors)
    return ols(X, y, names)


# -- spatial error model ------------------------------------------------------

@dataclass
class _RemlState:
    loglik: float
    beta: np.ndarray
    cov_unscaled: np.ndarray
    sigma2: float
    logdet_v: float
    quad: float
    jittered: bool


class _Reml:
    """Profiled REML likelihood for ``y = X b + e``, ``cov(e) = s2 * V(phi, nu)``."""

    def __init__(self, H, X, y):
        self.H, self.X, self.y = H, X, y
        self.n, self.p = X.shape
        self.trace = []
        self.jitter_used = False

    def corr(self, phi, nu):
        V = (1.0 - nu) * np.exp(-self.H / phi)
        V[np.diag_indices_from(V)] += nu
        return V

    def evaluate(self, phi, nu):
        n, p = self.n, self.p
        V = self.corr(phi, nu)
        jittered = False
        try:
            L = linalg.cholesky(V, lower=True, check_finite=False)
        except linalg.LinAlgError:
            V[np.diag_indices_from(V)] += 1e-10 * float(np.mean(np.diag(V)))
            L = linalg.cholesky(V, lower=True, check_finite=False)
            jittered = True
        logdet_v = 2.0 * float(np.sum(np.log(np.diag(L))))
        Xs = linalg.solve_triangular(L, self.X, lower=True, check_finite=False)
        ys = linalg.solve_triangular(L, self.y, lower=True, check_finite=False)
        A = Xs.T @ Xs
        La = linalg.cholesky(A, lower=True)
        logdet_a = 2.0 * float(np.sum(np.log(np.diag(La))))
        beta = linalg.cho_solve((La, True), Xs.T @ ys)
        r = ys - Xs @ beta
        quad = float(r @ r)
        s2 = quad / (n - p)
        ll = -0.5 * (logdet_v + logdet_a + (n - p) * math.log(s2)) \
            - 0.5 * (n - p) * (1.0 + math.log(2.0 * math.pi))
        cov_unscaled = linalg.cho_solve((La, True), np.eye(p))
        self.trace.append((float(phi), float(nu), ll))
        return _RemlState(ll, beta, cov_unscaled, s2, logdet_v, quad, jittered)

    def loglik(self, phi, nu):
        try:
            return self.evaluate(phi, nu).loglik
        except (linalg.LinAlgError, ValueError, FloatingPointError):
            self.trace.append((float(phi), float(nu), -math.inf))
            return -math.inf


def fit_sam(ds: SpatialDataset, predictors=None, nugget="on", phi_bounds=None,
            n_phi=20, dm=None) -> GlobalFit:
    """Fixed-coefficient regression with exponentially correlated errors, by REML.

    The error covariance is ``s2 * ((1 - nu) exp(-H / phi) + nu I)``. ``s2``
    and the coefficients are profiled out; ``phi`` (range) and ``nu``
    (nugget share) are found by a grid search refined with Nelder-Mead.

    Parameters
    ----------
    nugget : {"on", "off"} or float
        ``"on"`` estimates ``nu`` in [0, 1), ``"off"`` fixes it at 0 and a
        number fixes it at that value. ``nu = 1`` reduces to OLS.
    phi_bounds : (float, float), optional
        Search range for ``phi``; defaults to the smallest positive and
        twice the largest pairwise distance.

    Notes
    -----
    AICc is reported on the same scale as OLS: the residual sum of squares
    is replaced by ``|V|^(1/n) r' V^-1 r`` (the Gaussian likelihood at the
    REML estimates) and ``tr(S)`` by the number of coefficients plus the
    number of estimated covariance parameters.
    """
    X, names, y = _design(ds, predictors)
    n, p = X.shape
    require_full_rank(X, names)
    if n < p + 2:
        raise InsufficientDataError(f"SAM needs n >= {p + 2}, got {n}")
    dm = as_distance_matrix(ds if dm is None else dm)
    H = np.asarray(dm.d)
    lo, hi = phi_bounds or (dm.min_positive_distance, 2.0 * dm.max_pair_distance)
    if not lo > 0:
        lo = hi * 1e-4
    reml = _Reml(H, X, y)
    fit_warnings = []

    estimate_nu = nugget == "on"
    if nugget == "off":
        nu_fixed = 0.0
    elif estimate_nu:
        nu_fixed = None
    else:
        nu_fixed = float(nugget)
        if not 0.0 <= nu_fixed <= 1.0:
            raise ValueError("fixed nugget share must lie in [0, 1]")

    phis = np.geomspace(lo, hi, n_phi)
    nus = np.round(np.arange(0.0, 0.951, 0.05), 10) if estimate_nu else np.array([nu_fixed])

    if nu_fixed == 1.0:
        phi_hat, nu_hat = float(hi), 1.0
    else:
        grid = np.array([[reml.loglik(ph, nu) for nu in nus] for ph in phis])
        if not np.any(np.isfinite(grid)):
            raise ConvergenceError("REML likelihood could not be evaluated on any grid cell",
                                   trace=reml.trace)
        gi, gj = np.unravel_index(np.nanargmax(np.where(np.isfinite(grid), grid, -np.inf)),
                                  grid.shape)
        start_ll = grid[gi, gj]
        log_lo, log_hi = math.log(lo), math.log(hi)
        if estimate_nu:
            def negll(theta):
                return -reml.loglik(math.exp(theta[0]), theta[1])
            res = optimize.minimize(
                negll, x0=[math.log(phis[gi]), nus[gj]], method="Nelder-Mead",
                bounds=[(log_lo, log_hi), (0.0, 0.999999)],
                options={"xatol": 1e-6, "fatol": 1e-8 * max(abs(start_ll), 1.0),
                         "maxiter": 2000})
            phi_hat, nu_hat = math.exp(res.x[0]), float(res.x[1])
        else:
            a = math.log(phis[max(gi - 1, 0)])
            b = math.log(phis[min(gi + 1, len(phis) - 1)])
            res = optimize.minimize_scalar(lambda t: -reml.loglik(math.exp(t), nu_fixed),
                                           bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-8})
            phi_hat, nu_hat = math.exp(res.x), nu_fixed
        if not res.success or not np.isfinite(res.fun):
            raise ConvergenceError(f"REML refinement failed: {res.message}", trace=reml.trace)
        if -res.fun < start_ll:
            phi_hat, nu_hat = float(phis[gi]), float(nus[gj])
        if math.isclose(phi_hat, hi, rel_tol=1e-3) or math.isclose(phi_hat, lo, rel_tol=1e-3):
            fit_warnings.append(f"REML range estimate {phi_hat:.4g} lies on the search boundary")

    state = reml.evaluate(phi_hat, nu_hat)
    if state.jittered or reml.jitter_used:
        msg = "covariance matrix needed diagonal jitter for the Cholesky factorisation"
        warnings.warn(msg, stacklevel=2)
        fit_warnings.append(msg)
    beta = state.beta
    fitted = X @ beta
    resid = y - fitted
    df = n - p
    cov = state.cov_unscaled * state.sigma2
    bse = np.sqrt(np.diag(cov))
    tvals = beta / bse
    pvals = t_pvalues(tvals, df)
    n_cov = (1 if nu_hat < 1.0 else 0) + (1 if estimate_nu else 0)
    rss_eff = math.exp(state.logdet_v / n) * state.quad
    log.debug("SAM phi=%.4g nu=%.4g loglik=%.6f", phi_hat, nu_hat, state.loglik)
    return GlobalFit(
        model="sam", names=list(names), params=beta, bse=bse, tvalues=tvals, pvalues=pvals,
        fitted=fitted, residuals=resid, rss=float(resid @ resid), sigma2=state.sigma2,
        r2=r_squared(y, resid), aicc=aicc(rss_eff, n, p + n_cov), n=n, df_resid=df,
        cov_params={"partial_sill": state.sigma2 * (1.0 - nu_hat),
                    "nugget": state.sigma2 * nu_hat, "range": phi_hat,
                    "nugget_share": nu_hat, "total_sill": state.sigma2},
        reml_loglik=state.loglik, n_params=p + n_cov, warnings=fit_warnings)
