"""Route map: from a global regression to the simplest adequate local model.

Step 1 fits OLS and tests its residuals for spatial autocorrelation.
Step 2 fits multiscale GWR and reads each term's bandwidth as a fraction of
the study-area scale. Step 3 classifies the terms as global or local,
fits whichever simpler candidate the classification points to and
recommends one of LINEAR, SAM, GWR, MX-GWR or MS-GWR, keeping every piece
of evidence used along the way.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import INTERCEPT, DistanceMatrix, SpatialDataset, as_distance_matrix
from .diagnostics import build_weight_matrix, morans_i, parse_scheme
from .errors import GwrouteError, NumericalError
from .global_models import fit_ols, fit_sam
from .gwr import OVERFIT_FRACTION, fit_gwr, optimize_bandwidth
from .kernel import KERNELS, Bandwidth, KernelSpec
from .variants import fit_msgwr, fit_mxgwr

log = logging.getLogger(__name__)

LINEAR, SAM, GWR, MXGWR, MSGWR = "LINEAR", "SAM", "GWR", "MX-GWR", "MS-GWR"
RECOMMENDATIONS = (LINEAR, SAM, GWR, MXGWR, MSGWR)
PROXIMITY = 0.10


@dataclass(frozen=True)
class RouteMapConfig:
    """Thresholds and model options for :func:`run_routemap`.

    Parameters
    ----------
    global_threshold : float
        A term is global when its bandwidth is at least this fraction of the
        largest inter-point distance (fixed form) or of n (adaptive form).
    local_similarity_ratio : float
        Local bandwidths form one cluster when max/min is at most this.
    disagreement_threshold : float
        Surface disagreement above which a single-bandwidth candidate is
        rejected in favour of MS-GWR.
    mxgwr_bandwidth : float, optional
        Local bandwidth for the MX-GWR candidate. Defaults to the median of
        the local cluster's MS-GWR bandwidths.
    """

    global_threshold: float = 0.8
    local_similarity_ratio: float = 3.0
    alpha: float = 0.05
    overfit_fraction: float = OVERFIT_FRACTION
    kernel: str = "bisquare"
    form: str = "fixed"
    weights: str = "knn:8"
    disagreement_threshold: float = 0.2
    mxgwr_bandwidth: float = None
    max_sweeps: int = 100
    soc_tol: float = 1e-5
    center_for_bandwidths: bool = True

    def __post_init__(self):
        if not 0.0 < self.global_threshold <= 1.0:
            raise ValueError("global_threshold must lie in (0, 1]")
        if not self.local_similarity_ratio >= 1.0:
            raise ValueError("local_similarity_ratio must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.overfit_fraction < 1.0:
            raise ValueError("overfit_fraction must lie in [0, 1)")
        if not 0.0 <= self.disagreement_threshold <= 1.0:
            raise ValueError("disagreement_threshold must lie in [0, 1]")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.form not in ("fixed", "adaptive"):
            raise ValueError("form must be 'fixed' or 'adaptive'")
        if self.mxgwr_bandwidth is not None and not self.mxgwr_bandwidth > 0:
            raise ValueError("mxgwr_bandwidth must be > 0")
        parse_scheme(self.weights)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def replace(self, **changes):
        return RouteMapConfig(**{**self.to_dict(), **changes})


# -- classification -----------------------------------------------------------

@dataclass
class BandwidthClassification:
    names: list
    bandwidths: list
    ratios: dict
    labels: dict
    global_threshold: float
    similarity_ratio: float
    local_spread: float = None       # max/min over the local cluster
    similarity: str = None           # "similar", "dispersed" or None (no local cluster)
    excluded: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def intercept_label(self):
        return self.labels.get(INTERCEPT)

    @property
    def global_terms(self):
        return [nm for nm in self.names if self.labels[nm] == "global"]

    @property
    def local_terms(self):
        return [nm for nm in self.names if self.labels[nm] == "local"]

    @property
    def local_cluster(self):
        return [nm for nm in self.local_terms if nm not in self.excluded]

    def summary_dict(self):
        return {"ratios": dict(self.ratios), "labels": dict(self.labels),
                "bandwidths": {nm: b for nm, b in zip(self.names, self.bandwidths)},
                "global_threshold": self.global_threshold,
                "similarity_ratio": self.similarity_ratio, "local_spread": self.local_spread,
                "similarity": self.similarity, "intercept_label": self.intercept_label,
                "excluded_overfit": list(self.excluded), "warnings": list(self.warnings)}


def classify_values(names, values, form, scale, cfg: RouteMapConfig, n=None):
    """Classify raw bandwidth values against ``scale`` (d_max, or n when adaptive)."""
    names = list(names)
    values = [float(v) for v in values]
    if len(names) != len(values):
        raise ValueError("one bandwidth per term is required")
    ratios = {nm: v / scale for nm, v in zip(names, values)}
    labels = {nm: "global" if r >= cfg.global_threshold else "local"
              for nm, r in ratios.items()}
    n = n if n is not None else (scale if form == "adaptive" else None)
    excluded = []
    warn = []
    if form == "adaptive" and n is not None:
        excluded = [nm for nm, v in zip(names, values)
                    if labels[nm] == "local" and v < cfg.overfit_fraction * n]
        for nm in excluded:
            warn.append(f"{nm}: adaptive bandwidth {ratios[nm] * scale:g} is below "
                        f"{cfg.overfit_fraction:g} n, which suggests over-fitting; "
                        f"it does not drive the recommendation")
    cluster = [v for nm, v in zip(names, values) if labels[nm] == "local" and nm not in excluded]
    spread = similarity = None
    if cluster:
        spread = max(cluster) / min(cluster)
        similarity = "similar" if spread <= cfg.local_similarity_ratio else "dispersed"
    for nm, r in ratios.items():
        if abs(r - cfg.global_threshold) <= PROXIMITY * cfg.global_threshold:
            warn.append(f"{nm}: ratio {r:.3f} is within {PROXIMITY:.0%} of the global "
                        f"threshold {cfg.global_threshold:g}; the label is threshold-sensitive")
    if spread is not None and abs(spread - cfg.local_similarity_ratio) <= \
            PROXIMITY * cfg.local_similarity_ratio:
        warn.append(f"local bandwidth spread {spread:.3f} is within {PROXIMITY:.0%} of the "
                    f"similarity ratio {cfg.local_similarity_ratio:g}; the cluster verdict is "
                    f"threshold-sensitive")
    return BandwidthClassification(names, values, ratios, labels, cfg.global_threshold,
                                   cfg.local_similarity_ratio, spread, similarity, excluded,
                                   warn)


def classify_bandwidths(fit, dm, cfg: RouteMapConfig = None):
    """Label every MS-GWR term global or local and judge the local cluster.

    ``dm`` is the :class:`~gwroute.dataset.DistanceMatrix` used for the fit,
    or the number of observations (fixed-form ratios then use the fit's
    stored largest inter-point distance).
    """
    cfg = cfg or RouteMapConfig()
    forms = {b.form for b in fit.bandwidths}
    if len(forms) != 1:
        raise ValueError("mixed bandwidth forms cannot be classified together")
    form = forms.pop()
    if isinstance(dm, DistanceMatrix):
        n, dmax = dm.n, dm.max_pair_distance
    else:
        n, dmax = int(dm), fit.max_pair_distance
    scale = float(n) if form == "adaptive" else float(dmax)
    cls = classify_values(fit.names, [b.value for b in fit.bandwidths], form, scale, cfg, n=n)
    if fit.non_converged:
        cls.warnings.insert(0, "WARNING: MS-GWR did not converge; the bandwidth "
                               "classification rests on a partial fit")
    return cls


def _cascade(cls: BandwidthClassification, moran_p, alpha):
    """Which rule fires, given only the classification and the Step-1 Moran p-value."""
    labels = cls.labels
    preds = [nm for nm in cls.names if nm != INTERCEPT]
    if all(v == "global" for v in labels.values()):
        return "R1", (LINEAR if moran_p >= alpha else SAM)
    if cls.intercept_label == "local" and preds and all(labels[nm] == "global" for nm in preds):
        return "R2", SAM
    if cls.similarity == "similar":
        if not cls.global_terms:
            return "R3", GWR
        return "R4", MXGWR
    return "R5", MSGWR


def threshold_sensitivity(cls: BandwidthClassification, moran_p, cfg: RouteMapConfig):
    """Rule outcome at every global-threshold value where a term changes label."""
    values = sorted({cfg.global_threshold, *[min(r, 1.0) for r in cls.ratios.values()
                                             if r > 0]})
    out = []
    for theta in values:
        alt = classify_values(cls.names, [cls.ratios[nm] for nm in cls.names], "fixed", 1.0,
                              cfg.replace(global_threshold=theta))
        rule, rec = _cascade(_with_exclusions(alt, cls, cfg), moran_p, cfg.alpha)
        out.append({"global_threshold": float(theta), "global_terms": alt.global_terms,
                    "rule": rule, "outcome": rec})
    return out


def _with_exclusions(alt, cls, cfg):
    if not cls.excluded:
        return alt
    cluster = [cls.ratios[nm] for nm in alt.local_terms if nm not in cls.excluded]
    alt.excluded = list(cls.excluded)
    if cluster:
        alt.local_spread = max(cluster) / min(cluster)
        alt.similarity = "similar" if alt.local_spread <= cfg.local_similarity_ratio \
            else "dispersed"
    else:
        alt.local_spread = alt.similarity = None
    return alt


# -- surface comparison ---------------------------------------------------------

@dataclass
class SurfaceDisagreement:
    per_term: dict
    alpha: float

    @property
    def overall(self):
        return max(self.per_term.values()) if self.per_term else 0.0

    def summary_dict(self):
        return {"per_term": dict(self.per_term), "overall": self.overall, "alpha": self.alpha}


def surface_disagreement(fit_a, fit_b, alpha=0.05):
    """Share of locations where two fits disagree on a coefficient's sign or significance.

    Both fits must expose ``surfaces()`` over the same terms and locations;
    global coefficients count as constant surfaces.
    """
    sa, sb = fit_a.surfaces(), fit_b.surfaces()
    if set(sa) != set(sb):
        raise ValueError(f"fits cover different terms: {sorted(sa)} vs {sorted(sb)}")
    out = {}
    for nm in sa:
        ba, pa = np.asarray(sa[nm][0]), np.asarray(sa[nm][3])
        bb, pb = np.asarray(sb[nm][0]), np.asarray(sb[nm][3])
        if ba.shape != bb.shape:
            raise ValueError("fits have different calibration locations")
        differ = (np.sign(ba) != np.sign(bb)) | ((pa < alpha) != (pb < alpha))
        out[nm] = float(np.mean(differ))
    return SurfaceDisagreement(out, alpha)


# -- recommendation -------------------------------------------------------------

@dataclass
class RuleFiring:
    rule: str
    fired: bool
    detail: str

    def __str__(self):
        return f"[{self.rule}] {'fired' if self.fired else 'skipped'}: {self.detail}"


def _fixed_effects_agree(ols_fit, sam_fit, alpha):
    """Every predictor has the same sign and significance verdict in OLS and SAM."""
    rows = []
    agree = True
    for nm in ols_fit.names:
        if nm == INTERCEPT:
            continue
        bo, bs = ols_fit.coef(nm), sam_fit.coef(nm)
        po = ols_fit.pvalues[ols_fit.names.index(nm)]
        ps = sam_fit.pvalues[sam_fit.names.index(nm)]
        se = max(ols_fit.bse[ols_fit.names.index(nm)], sam_fit.bse[sam_fit.names.index(nm)])
        same = np.sign(bo) == np.sign(bs) and (po < alpha) == (ps < alpha)
        agree &= bool(same)
        rows.append({"term": nm, "ols": bo, "sam": bs, "ols_p": float(po), "sam_p": float(ps),
                     "within_se": bool(abs(bo - bs) <= se), "agree": bool(same)})
    return agree, rows


def recommend(step1, step2, cls: BandwidthClassification, cfg: RouteMapConfig = None,
              candidates=None):
    """Apply the rule cascade R1..R5.

    Parameters
    ----------
    step1 : (GlobalFit, MoranResult)
        OLS fit and the residual Moran test.
    step2 : (MsGwrFit, MoranResult)
    candidates : dict, optional
        Fitted comparison models keyed by ``"SAM"``, ``"GWR"`` or ``"MX-GWR"``.
        Without the needed candidate the rule's provisional outcome is kept
        and flagged as unchecked.

    Returns
    -------
    recommendation : str
    trace : list of RuleFiring
    evidence : dict
    """
    cfg = cfg or RouteMapConfig()
    candidates = candidates or {}
    ols_fit, moran1 = step1
    ms_fit, _ = step2
    rule, provisional = _cascade(cls, moran1.p_value, cfg.alpha)
    trace = []
    evidence = {"rule": rule, "provisional": provisional}

    all_global = all(v == "global" for v in cls.labels.values())
    trace.append(RuleFiring("R1", rule == "R1",
                            "all terms global" if all_global else
                            f"local terms present: {', '.join(cls.local_terms)}"))
    if rule == "R1":
        verdict = "no significant" if moran1.p_value >= cfg.alpha else "significant"
        trace.append(RuleFiring("R1", True, f"OLS residual Moran's I = {moran1.I:.4f}, "
                                f"p = {moran1.p_value:.4g}: {verdict} autocorrelation "
                                f"at alpha = {cfg.alpha:g} -> {provisional}"))
        return provisional, trace, evidence

    trace.append(RuleFiring("R2", rule == "R2",
                            "intercept local, every predictor global" if rule == "R2" else
                            "not (intercept local and all predictors global)"))
    if rule == "R2":
        sam_fit = candidates.get(SAM)
        if sam_fit is None:
            trace.append(RuleFiring("R2", True, "SAM candidate not fitted; comparison skipped"))
            return SAM, trace, evidence
        agree, rows = _fixed_effects_agree(ols_fit, sam_fit, cfg.alpha)
        evidence["fixed_effects_comparison"] = rows
        evidence["linear_fallback"] = bool(agree)
        if agree:
            trace.append(RuleFiring("R2", True, "SAM and OLS coefficients share signs and "
                                    "significance: a linear regression suffices "
                                    "(LINEAR fallback)"))
        else:
            trace.append(RuleFiring("R2", True, "SAM changes the sign or significance of at "
                                    "least one predictor; keep SAM"))
        return SAM, trace, evidence

    cluster = ", ".join(cls.local_cluster)
    if rule in ("R3", "R4"):
        trace.append(RuleFiring("R3", rule == "R3",
                                f"all terms local with similar bandwidths (spread "
                                f"{cls.local_spread:.3g} <= {cfg.local_similarity_ratio:g})"
                                if rule == "R3" else "some terms global"))
        if rule == "R4":
            trace.append(RuleFiring("R4", True, f"global: {', '.join(cls.global_terms)}; "
                                    f"similar local cluster: {cluster} (spread "
                                    f"{cls.local_spread:.3g} <= "
                                    f"{cfg.local_similarity_ratio:g})"))
        cand = candidates.get(provisional)
        if cand is None:
            trace.append(RuleFiring(rule, True, f"{provisional} candidate not fitted; "
                                    f"comparison with MS-GWR skipped"))
            return provisional, trace, evidence
        dis = surface_disagreement(cand, ms_fit, cfg.alpha)
        evidence["disagreement"] = dis.summary_dict()
        evidence["candidate_aicc"] = cand.aicc
        evidence["msgwr_aicc"] = ms_fit.aicc
        material = dis.overall > cfg.disagreement_threshold
        comp = (f"{provisional} AICc {cand.aicc:.1f} vs MS-GWR AICc {ms_fit.aicc:.1f}; "
                f"max surface disagreement {dis.overall:.3f} "
                f"({'>' if material else '<='} {cfg.disagreement_threshold:g})")
        if material:
            trace.append(RuleFiring(rule, True, comp + " -> surfaces differ materially: MS-GWR"))
            return MSGWR, trace, evidence
        if rule == "R3":
            choice = GWR if cand.aicc <= ms_fit.aicc else MSGWR
            trace.append(RuleFiring("R3", True, comp + f" -> lower AICc: {choice}"))
            return choice, trace, evidence
        trace.append(RuleFiring("R4", True, comp + " -> surfaces agree: keep the simpler "
                                "MX-GWR whatever its AICc"))
        return MXGWR, trace, evidence

    trace.append(RuleFiring("R3", False, "local bandwidths dispersed" if cls.similarity else
                            "no usable local cluster"))
    trace.append(RuleFiring("R4", False, "no similar local cluster"))
    trace.append(RuleFiring("R5", True, "terms operate at distinct spatial scales -> MS-GWR"))
    return MSGWR, trace, evidence


# -- end to end ---------------------------------------------------------------------

@dataclass
class RouteMapReport:
    config: RouteMapConfig
    predictors: list
    ols: object
    ols_moran: object
    msgwr: object
    msgwr_moran: object
    classification: BandwidthClassification
    recommendation: str = None
    rule: str = None
    rationale: list = field(default_factory=list)
    evidence: dict = field(default_factory=dict)
    candidates: dict = field(default_factory=dict)
    sensitivity: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def linear_fallback(self):
        return bool(self.evidence.get("linear_fallback", False))

    def fit_for(self, model):
        if model == LINEAR:
            return self.ols
        if model == MSGWR:
            return self.msgwr
        return self.candidates.get(model)

    def comparison(self):
        """Table of AICc values for every fit held in the report."""
        chosen = self.fit_for(self.recommendation) if self.recommendation else None
        rows = {"ols_aicc": self.ols.aicc,
                "msgwr_aicc": self.msgwr.aicc if self.msgwr is not None else None,
                "chosen_model": self.recommendation,
                "chosen_aicc": chosen.aicc if chosen is not None else None}
        rows["candidates"] = {k: v.aicc for k, v in sorted(self.candidates.items())}
        return rows

    def narrative(self):
        lines = [f"Recommendation: {self.recommendation} (rule {self.rule})"]
        if self.linear_fallback:
            lines.append("A linear regression suffices (SAM and OLS agree).")
        lines.append("")
        lines.append("Rule trace:")
        lines += [f"  {r}" for r in self.rationale]
        c = self.classification
        lines.append("")
        lines.append(f"Bandwidth classification (global if ratio >= {c.global_threshold:g}; "
                     f"local cluster similar if max/min <= {c.similarity_ratio:g}):")
        for nm in c.names:
            lines.append(f"  {nm:<16} ratio {c.ratios[nm]:.3f}  {c.labels[nm]}")
        if c.local_spread is not None:
            lines.append(f"  local spread {c.local_spread:.3f}: {c.similarity}")
        lines.append("")
        lines.append("AICc comparison:")
        for k, v in self.comparison().items():
            lines.append(f"  {k}: {v}")
        if self.sensitivity:
            lines.append("")
            lines.append("Threshold sensitivity (global threshold -> outcome):")
            for s in self.sensitivity:
                lines.append(f"  {s['global_threshold']:.3f}: {s['rule']} -> {s['outcome']}")
        if self.warnings:
            lines.append("")
            lines.append("Warnings:")
            lines += [f"  - {w}" for w in self.warnings]
        if self.errors:
            lines.append("")
            lines.append("Errors:")
            lines += [f"  - {e}" for e in self.errors]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "predictors": list(self.predictors),
            "recommendation": self.recommendation,
            "rule": self.rule,
            "linear_fallback": self.linear_fallback,
            "rationale": [str(r) for r in self.rationale],
            "rule_trace": [asdict(r) for r in self.rationale],
            "evidence": self.evidence,
            "step1": {"ols": self.ols.summary_dict(),
                      "moran": self.ols_moran.summary_dict() if self.ols_moran else None},
            "step2": {"msgwr": self.msgwr.summary_dict() if self.msgwr is not None else None,
                      "moran": self.msgwr_moran.summary_dict() if self.msgwr_moran else None},
            "classification": self.classification.summary_dict()
            if self.classification else None,
            "candidates": {k: v.summary_dict() for k, v in sorted(self.candidates.items())},
            "comparison": self.comparison(),
            "threshold_sensitivity": self.sensitivity,
            "warnings": list(self.warnings),
            "errors": list(self.errors),
        }


class RouteMapAborted(NumericalError):
    """A fit failed mid-route; ``report`` holds everything computed before the failure."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def _spatial_predictor_warnings(ds, predictors, limit=0.95):
    coords = ds.coords
    centroid = coords.mean(0)
    refs = {"x coordinate": coords[:, 0], "y coordinate": coords[:, 1],
            "distance to centroid": np.hypot(*(coords - centroid).T)}
    out = []
    for nm in predictors:
        v = ds.column(nm)
        for label, ref in refs.items():
            if np.ptp(ref) == 0 or np.ptp(v) == 0:
                continue
            r = float(np.corrcoef(v, ref)[0, 1])
            if abs(r) > limit:
                out.append(f"{nm} correlates with the {label} (r = {r:.3f}); spatial "
                           f"predictors like this should be avoided")
    return out


def _curve_warnings(ms_fit):
    out = []
    for nm, c in (ms_fit.term_curves or {}).items():
        if c.plateau:
            out.append(f"{nm}: MS-GWR bandwidth curve is plateaued (AICc range < 2)")
        if c.boundary_minimum:
            out.append(f"{nm}: MS-GWR bandwidth minimum lies on the search boundary")
        if c.overfit:
            out.append(f"{nm}: MS-GWR adaptive bandwidth below 2% of n (over-fitting)")
    return out


def run_routemap(ds: SpatialDataset, predictors=None, cfg: RouteMapConfig = None, dm=None):
    """Run Steps 1-3 and return a :class:`RouteMapReport`.

    A fit failure raises :class:`RouteMapAborted` carrying the partial report.
    """
    cfg = cfg or RouteMapConfig()
    predictors = list(predictors) if predictors is not None else list(ds.predictor_names)
    dm = as_distance_matrix(ds if dm is None else dm)
    X, _ = ds.design(predictors)
    report = RouteMapReport(cfg, predictors, None, None, None, None, None)

    def abort(step, exc):
        report.errors.append(f"{step}: {type(exc).__name__}: {exc}")
        raise RouteMapAborted(f"route map stopped at {step}: {exc}", report) from exc

    # step 1
    ols_fit = fit_ols(ds, predictors)
    report.ols = ols_fit
    wm = build_weight_matrix(dm, cfg.weights)
    report.ols_moran = morans_i(ols_fit.residuals, wm, "residual_adjusted", X=X)
    if not ols_fit.f_pvalue < cfg.alpha:
        report.warnings.append(f"no worthwhile relationships: OLS F-test p = "
                               f"{ols_fit.f_pvalue:.4g} >= {cfg.alpha:g}")
    report.warnings += _spatial_predictor_warnings(ds, predictors)

    # step 2
    try:
        ms_fit = fit_msgwr(ds, predictors, kernel=cfg.kernel, form=cfg.form,
                           max_sweeps=cfg.max_sweeps, soc_tol=cfg.soc_tol,
                           center_for_bandwidths=cfg.center_for_bandwidths, dm=dm)
    except GwrouteError as exc:
        abort("MS-GWR", exc)
    report.msgwr = ms_fit
    report.msgwr_moran = morans_i(ms_fit.residuals, wm, "raw")
    report.warnings += list(ms_fit.warnings) + _curve_warnings(ms_fit)

    # step 3
    cls = classify_bandwidths(ms_fit, dm, cfg)
    report.classification = cls
    report.warnings += cls.warnings
    rule, provisional = _cascade(cls, report.ols_moran.p_value, cfg.alpha)
    try:
        if provisional == SAM:
            report.candidates[SAM] = fit_sam(ds, predictors, dm=dm)
        elif provisional == GWR:
            bw, curve = optimize_bandwidth(ds, predictors, cfg.kernel, cfg.form, "aicc", dm=dm)
            g = fit_gwr(ds, predictors, KernelSpec(cfg.kernel, bw), dm=dm)
            if curve.plateau:
                g.warnings.append("GWR bandwidth curve is plateaued: a linear model may suffice")
            if curve.boundary_minimum:
                g.warnings.append("GWR bandwidth minimum lies on the search boundary")
            if curve.overfit:
                g.warnings.append("GWR adaptive bandwidth below 2% of n (over-fitting)")
            report.warnings += g.warnings
            report.evidence["gwr_curve"] = curve.summary_dict()
            report.candidates[GWR] = g
        elif provisional == MXGWR:
            cluster = cls.local_cluster
            if cfg.mxgwr_bandwidth is not None:
                value, source = cfg.mxgwr_bandwidth, "configured"
            else:
                value = float(np.median([ms_fit.bandwidth(nm).value for nm in cluster]))
                source = "median of the local cluster"
            if cfg.form == "adaptive":
                value = int(round(value))
            spec = KernelSpec(cfg.kernel, Bandwidth(cfg.form, value))
            mx = fit_mxgwr(ds, predictors, global_vars=cls.global_terms,
                           local_vars=cls.local_terms, spec=spec, dm=dm)
            report.evidence["mxgwr_bandwidth"] = {"value": value, "source": source}
            report.candidates[MXGWR] = mx
    except GwrouteError as exc:
        abort(f"{provisional} candidate", exc)

    rec, trace, evidence = recommend((ols_fit, report.ols_moran), (ms_fit, report.msgwr_moran),
                                     cls, cfg, report.candidates)
    report.recommendation = rec
    report.rule = rule
    report.rationale = trace
    report.evidence.update(evidence)
    report.sensitivity = threshold_sensitivity(cls, report.ols_moran.p_value, cfg)
    outcomes = {s["outcome"] for s in report.sensitivity}
    if len(outcomes) > 1:
        report.warnings.append("the provisional outcome depends on the global threshold: "
                               + "; ".join(f"{s['global_threshold']:.3f} -> {s['outcome']}"
                                           for s in report.sensitivity))
    log.info("route map: %s via %s", rec, rule)
    return report
