import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwroute.diagnostics import MoranResult
from gwroute.errors import ConvergenceError
from gwroute.global_models import fit_ols, fit_sam
from gwroute.kernel import Bandwidth
from gwroute.routemap import (
    GWR,
    LINEAR,
    MSGWR,
    MXGWR,
    SAM,
    RouteMapAborted,
    RouteMapConfig,
    classify_bandwidths,
    classify_values,
    recommend,
    run_routemap,
    surface_disagreement,
    threshold_sensitivity,
)
from gwroute.synth import SurfaceSpec, generate_svc

DMAX = 3741.8

# fixed MS-GWR bandwidths (m) from the soil study, one row per predictor set
ANALYST_A = {"Intercept": 555.9, "SOCgkg": 2483.9, "ClayPC": 3741.7, "SiltPC": 1080.8,
             "NO3Ngkg": 382.5, "NH4Ngkg": 3741.7}
ANALYST_C = {"Intercept": 424.9, "SOCgkg": 3741.4, "NH4Ngkg": 3741.8}
ANALYST_D = {"Intercept": 573.6, "SOCgkg": 2214.6, "SandPC": 1066.5, "NO3Ngkg": 378.4}


DEFAULT = RouteMapConfig()


def _classify(bws, cfg=DEFAULT, scale=DMAX, form="fixed", n=None):
    return classify_values(list(bws), list(bws.values()), form, scale, cfg, n=n)


def _moran(p):
    return MoranResult(0.1, -0.01, 0.001, 3.0, p, "residual_adjusted")


def _recommend(cls, p, cfg=DEFAULT):
    step1 = (SimpleNamespace(names=cls.names), _moran(p))
    return recommend(step1, (None, None), cls, cfg)


class TestClassification:
    def test_intercept_only_local(self):
        cls = _classify(ANALYST_C)
        assert cls.labels == {"Intercept": "local", "SOCgkg": "global", "NH4Ngkg": "global"}
        assert cls.intercept_label == "local"

    def test_mixed_with_similar_cluster_at_lower_threshold(self):
        cls = _classify(ANALYST_A, RouteMapConfig(global_threshold=0.6))
        assert set(cls.global_terms) == {"SOCgkg", "ClayPC", "NH4Ngkg"}
        assert set(cls.local_terms) == {"Intercept", "SiltPC", "NO3Ngkg"}
        assert cls.local_spread == pytest.approx(1080.8 / 382.5)
        assert cls.similarity == "similar"
        assert _recommend(cls, 0.001)[0] == MXGWR

    def test_default_threshold_disperses_cluster(self):
        cls = _classify(ANALYST_A)
        assert "SOCgkg" in cls.local_terms
        assert cls.similarity == "dispersed"
        assert _recommend(cls, 0.001)[0] == MSGWR

    def test_dispersed_all_local(self):
        cls = _classify(ANALYST_D)
        assert cls.global_terms == []
        assert cls.local_spread == pytest.approx(2214.6 / 378.4)
        rec, trace, _ = _recommend(cls, 0.001)
        assert rec == MSGWR
        assert trace[-1].rule == "R5"

    def test_all_at_dmax_global(self):
        cls = _classify({"Intercept": DMAX, "a": DMAX})
        assert cls.local_terms == []
        assert _recommend(cls, 0.5)[0] == LINEAR
        assert _recommend(cls, 0.01)[0] == SAM

    def test_proximity_warning(self):
        cls = _classify({"Intercept": 0.78 * DMAX, "a": DMAX})
        assert any("threshold-sensitive" in w for w in cls.warnings)

    def test_adaptive_overfit_excluded(self):
        bws = {"Intercept": 1, "a": 40, "b": 60}
        cls = _classify(bws, scale=100, form="adaptive", n=100)
        assert cls.excluded == ["Intercept"]
        assert cls.local_cluster == ["a", "b"]
        assert cls.similarity == "similar"
        assert any("over-fitting" in w for w in cls.warnings)

    def test_from_fit(self):
        fit = SimpleNamespace(names=list(ANALYST_C),
                              bandwidths=[Bandwidth.fixed(v) for v in ANALYST_C.values()],
                              max_pair_distance=DMAX, non_converged=True)
        cls = classify_bandwidths(fit, 689)
        assert cls.global_terms == ["SOCgkg", "NH4Ngkg"]
        assert cls.warnings[0].startswith("WARNING: MS-GWR did not converge")

    def test_sensitivity_lists_breakpoints(self):
        cls = _classify(ANALYST_A)
        sens = threshold_sensitivity(cls, 0.001, RouteMapConfig())
        by_theta = {round(s["global_threshold"], 4): s["outcome"] for s in sens}
        assert by_theta[round(2483.9 / DMAX, 4)] == MXGWR
        assert by_theta[0.8] == MSGWR

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RouteMapConfig(global_threshold=0)
        with pytest.raises(ValueError):
            RouteMapConfig(local_similarity_ratio=0.5)
        cfg = RouteMapConfig(global_threshold=0.6)
        assert RouteMapConfig.from_dict(cfg.to_dict()) == cfg


ratios = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6)


@given(ratios, st.floats(0.05, 1.0), st.floats(1.0, 10.0), st.floats(0, 1))
def test_rule_soundness(rs, theta, ratio, p):
    cfg = RouteMapConfig(global_threshold=theta, local_similarity_ratio=ratio)
    names = ["Intercept"] + [f"x{k}" for k in range(1, len(rs))]
    cls = classify_values(names, rs, "fixed", 1.0, cfg)
    rec, trace, ev = _recommend(cls, p, cfg)
    local = [r for r in rs if r < theta]
    if rec == LINEAR:
        assert not local and p >= cfg.alpha
    if ev["rule"] == "R1":
        assert not local
    if ev["rule"] == "R2":
        assert rs[0] < theta and all(r >= theta for r in rs[1:]) and len(rs) > 1
    if rec == GWR:
        assert len(local) == len(rs) and max(local) / min(local) <= ratio
    if rec == MXGWR:
        assert 0 < len(local) < len(rs) and max(local) / min(local) <= ratio
    if ev["rule"] == "R5":
        assert max(local) / min(local) > ratio
    assert rec in (LINEAR, SAM, GWR, MXGWR, MSGWR)
    assert any(t.fired for t in trace)


@given(ratios, st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_raising_threshold_never_adds_global_terms(rs, t1, t2):
    lo, hi = sorted((t1, t2))
    names = [f"t{k}" for k in range(len(rs))]
    g_lo = set(classify_values(names, rs, "fixed", 1.0, RouteMapConfig(global_threshold=lo))
               .global_terms)
    g_hi = set(classify_values(names, rs, "fixed", 1.0, RouteMapConfig(global_threshold=hi))
               .global_terms)
    assert g_hi <= g_lo


class _Surf:
    def __init__(self, beta, p):
        self.beta, self.p = beta, p

    def surfaces(self):
        return {k: (self.beta[k], None, None, self.p[k]) for k in self.beta}


class TestDisagreement:
    def test_self_is_zero(self):
        a = _Surf({"a": np.array([1.0, -2, 3])}, {"a": np.array([0.01, 0.2, 0.03])})
        assert surface_disagreement(a, a).overall == 0.0

    def test_opposite_signs_is_one(self):
        a = _Surf({"a": np.array([1.0, 2, 3])}, {"a": np.full(3, 0.01)})
        b = _Surf({"a": np.array([-1.0, -2, -3])}, {"a": np.full(3, 0.01)})
        assert surface_disagreement(a, b).per_term == {"a": 1.0}

    def test_significance_only(self):
        a = _Surf({"a": np.ones(4)}, {"a": np.array([0.01, 0.01, 0.2, 0.2])})
        b = _Surf({"a": np.ones(4)}, {"a": np.full(4, 0.01)})
        assert surface_disagreement(a, b).overall == 0.5

    def test_term_mismatch(self):
        a = _Surf({"a": np.ones(2)}, {"a": np.ones(2)})
        b = _Surf({"b": np.ones(2)}, {"b": np.ones(2)})
        with pytest.raises(ValueError):
            surface_disagreement(a, b)


def _svc(surfaces, seed, noise=0.5):
    specs = {k: SurfaceSpec.constant(v) if np.isscalar(v) else v for k, v in surfaces.items()}
    return generate_svc(121, 1000.0, "grid", specs, noise_sd=noise, seed=seed)[0]


class TestEndToEnd:
    def test_global_data_linear(self, global_ds):
        rep = run_routemap(global_ds)
        assert rep.recommendation == LINEAR
        assert rep.rule == "R1"
        comp = rep.comparison()
        assert comp["ols_aicc"] == rep.ols.aicc
        assert comp["msgwr_aicc"] == rep.msgwr.aicc
        assert comp["chosen_model"] == LINEAR and comp["chosen_aicc"] == rep.ols.aicc

    def test_bump_data(self, bump_ds):
        ds, _ = bump_ds
        rep = run_routemap(ds)
        assert rep.classification.labels["x1"] == "local"
        assert rep.classification.labels["x2"] == "global"
        assert rep.recommendation in (MXGWR, MSGWR)
        assert "Recommendation:" in rep.narrative()
        assert set(rep.comparison()) >= {"ols_aicc", "msgwr_aicc", "chosen_model", "chosen_aicc"}

    def test_intercept_local_gives_sam_with_comparison(self):
        fired = 0
        for seed in range(10):
            ds = _svc({"Intercept": SurfaceSpec.gaussian_bump((500.0, 500.0), 3.0, 250.0),
                       "x1": 1.0, "x2": -0.5}, seed=seed)
            rep = run_routemap(ds)
            if rep.rule != "R2":
                continue
            fired += 1
            assert rep.recommendation == SAM
            assert SAM in rep.candidates
            assert "linear_fallback" in rep.evidence
            assert len(rep.evidence["fixed_effects_comparison"]) == 2
        assert fired >= 7

    def test_deterministic_json(self, bump_ds):
        ds, _ = bump_ds
        a = json.dumps(run_routemap(ds).to_dict(), sort_keys=True, default=str)
        b = json.dumps(run_routemap(ds).to_dict(), sort_keys=True, default=str)
        assert a == b

    def test_pure_noise(self):
        outcomes = []
        for seed in range(20):
            rep = run_routemap(_svc({"Intercept": 0.0, "x1": 0.0, "x2": 0.0}, seed, noise=1.0))
            if rep.ols.f_pvalue >= 0.05:
                assert any("no worthwhile relationships" in w for w in rep.warnings)
            outcomes.append(rep.recommendation)
        # chance interior AICc minima make some noise terms look local
        assert sum(o in (LINEAR, SAM) for o in outcomes) >= 10

    def test_abort_keeps_partial_report(self, bump_ds, monkeypatch):
        import gwroute.routemap as rm

        def boom(*a, **k):
            raise ConvergenceError("backfitting diverged", trace=[])
        monkeypatch.setattr(rm, "fit_msgwr", boom)
        with pytest.raises(RouteMapAborted) as err:
            run_routemap(bump_ds[0])
        rep = err.value.report
        assert rep.ols is not None and rep.ols_moran is not None
        assert rep.msgwr is None
        assert "MS-GWR" in rep.errors[0]


def test_sam_fallback_agreement_real_fits(global_ds):
    o = fit_ols(global_ds)
    s = fit_sam(global_ds)
    cls = _classify({"Intercept": 400.0, "x1": DMAX, "x2": DMAX})
    rec, trace, ev = recommend((o, _moran(0.01)), (None, None), cls,
                               candidates={SAM: s})
    assert rec == SAM
    assert ev["linear_fallback"] is True
    assert "LINEAR fallback" in trace[-1].detail
