"""Residual autocorrelation and collinearity checks, global and local.

Run with ``python demos/05_diagnostics.py``.
"""
# %%
import numpy as np

from gwroute import (
    Bandwidth,
    KernelSpec,
    SpatialDataset,
    build_weight_matrix,
    fit_ols,
    generate_svc,
    global_collinearity,
    local_collinearity,
    morans_i,
    standardized_residuals,
)
from gwroute.synth import SurfaceSpec

# %%
surfaces = {"Intercept": SurfaceSpec.constant(0.5), "x1": SurfaceSpec.constant(1.0),
            "x2": SurfaceSpec.constant(1.0)}
ds, _ = generate_svc(100, 1000.0, "grid", surfaces, noise_sd=0.5, seed=5)

# %% [markdown]
# Make x2 nearly a copy of x1 in one corner only.

# %%
P = ds.predictors.copy()
corner = (ds.coords[:, 0] < 400) & (ds.coords[:, 1] < 400)
P[corner, 1] = P[corner, 0] + 0.05 * np.random.default_rng(0).normal(size=corner.sum())
ds = SpatialDataset(ds.coords, ds.response, P, ds.predictor_names)

# %%
glob = global_collinearity(ds)
print(f"global CN {glob.condition_number:.1f}  VIF {np.round(glob.vif, 2)}")
spec = KernelSpec("bisquare", Bandwidth.adaptive(25))
loc = local_collinearity(ds, spec=spec)
cn = loc.local_cn
print(f"local CN: corner median {np.median(cn[corner]):.1f}, "
      f"elsewhere {np.median(cn[~corner]):.1f}")

# %%
ols = fit_ols(ds)
for scheme in ("knn:4", "knn:8", "distance_band:250"):
    res = morans_i(ols.residuals, build_weight_matrix(ds, scheme), "raw", permutations=199, seed=1)
    print(f"{scheme:18s} I={res.I:+.3f} p={res.p_value:.3f}")
r = standardized_residuals(ols)
print(loc.flags)
print(f"largest |studentised residual| {np.max(np.abs(r.values)):.2f}, flagged {r.n_flagged}")
