"""Synthetic spatially varying coefficient data with known truth.

Randomness comes from numpy's ``Generator`` with the PCG64 bit generator
seeded by ``seed``, which is reproducible across platforms and numpy
releases for the distributions used here (``uniform`` and ``normal``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import INTERCEPT, SpatialDataset


@dataclass(frozen=True)
class SurfaceSpec:
    """A coefficient surface: constant, linear trend or Gaussian bump.

    ``linear_trend`` is ``c + a*u + b*v`` with ``u, v`` the coordinates
    scaled to [0, 1] over the extent.
    """

    kind: str
    c: float = 0.0
    a: float = 0.0
    b: float = 0.0
    center: tuple = (0.5, 0.5)
    amplitude: float = 1.0
    length_scale: float = 1.0
    baseline: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear_trend", "gaussian_bump"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.kind == "gaussian_bump" and not self.length_scale > 0:
            raise ValueError("length_scale must be > 0")

    @classmethod
    def constant(cls, c):
        return cls("constant", c=c)

    @classmethod
    def linear_trend(cls, a, b, c=0.0):
        return cls("linear_trend", a=a, b=b, c=c)

    @classmethod
    def gaussian_bump(cls, center, amplitude, length_scale, baseline=0.0):
        return cls("gaussian_bump", center=tuple(center), amplitude=amplitude,
                   length_scale=length_scale, baseline=baseline)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "center" in d:
            d["center"] = tuple(d["center"])
        return cls(**d)

    def evaluate(self, coords, extent):
        u = coords[:, 0]
        v = coords[:, 1]
        if self.kind == "constant":
            return np.full(coords.shape[0], float(self.c))
        if self.kind == "linear_trend":
            return self.c + self.a * u / extent + self.b * v / extent
        cu, cv = self.center
        d2 = (u - cu) ** 2 + (v - cv) ** 2
        return self.baseline + self.amplitude * np.exp(-d2 / (2.0 * self.length_scale ** 2))


def layout_coords(n, extent, layout, rng):
    if layout == "grid":
        side = math.ceil(math.sqrt(n))
        step = extent / side
        g = (np.arange(side) + 0.5) * step
        uu, vv = np.meshgrid(g, g, indexing="xy")
        return np.column_stack([uu.ravel(), vv.ravel()])[:n]
    if layout == "uniform_random":
        return rng.uniform(0.0, extent, size=(n, 2))
    raise ValueError(f"unknown layout {layout!r}")


def generate_svc(n, extent, layout="grid", surfaces=None, predictor_sd=1.0, noise_sd=1.0,
                 seed=0):
    """Simulate ``y = sum_k beta_k(u, v) x_k + noise``.

    Parameters
    ----------
    surfaces : dict
        Term name -> :class:`SurfaceSpec`. Must contain ``"Intercept"``;
        every other key becomes a predictor drawn i.i.d. from
        ``Normal(0, predictor_sd)``.

    Returns
    -------
    dataset : SpatialDataset
    truth : dict
        Term name -> true coefficient at each location (length n).
    """
    if n < 25:
        raise ValueError("generate_svc needs n >= 25")
    if not surfaces or INTERCEPT not in surfaces:
        raise ValueError("surfaces must include an 'Intercept' entry")
    if not (extent > 0 and predictor_sd > 0 and noise_sd >= 0):
        raise ValueError("extent and predictor_sd must be > 0 and noise_sd >= 0")
    rng = np.random.default_rng(seed)
    coords = layout_coords(n, float(extent), layout, rng)
    names = [k for k in surfaces if k != INTERCEPT]
    X = rng.normal(0.0, predictor_sd, size=(n, len(names)))
    truth = {INTERCEPT: surfaces[INTERCEPT].evaluate(coords, extent)}
    y = truth[INTERCEPT].copy()
    for j, nm in enumerate(names):
        truth[nm] = surfaces[nm].evaluate(coords, extent)
        y += truth[nm] * X[:, j]
    y += rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else 0.0
    ds = SpatialDataset(coords=coords, response=y, predictors=X, predictor_names=tuple(names),
                        response_name="response")
    return ds, truth


def coefficient_rmse(fit_surfaces, truth):
    """Per-term RMSE between fitted coefficient surfaces and the truth."""
    return {nm: float(np.sqrt(np.mean((np.asarray(fit_surfaces[nm]) - truth[nm]) ** 2)))
            for nm in truth if nm in fit_surfaces}
