"""Point-support regression data: loading, transforms, centring and distances.

A :class:`SpatialDataset` is immutable. Every operation that changes a
column returns a new dataset and appends a record to ``transform_log`` so
the working data can always be rebuilt from the raw file with
:func:`replay_transforms`.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    DegenerateColumnError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    TransformError,
)

INTERCEPT = "Intercept"

# above this many points rows of the distance matrix are computed on demand
MATERIALIZE_LIMIT = 20_000


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TransformRecord:
    variable: str
    transform: str
    params: tuple = ()

    def as_dict(self):
        return {"variable": self.variable, "transform": self.transform,
                "params": dict(self.params)}


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Observations with planar coordinates, one response and named predictors.

    Coordinates are expected in metres on a projected plane. Row order is
    the observation index used everywhere else in the package.
    """

    coords: np.ndarray
    response: np.ndarray
    predictors: np.ndarray
    predictor_names: tuple
    response_name: str = "y"
    ids: tuple = None
    transform_log: tuple = ()
    allow_duplicate_columns: bool = False

    def __post_init__(self):
        coords = _frozen(self.coords)
        response = _frozen(self.response).reshape(-1)
        preds = _frozen(self.predictors)
        if preds.ndim == 1:
            preds = _frozen(preds.reshape(-1, 1))
        n = response.shape[0]
        if coords.shape != (n, 2):
            raise SchemaError(f"coords must have shape ({n}, 2), got {coords.shape}")
        if preds.shape[0] != n:
            raise SchemaError("predictors and response have different row counts")
        if n < preds.shape[1] + 2:
            raise InsufficientDataError(f"{n} observations cannot support {preds.shape[1]} "
                                        f"predictors (need >= {preds.shape[1] + 2})")
        names = tuple(str(s) for s in self.predictor_names)
        if len(names) != preds.shape[1]:
            raise SchemaError("one name per predictor column is required")
        if len(set(names)) != len(names) or INTERCEPT in names:
            raise SchemaError(f"predictor names must be unique and not {INTERCEPT!r}")
        for label, arr in (("coords", coords), ("response", response), ("predictors", preds)):
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"{label} contain missing or non-finite values")
        if not self.allow_duplicate_columns:
            for a in range(preds.shape[1]):
                for b in range(a + 1, preds.shape[1]):
                    if np.array_equal(preds[:, a], preds[:, b]):
                        raise SchemaError(
                            f"columns {names[a]!r} and {names[b]!r} are identical")
        ids = tuple(range(1, n + 1)) if self.ids is None else tuple(self.ids)
        if len(ids) != n:
            raise SchemaError("one id per row is required")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "predictors", preds)
        object.__setattr__(self, "predictor_names", names)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "transform_log", tuple(self.transform_log))

    @property
    def n(self):
        return self.response.shape[0]

    @property
    def m(self):
        return self.predictors.shape[1]

    def column(self, name):
        if name == self.response_name:
            return self.response
        try:
            return self.predictors[:, self.predictor_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown variable {name!r}") from None

    def with_column(self, name, values, record=None):
        values = np.asarray(values, dtype=float)
        log = self.transform_log + ((record,) if record is not None else ())
        if name == self.response_name:
            return replace(self, response=values, transform_log=log)
        j = self.predictor_names.index(name)
        preds = np.array(self.predictors)
        preds[:, j] = values
        return replace(self, predictors=preds, transform_log=log)

    def select(self, predictors):
        """Dataset restricted to ``predictors`` (in the given order)."""
        idx = []
        for name in predictors:
            if name not in self.predictor_names:
                raise SchemaError(f"unknown predictor {name!r}")
            idx.append(self.predictor_names.index(name))
        return replace(self, predictors=self.predictors[:, idx],
                       predictor_names=tuple(predictors))

    def take(self, rows):
        rows = np.asarray(rows)
        return replace(self, coords=self.coords[rows], response=self.response[rows],
                       predictors=self.predictors[rows],
                       ids=tuple(self.ids[i] for i in rows))

    def design(self, predictors=None, intercept=True):
        """Design matrix and its column names (intercept first)."""
        ds = self if predictors is None else self.select(predictors)
        cols = [ds.predictors]
        names = list(ds.predictor_names)
        if intercept:
            cols.insert(0, np.ones((ds.n, 1)))
            names.insert(0, INTERCEPT)
        return np.hstack(cols), names


def load_csv(path, schema: Mapping[str, object], allow_duplicate_columns=False):
    """Read a CSV file into a :class:`SpatialDataset`.

    Parameters
    ----------
    path : str or path-like
        UTF-8 CSV with a header row and '.' as decimal separator.
    schema : mapping
        Keys ``x``, ``y``, ``response`` (column names) and ``predictors``
        (sequence of column names). An optional ``id`` key names an
        identifier column.

    Raises
    ------
    SchemaError
        a mapped column is missing.
    ParseError
        a mapped cell is empty or not a finite number. ``row`` is the
        1-based data row (the header is not counted).
    InsufficientDataError
        at most ``m + 2`` rows (an OLS fit would be saturated).
    """
    for key in ("x", "y", "response", "predictors"):
        if key not in schema:
            raise SchemaError(f"schema is missing the {key!r} mapping")
    predictors = list(schema["predictors"])
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    wanted = [schema["x"], schema["y"], schema["response"], *predictors]
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise SchemaError(f"columns not found in {path}: {', '.join(missing)}")

    numeric = {}
    for col in dict.fromkeys(wanted):
        raw = frame[col].str.strip()
        vals = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            row = int(bad[0]) + 1
            raise ParseError(f"row {row}, column {col!r}: cannot parse {raw.iloc[bad[0]]!r}"
                             " as a finite number", row=row, column=col)
        numeric[col] = vals

    n, m = len(frame), len(predictors)
    if n <= m + 2:
        raise InsufficientDataError(f"{n} rows cannot support {m} predictors (need > {m + 2})")
    ids = tuple(frame[schema["id"]]) if schema.get("id") else None
    coords = np.column_stack([numeric[schema["x"]], numeric[schema["y"]]])
    ds = SpatialDataset(
        coords=coords,
        response=numeric[schema["response"]],
        predictors=np.column_stack([numeric[p] for p in predictors]) if m else np.empty((n, 0)),
        predictor_names=tuple(predictors),
        response_name=schema["response"],
        ids=ids,
        allow_duplicate_columns=allow_duplicate_columns,
    )
    _warn_if_degrees(ds.coords)
    return ds


def _warn_if_degrees(coords):
    span = np.ptp(coords, axis=0)
    if (np.all(np.abs(coords[:, 0]) <= 180) and np.all(np.abs(coords[:, 1]) <= 90)
            and np.all(span < 10)):
        warnings.warn("coordinates look like longitude/latitude degrees; "
                      "distances assume projected metres", stacklevel=3)


_TRANSFORMS = {
    "natural_log": (np.log, lambda v: v > 0, "> 0"),
    "sqrt": (np.sqrt, lambda v: v >= 0, ">= 0"),
    "none": (lambda v: np.array(v, dtype=float), lambda v: np.ones(v.shape, bool), ""),
}


def apply_transform(ds, var, transform):
    """Return a copy of ``ds`` with ``var`` transformed (natural_log, sqrt or none)."""
    if transform not in _TRANSFORMS:
        raise TransformError(f"unknown transform {transform!r}")
    func, ok, domain = _TRANSFORMS[transform]
    values = ds.column(var)
    bad = np.flatnonzero(~ok(values))
    if bad.size:
        rows = (bad + 1).tolist()
        raise TransformError(f"{transform} of {var!r} needs values {domain}; offending rows "
                             f"{rows[:10]}{' ...' if len(rows) > 10 else ''}", rows=rows)
    return ds.with_column(var, func(values), TransformRecord(var, transform))


@dataclass(frozen=True)
class ScalingRecord:
    """Per-variable means (and standard deviations) used by :func:`center`."""

    means: Mapping[str, float]
    sds: Mapping[str, float] = field(default_factory=dict)
    applied: bool = True

    def invert(self, ds):
        if not self.applied:
            raise ValueError("scaling has already been inverted")
        for var, mu in self.means.items():
            sd = self.sds.get(var)
            vals = ds.column(var)
            restored = vals * sd + mu if sd is not None else vals + mu
            params = (("mean", mu),) + ((("sd", sd),) if sd is not None else ())
            ds = ds.with_column(var, restored, TransformRecord(var, "uncenter", params))
        return ds, replace(self, applied=False)


def center(ds, vars: Sequence[str], standardize=False):
    """Centre (and optionally scale to unit variance) the named variables.

    Returns the new dataset and the :class:`ScalingRecord` that undoes it.
    The standard deviation uses ``ddof=1``.
    """
    means, sds = {}, {}
    for var in vars:
        vals = ds.column(var)
        mu = float(np.mean(vals))
        params = [("mean", mu)]
        out = vals - mu
        if standardize:
            sd = float(np.std(vals, ddof=1))
            if not sd > 0:
                raise DegenerateColumnError(f"{var!r} has zero variance and cannot be standardised")
            out = out / sd
            sds[var] = sd
            params.append(("sd", sd))
        means[var] = mu
        ds = ds.with_column(var, out, TransformRecord(var, "center", tuple(params)))
    return ds, ScalingRecord(means, sds)


def replay_transforms(ds, log):
    """Re-apply a ``transform_log`` to raw data."""
    for rec in log:
        p = dict(rec.params)
        vals = ds.column(rec.variable)
        if rec.transform in _TRANSFORMS:
            ds = apply_transform(ds, rec.variable, rec.transform)
            continue
        if rec.transform == "center":
            out = vals - p["mean"]
            if "sd" in p:
                out = out / p["sd"]
        elif rec.transform == "uncenter":
            out = vals * p["sd"] + p["mean"] if "sd" in p else vals + p["mean"]
        else:
            raise TransformError(f"cannot replay transform {rec.transform!r}")
        ds = ds.with_column(rec.variable, out, rec)
    return ds


class DistanceMatrix:
    """Euclidean distances between all observation pairs.

    ``order[i]`` lists observation indices by increasing distance from i
    (stable, so ties keep row order and i itself comes first unless it has
    coincident twins with smaller indices). ``sorted_d[i]`` holds the
    matching distances. For ``n > MATERIALIZE_LIMIT`` nothing n-by-n is
    stored and rows are computed on request.
    """

    def __init__(self, coords, materialize=None):
        self.coords = _frozen(coords)
        self.n = n = self.coords.shape[0]
        self.materialized = n <= MATERIALIZE_LIMIT if materialize is None else materialize
        if self.materialized:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            d = 0.5 * (d + d.T)
            np.fill_diagonal(d, 0.0)
            self.d = _frozen(d)
            order = np.argsort(d, axis=1, kind="stable")
            # self first among coincident points
            for i in range(n):
                if order[i, 0] != i:
                    row = order[i].tolist()
                    row.remove(i)
                    order[i] = [i] + row
            self.order = _frozen(order, dtype=np.intp)
            self.sorted_d = _frozen(np.take_along_axis(d, order, axis=1))
            self.max_pair_distance = float(d.max()) if n > 1 else 0.0
            iu = np.triu_indices(n, 1)
            pos = d[iu][d[iu] > 0]
            self.min_positive_distance = float(pos.min()) if pos.size else 0.0
            ci, cj = np.nonzero((d == 0) & np.triu(np.ones((n, n), bool), 1))
        else:
            self.d = self.order = self.sorted_d = None
            self.max_pair_distance = _max_pair_distance(self.coords)
            self.min_positive_distance = float("nan")
            ci, cj = _coincident_pairs(self.coords)
        self.coincident = [(int(a), int(b)) for a, b in zip(ci, cj)]
        if self.coincident:
            warnings.warn(f"{len(self.coincident)} coincident point pair(s); adaptive "
                          "bandwidths count points, not locations", stacklevel=2)

    def row(self, i):
        if self.materialized:
            return self.d[i]
        diff = self.coords - self.coords[i]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def sorted_row(self, i):
        if self.materialized:
            return self.sorted_d[i]
        return np.sort(self.row(i))

    def kth_distance(self, k):
        """Distance from every point to its k-th nearest observation (self is rank 1)."""
        if self.materialized:
            return np.array(self.sorted_d[:, k - 1])
        return np.array([np.partition(self.row(i), k - 1)[k - 1] for i in range(self.n)])


def _max_pair_distance(coords):
    try:
        pts = coords[ConvexHull(coords).vertices]
    except (QhullError, ValueError):
        pts = coords
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def _coincident_pairs(coords):
    _, inverse, counts = np.unique(coords, axis=0, return_inverse=True, return_counts=True)
    ci, cj = [], []
    for g in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inverse.reshape(-1) == g)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                ci.append(members[a])
                cj.append(members[b])
    return ci, cj


def distance_matrix(ds):
    coords = ds.coords if isinstance(ds, SpatialDataset) else np.asarray(ds, float)
    return DistanceMatrix(coords)


def as_distance_matrix(obj):
    if isinstance(obj, DistanceMatrix):
        return obj
    return distance_matrix(obj)
