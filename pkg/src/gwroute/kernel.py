"""Distance-decay kernels and fixed / adaptive bandwidths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandwidthError, SingularNeighbourhoodError

KERNELS = ("bisquare", "boxcar", "tricube", "gaussian", "exponential")
DISCONTINUOUS = ("bisquare", "boxcar", "tricube")


@dataclass(frozen=True)
class Bandwidth:
    """A fixed distance in metres or an adaptive nearest-neighbour count."""

    form: str
    value: float

    def __post_init__(self):
        if self.form not in ("fixed", "adaptive"):
            raise BandwidthError(f"bandwidth form must be 'fixed' or 'adaptive', not {self.form!r}")
        if self.form == "fixed":
            if not (np.isfinite(self.value) and self.value > 0):
                raise BandwidthError(
                    f"fixed bandwidth must be a positive distance, got {self.value}")
            object.__setattr__(self, "value", float(self.value))
        else:
            if int(self.value) != self.value or self.value < 1:
                raise BandwidthError(
                    f"adaptive bandwidth must be a positive integer, got {self.value}")
            object.__setattr__(self, "value", int(self.value))

    @classmethod
    def fixed(cls, distance):
        return cls("fixed", distance)

    @classmethod
    def adaptive(cls, count):
        return cls("adaptive", count)

    @classmethod
    def parse(cls, text):
        """Parse ``fixed:<metres>`` or ``adaptive:<count>``."""
        form, sep, value = str(text).partition(":")
        if not sep:
            raise BandwidthError(
                f"bandwidth must look like fixed:<metres> or adaptive:<count>, got {text!r}")
        try:
            num = float(value)
        except ValueError:
            raise BandwidthError(f"bad bandwidth value {value!r}") from None
        if form == "adaptive":
            if num != int(num):
                raise BandwidthError(f"adaptive bandwidth must be an integer, got {value!r}")
            num = int(num)
        return cls(form, num)

    def __str__(self):
        return f"fixed:{self.value!r}" if self.form == "fixed" else f"adaptive:{self.value}"


@dataclass(frozen=True)
class KernelSpec:
    kernel: str
    bandwidth: Bandwidth

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise BandwidthError(
                f"unknown kernel {self.kernel!r}; choose from {', '.join(KERNELS)}")

    def check(self, n):
        if self.bandwidth.form == "adaptive" and self.bandwidth.value > n:
            raise BandwidthError(f"adaptive bandwidth {self.bandwidth.value} exceeds n = {n}")


def kernel_weight(d, b, kernel="bisquare"):
    """Kernel weight for distance(s) ``d`` at bandwidth distance ``b``.

    Discontinuous kernels are zero for ``d >= b``. Works elementwise on
    arrays; ``b`` may broadcast against ``d``.
    """
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)):
        raise BandwidthError("bandwidth distance must be > 0")
    z = np.asarray(d, dtype=float) / b
    return _profile(z, kernel, inclusive=False)


def _profile(z, kernel, inclusive):
    inside = z <= 1 if inclusive else z < 1
    if kernel == "bisquare":
        return np.where(inside, (1 - z ** 2) ** 2, 0.0)
    if kernel == "tricube":
        return np.where(inside, (1 - z ** 3) ** 3, 0.0)
    if kernel == "boxcar":
        return np.where(inside, 1.0, 0.0)
    if kernel == "gaussian":
        return np.exp(-0.5 * z ** 2)
    if kernel == "exponential":
        return np.exp(-z)
    raise BandwidthError(f"unknown kernel {kernel!r}")


def effective_distance(dm, bandwidth, rows=None):
    """Bandwidth distance at each calibration row."""
    rows = np.arange(dm.n) if rows is None else np.asarray(rows)
    if bandwidth.form == "fixed":
        return np.full(rows.shape, bandwidth.value)
    if bandwidth.value > dm.n:
        raise BandwidthError(f"adaptive bandwidth {bandwidth.value} exceeds n = {dm.n}")
    return dm.kth_distance(bandwidth.value)[rows]


def weight_rows(dm, spec, rows=None, loo=False):
    """Kernel weights for calibration ``rows`` against all n observations.

    Adaptive windows are defined by rank: the N nearest observations (self
    counted as rank 1) are inside, so an adaptive boxcar includes the N-th
    neighbour itself. A zero bandwidth distance (adaptive(1), or N within
    a stack of coincident points) keeps only points at distance zero.
    With ``loo`` the calibration point's own weight is set to zero.
    """
    rows = np.arange(dm.n) if rows is None else np.asarray(rows)
    bdist = effective_distance(dm, spec.bandwidth, rows)
    if dm.materialized:
        d = dm.d[rows]
    else:
        d = np.vstack([dm.row(i) for i in rows]) if rows.size else np.empty((0, dm.n))
    adaptive = spec.bandwidth.form == "adaptive"
    safe_b = np.where(bdist > 0, bdist, 1.0)[:, None]
    w = _profile(d / safe_b, spec.kernel, inclusive=adaptive)
    zero_b = bdist <= 0
    if np.any(zero_b):
        w[zero_b] = (d[zero_b] == 0).astype(float)
    if loo:
        w[np.arange(rows.size), rows] = 0.0
    return w


def weights_for_location(i, dm, spec, min_nonzero=None):
    """Weight vector (length n) for calibration location ``i``.

    ``min_nonzero`` (normally m + 2) turns a too-small window into a
    :class:`SingularNeighbourhoodError` instead of a silent fix.
    """
    spec.check(dm.n)
    w = weight_rows(dm, spec, [i])[0]
    if min_nonzero is not None and np.count_nonzero(w) < min_nonzero:
        raise SingularNeighbourhoodError(
            f"location {i} has {np.count_nonzero(w)} non-zero weights, need {min_nonzero}",
            locations=[i])
    return w


def check_neighbourhoods(dm, spec, min_nonzero):
    """Raise if any location has fewer than ``min_nonzero`` positive weights."""
    counts = np.count_nonzero(weight_rows(dm, spec), axis=1)
    bad = np.flatnonzero(counts < min_nonzero)
    if bad.size:
        raise SingularNeighbourhoodError(
            f"{bad.size} location(s) have fewer than {min_nonzero} non-zero weights",
            locations=bad.tolist())
