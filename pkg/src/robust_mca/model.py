"""Coefficient bands, control lattices and the controlled drift/volatility maps."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BandError, ContractViolation
from .families import Constant, Family, as_family, from_dict

CONTROL_DIMS = (1, 2, 4)


@dataclass(frozen=True)
class CoefficientBand:
    """Drift band ``[b_lower, b_upper]`` and variance band ``[a_lower, a_upper]``.

    ``bound_C`` is the global constant with ``-C <= b_lower <= b_upper <= C`` and
    ``1/C <= a_lower <= a_upper <= C``.
    """

    a_lower: Family
    a_upper: Family
    b_lower: Family = Constant(0.0)
    b_upper: Family = Constant(0.0)
    bound_C: float = 1.0

    def __post_init__(self):
        for name in ("a_lower", "a_upper", "b_lower", "b_upper"):
            object.__setattr__(self, name, as_family(getattr(self, name)))
        if not self.bound_C > 0:
            raise BandError(f"bound_C must be positive, got {self.bound_C}")

    def check(self, x) -> None:
        """Raise :class:`BandError` if the band invariants fail at any of ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        C = self.bound_C
        bl, bu = self.b_lower(x), self.b_upper(x)
        al, au = self.a_lower(x), self.a_upper(x)
        tol = 1e-12 * max(C, 1.0)
        checks = [
            ("b_lower >= -C", bl >= -C - tol),
            ("b_lower <= b_upper", bl <= bu + tol),
            ("b_upper <= C", bu <= C + tol),
            ("a_lower >= 1/C", al >= 1.0 / C - tol),
            ("a_lower <= a_upper", al <= au + tol),
            ("a_upper <= C", au <= C + tol),
        ]
        for label, ok in checks:
            ok = np.asarray(ok) & np.isfinite(bl) & np.isfinite(bu) & np.isfinite(al) & np.isfinite(au)
            if not np.all(ok):
                bad = x[np.argmin(ok)]
                raise BandError(f"band invariant {label} violated at x={bad!r} (C={C})")

    def to_dict(self) -> dict:
        return {
            "b_lower": self.b_lower.to_dict(),
            "b_upper": self.b_upper.to_dict(),
            "a_lower": self.a_lower.to_dict(),
            "a_upper": self.a_upper.to_dict(),
            "bound_C": self.bound_C,
        }

    @classmethod
    def from_dict(cls, d: dict, path: str = "band") -> "CoefficientBand":
        from .errors import ConfigError

        if not isinstance(d, dict):
            raise ConfigError(path, "expected a table of band functions")
        for key in ("a_lower", "a_upper"):
            if key not in d:
                raise ConfigError(f"{path}.{key}", "missing required band function")
        kw = {k: from_dict(d[k], f"{path}.{k}") for k in ("a_lower", "a_upper", "b_lower", "b_upper") if k in d}
        if "bound_C" not in d:
            raise ConfigError(f"{path}.bound_C", "missing required band constant")
        try:
            C = float(d["bound_C"])
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.bound_C", f"not a number: {d['bound_C']!r}") from None
        if not C > 0:
            raise ConfigError(f"{path}.bound_C", "must be positive")
        return cls(bound_C=C, **kw)


def variance(band: CoefficientBand, lam, x):
    """``a_lower(x) + lam * (a_upper(x) - a_lower(x))``."""
    lo = band.a_lower(x)
    return lo + lam * (band.a_upper(x) - lo)


def sigma(band: CoefficientBand, lam, x):
    return np.sqrt(variance(band, lam, x))


def drift(band: CoefficientBand, lam, x):
    lo = band.b_lower(x)
    return lo + lam * (band.b_upper(x) - lo)


@dataclass(frozen=True)
class ControlGrid:
    """Uniform lattice over ``[0, 1]**dim`` including all corners."""

    points_per_axis: int = 33
    dim: int = 1

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ContractViolation("ControlGrid needs at least 2 points per axis")
        if self.dim not in CONTROL_DIMS:
            raise ContractViolation(f"control dimension must be one of {CONTROL_DIMS}, got {self.dim}")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points_per_axis)

    def points(self) -> np.ndarray:
        """All lattice points, shape ``(n, dim)``, in lexicographic ascending order."""
        ax = self.axis
        return np.array(list(itertools.product(ax, repeat=self.dim)), dtype=float).reshape(-1, self.dim)

    def __len__(self):
        return self.points_per_axis ** self.dim


def control_points(controls, dim: int) -> np.ndarray:
    """Normalise a ControlGrid or an explicit array of control points to shape ``(n, dim)``."""
    if isinstance(controls, ControlGrid):
        if controls.dim != dim:
            raise ContractViolation(f"control grid has dim {controls.dim}, kernel needs {dim}")
        return controls.points()
    pts = np.asarray(controls, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if pts.size == dim and dim > 1 else pts.reshape(-1, 1)
    if pts.shape[1] != dim:
        raise ContractViolation(f"control points have dim {pts.shape[1]}, kernel needs {dim}")
    if np.any((pts < 0) | (pts > 1)) or not np.all(np.isfinite(pts)):
        raise ContractViolation("control coordinates must lie in [0, 1]")
    return pts


def as_control(coords, dim: int) -> np.ndarray:
    """Validate a single control point."""
    pts = control_points(np.asarray(coords, dtype=float).reshape(1, -1), dim)
    return pts[0]


@dataclass(frozen=True)
class LimitCoefficients:
    """Limit drift ``b`` and volatility ``sigma`` of one state coordinate driven by one noise."""

    b: float
    sigma: float

    @property
    def drift_vector(self) -> np.ndarray:
        return np.array([0.0, self.b])

    @property
    def diffusion_matrix(self) -> np.ndarray:
        s = self.sigma
        return np.array([[1.0, s], [s, s * s]])


def lipschitz_estimate(band: CoefficientBand, domain: tuple[float, float], probe_count: int = 101) -> float:
    """Probe-lattice lower estimate of the Lipschitz constant of ``b`` and ``sigma`` in x.

    ``b`` and ``sigma`` are controlled by independent coordinates, so the sup over
    the control splits into separate maxima. Adjacent lattice pairs suffice: by the
    triangle inequality no wider pair on the lattice can have a larger slope.
    """
    if probe_count < 2:
        raise ContractViolation("probe_count must be >= 2")
    lo, hi = map(float, domain)
    if not lo < hi:
        raise ContractViolation(f"empty domain {domain!r}")
    xs = np.linspace(lo, hi, probe_count)
    lam = np.linspace(0.0, 1.0, probe_count)[:, None]
    b = drift(band, lam, xs[None, :])
    s = sigma(band, lam, xs[None, :])
    for name, vals in (("drift", b), ("sigma", s)):
        bad = ~np.isfinite(vals)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise BandError(f"non-finite {name} at probe lambda={lam[i, 0]!r}, x={xs[j]!r}")
    dx = np.diff(xs)
    slope_b = np.max(np.abs(np.diff(b, axis=1)), axis=0)
    slope_s = np.max(np.abs(np.diff(s, axis=1)), axis=0)
    return float(np.max((slope_b + slope_s) / dx))
