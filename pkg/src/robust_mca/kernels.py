"""Two-atom transition kernels on (driver, state) pairs and their moment diagnostics.

All kernels are translation invariant in the driver coordinate and depend on the
state only through the band functions, so the vectorised core works on state
arrays and control arrays that broadcast against each other.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, InvalidKernelError
from .model import (
    CoefficientBand,
    ControlGrid,
    LimitCoefficients,
    as_control,
    control_points,
    drift,
    sigma,
    variance,
)


class KernelKind(str, enum.Enum):
    ROBUST_CRR = "robust_crr"
    ROBUST_BINOMIAL = "robust_binomial"
    MARTINGALE_BINOMIAL = "martingale_binomial"
    SYMMETRIC_RADEMACHER = "symmetric_rademacher"

    @property
    def control_dim(self) -> int:
        return {"robust_crr": 2, "robust_binomial": 4, "martingale_binomial": 4,
                "symmetric_rademacher": 1}[self.value]


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    band: CoefficientBand
    h: float
    innovation: str = "rademacher"

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ContractViolation(f"kernel step h must be positive, got {self.h}")
        if self.innovation != "rademacher":
            raise ContractViolation(f"unsupported innovation {self.innovation!r}; only 'rademacher'")

    @property
    def control_dim(self) -> int:
        return self.kind.control_dim


@dataclass(frozen=True)
class WeightedSupport:
    points: np.ndarray  # (n_atoms, 2) as (driver, state)
    weights: np.ndarray  # (n_atoms,)

    def __post_init__(self):
        if np.any(self.weights <= 0) or abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise InvalidKernelError(f"weights must be positive and sum to 1, got {self.weights}")

    @property
    def atoms(self):
        return list(zip(map(tuple, self.points), self.weights))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


@dataclass(frozen=True)
class MomentReport:
    b_h: np.ndarray
    a_h: np.ndarray
    tail_mass_eps: float
    limit: LimitCoefficients
    res_b: float
    res_a: float


def h_max(band: CoefficientBand) -> float:
    """Conservative step bound for the martingale kernel: sqrt(h) * C**1.5 < sqrt(1/C)."""
    return band.bound_C ** -4.0


def _lam(lam, k):
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1:] != (k,):
        raise ContractViolation(f"control has trailing dim {lam.shape[-1:]}, kernel needs {k}")
    return [lam[..., i] for i in range(k)]


def _binomial_parts(spec: KernelSpec, lam, x2):
    band, h = spec.band, spec.h
    l1, l2, l3, l4 = _lam(lam, 4)
    s3 = sigma(band, l3, x2)
    s4 = sigma(band, l4, x2)
    u = h * drift(band, l1, x2) + math.sqrt(h) * s3
    d = h * drift(band, l2, x2) - math.sqrt(h) * s4
    return s3, s4, u, d


def increments(spec: KernelSpec, lam, x2):
    """Atom displacements and weights, vectorised.

    ``lam`` has shape ``(..., k)`` and ``x2`` (state) broadcasts against ``lam[..., 0]``.
    Returns ``(d_driver, d_state, weights)`` each of shape ``(..., 2)``; atom 0 is the up move.
    """
    band, h = spec.band, spec.h
    rh = math.sqrt(h)
    x2 = np.asarray(x2, dtype=float)
    kind = spec.kind
    if kind is KernelKind.SYMMETRIC_RADEMACHER:
        (l1,) = _lam(lam, 1)
        step = rh * sigma(band, l1, x2)
        one = np.ones_like(step)
        dz = np.stack([rh * one, -rh * one], axis=-1)
        dx = np.stack([step, -step], axis=-1)
        w = np.stack([0.5 * one, 0.5 * one], axis=-1)
    elif kind is KernelKind.ROBUST_CRR:
        l1, l2 = _lam(lam, 2)
        mu = drift(band, l1, x2) * h
        vol = rh * sigma(band, l2, x2)
        one = np.ones_like(mu + vol)
        dz = np.stack([rh * one, -rh * one], axis=-1)
        dx = np.stack([mu + vol, mu - vol], axis=-1)
        w = np.stack([0.5 * one, 0.5 * one], axis=-1)
    elif kind is KernelKind.ROBUST_BINOMIAL:
        s3, s4, u, d = _binomial_parts(spec, lam, x2)
        p = s4 / (s4 + s3)
        v = np.sqrt(s3 / s4)
        dz = np.stack([rh * v, -rh / v], axis=-1)
        dx = np.stack([u, d], axis=-1)
        w = np.stack([p, 1.0 - p], axis=-1)
    elif kind is KernelKind.MARTINGALE_BINOMIAL:
        s3, s4, u, d = _binomial_parts(spec, lam, x2)
        if np.any(~(u > 0)):
            raise InvalidKernelError(
                f"martingale kernel needs u_h > 0; violated at h={h} (conservative h_max={h_max(band):.6g})")
        if np.any(~(d < 0)):
            raise InvalidKernelError(
                f"martingale kernel needs d_h < 0; violated at h={h} (conservative h_max={h_max(band):.6g})")
        v = np.sqrt(s3 * s4)  # (a3 a4) ** (1/4)
        dz = np.stack([-v * h / d, -v * h / u], axis=-1)
        dx = np.stack([u, d], axis=-1)
        w = np.stack([d / (d - u), u / (u - d)], axis=-1)
    else:  # pragma: no cover
        raise ContractViolation(f"unknown kernel kind {kind!r}")
    return dz, dx, w


def support(spec: KernelSpec, lam, x) -> WeightedSupport:
    """Exact two-atom support of the kernel at a single (control, (driver, state)) point."""
    lam = as_control(lam, spec.control_dim)
    x = np.asarray(x, dtype=float).reshape(2)
    dz, dx, w = increments(spec, lam, x[1])
    pts = np.column_stack([x[0] + dz, x[1] + dx])
    return WeightedSupport(points=pts, weights=np.asarray(w, dtype=float))


def limit_coefficients(spec: KernelSpec, lam, x2) -> LimitCoefficients:
    """Limit drift and volatility of the state coordinate as h goes to 0."""
    band = spec.band
    kind = spec.kind
    lam = as_control(lam, spec.control_dim)
    x2 = float(x2)
    if kind is KernelKind.SYMMETRIC_RADEMACHER:
        return LimitCoefficients(0.0, float(sigma(band, lam[0], x2)))
    if kind is KernelKind.ROBUST_CRR:
        return LimitCoefficients(float(drift(band, lam[0], x2)), float(sigma(band, lam[1], x2)))
    s3 = float(sigma(band, lam[2], x2))
    s4 = float(sigma(band, lam[3], x2))
    vol = math.sqrt(s3 * s4)
    if kind is KernelKind.ROBUST_BINOMIAL:
        p = s4 / (s3 + s4)
        b = p * float(drift(band, lam[0], x2)) + (1 - p) * float(drift(band, lam[1], x2))
        return LimitCoefficients(b, vol)
    return LimitCoefficients(0.0, vol)


def _truncated_moments(dz, dx, w, h, radius=1.0):
    inside = (dz * dz + dx * dx) <= radius * radius
    wi = np.where(inside, w, 0.0)
    b = np.stack([np.sum(wi * dz, -1), np.sum(wi * dx, -1)], -1) / h
    a11 = np.sum(wi * dz * dz, -1) / h
    a12 = np.sum(wi * dz * dx, -1) / h
    a22 = np.sum(wi * dx * dx, -1) / h
    return b, a11, a12, a22


def _tail(dz, dx, w, eps):
    out = (dz * dz + dx * dx) >= eps * eps
    return np.sum(np.where(out, w, 0.0), -1)


def approx_moments(spec: KernelSpec, lam, x, eps: float = 1.0) -> MomentReport:
    """Unit-ball truncated first and second moments divided by h, with residuals to the limit."""
    lam = as_control(lam, spec.control_dim)
    x = np.asarray(x, dtype=float).reshape(2)
    dz, dx, w = increments(spec, lam, x[1])
    b, a11, a12, a22 = _truncated_moments(dz, dx, w, spec.h)
    a = np.array([[a11, a12], [a12, a22]], dtype=float)
    lim = limit_coefficients(spec, lam, x[1])
    return MomentReport(
        b_h=np.asarray(b, dtype=float),
        a_h=a,
        tail_mass_eps=float(_tail(dz, dx, w, eps)),
        limit=lim,
        res_b=float(np.linalg.norm(b - lim.drift_vector)),
        res_a=float(np.linalg.norm(a - lim.diffusion_matrix)),
    )


def _probe(spec: KernelSpec, controls, x_grid):
    pts = control_points(controls, spec.control_dim)
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim == 2:
        xs = xs[:, 1]
    xs = xs.reshape(-1)
    if xs.size == 0 or pts.size == 0:
        raise ContractViolation("probe grids must be nonempty")
    lam = pts[:, None, :]  # (n_ctrl, 1, k)
    return pts, xs, increments(spec, lam, xs[None, :])


def tail_mass(spec: KernelSpec, eps: float, controls, x_grid) -> float:
    """``(1/h) * max`` over the probe lattice of the kernel mass at distance ``>= eps``."""
    if not (eps > 0 and math.isfinite(eps)):
        raise ContractViolation(f"eps must be positive and finite, got {eps}")
    _, _, (dz, dx, w) = _probe(spec, controls, x_grid)
    return float(np.max(_tail(dz, dx, w, eps))) / spec.h


def sup_residuals(spec: KernelSpec, controls, x_grid) -> tuple[float, float]:
    """Sup over the probe lattice of ``|b_h - b_bar|`` and ``|a_h - a_bar|`` (Frobenius)."""
    pts, xs, (dz, dx, w) = _probe(spec, controls, x_grid)
    b, a11, a12, a22 = _truncated_moments(dz, dx, w, spec.h)
    band = spec.band
    kind = spec.kind
    lam = pts[:, None, :]
    if kind is KernelKind.SYMMETRIC_RADEMACHER:
        lb, ls = 0.0, sigma(band, lam[..., 0], xs)
    elif kind is KernelKind.ROBUST_CRR:
        lb, ls = drift(band, lam[..., 0], xs), sigma(band, lam[..., 1], xs)
    else:
        s3, s4 = sigma(band, lam[..., 2], xs), sigma(band, lam[..., 3], xs)
        ls = np.sqrt(s3 * s4)
        if kind is KernelKind.ROBUST_BINOMIAL:
            p = s4 / (s3 + s4)
            lb = p * drift(band, lam[..., 0], xs) + (1 - p) * drift(band, lam[..., 1], xs)
        else:
            lb = 0.0
    res_b = np.hypot(b[..., 0], b[..., 1] - lb)
    res_a = np.sqrt((a11 - 1.0) ** 2 + 2 * (a12 - ls) ** 2 + (a22 - ls * ls) ** 2)
    return float(np.max(res_b)), float(np.max(res_a))


def max_jump_bound(kind: KernelKind, C: float, h: float) -> float:
    """Upper bound on the Euclidean jump size of any atom, from the band constant alone."""
    kind = KernelKind(kind)
    rh = math.sqrt(h)
    state = h * C + rh * math.sqrt(C)
    if kind is KernelKind.SYMMETRIC_RADEMACHER:
        return rh * math.sqrt(1.0 + C)
    if kind is KernelKind.ROBUST_CRR:
        return math.hypot(rh, state)
    if kind is KernelKind.ROBUST_BINOMIAL:
        return math.hypot(rh * math.sqrt(C), state)
    # driver jump v h / |d| with |d| >= sqrt(h / C) - h C
    gap = rh / math.sqrt(C) - h * C
    if gap <= 0:
        return math.inf
    return math.hypot(math.sqrt(C) * h / gap, state)


def tail_threshold(kind: KernelKind, C: float, eps: float) -> float:
    """Supremum of the steps h whose atoms all stay strictly inside the eps-ball.

    The supremum itself sits on the ball edge, so the tail vanishes for every h below it.
    """
    lo, hi = 0.0, 1.0
    while max_jump_bound(kind, C, hi) < eps:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if max_jump_bound(kind, C, mid) < eps:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class ConvergenceReport:
    rows: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    slope_a: float = math.nan
    slope_b: float = math.nan
    flags: list[str] = field(default_factory=list)

    columns = ("h", "sup_res_b", "sup_res_a", "eps", "delta_h_eps")


def _loglog_slope(hs, ys, noise=1e-13):
    # residuals at rounding level carry no rate information
    hs, ys = np.asarray(hs, float), np.asarray(ys, float)
    keep = ys > noise
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(hs[keep]), np.log(ys[keep]), 1)[0])


def verify_convergence(
    spec_factory: Callable[[float], KernelSpec],
    h_list: Sequence[float],
    controls,
    x_grid,
    eps_list: Sequence[float],
) -> ConvergenceReport:
    hs = [float(h) for h in h_list]
    if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])) or hs[-1] <= 0:
        raise ContractViolation("h_list must be strictly decreasing positive with at least 2 entries")
    report = ConvergenceReport()
    rb, ra = [], []
    deltas = {float(e): [] for e in eps_list}
    for h in hs:
        spec = spec_factory(h)
        res_b, res_a = sup_residuals(spec, controls, x_grid)
        rb.append(res_b)
        ra.append(res_a)
        for eps in eps_list:
            d = tail_mass(spec, eps, controls, x_grid)
            deltas[float(eps)].append(d)
            report.rows.append((h, res_b, res_a, float(eps), d))
    report.slope_b = _loglog_slope(hs, rb)
    report.slope_a = _loglog_slope(hs, ra)
    scale = max(max(ra), max(rb), 1.0)
    for name, series in (("b", rb), ("a", ra)):
        if any(y2 > y1 + 1e-12 * scale for y1, y2 in zip(series, series[1:])):
            report.flags.append(f"non-monotone residual in {name}_h")
        if series[-1] > 1e-12 * scale and series[-1] >= 0.5 * series[0]:
            report.flags.append(f"non-vanishing residual in {name}_h")
    for eps, series in deltas.items():
        if series[-1] > 0:
            report.flags.append(f"tail functional nonzero at finest h for eps={eps}")
    return report
