"""Worst-case backward recursion on a uniform state grid.

One backward step maps a value vector ``J`` to

    h g(x) + max over controls of  sum_i w_i J~(x + dx_i(control, x))

where ``J~`` is linear interpolation of ``J``. Displacements do not depend on
time, so the interpolation stencil (cell index and fraction for every node,
control and atom) is computed once per run and each step is a pair of gathers
and a max-reduction.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation, NumericError
from .families import Family, Zero, as_family
from .kernels import KernelKind, KernelSpec, increments
from .model import CoefficientBand, ControlGrid, control_points, sigma
from .payoff import PayoffSpec, n_steps, payoff_bound

BOUNDARY_POLICIES = ("clamp", "extrapolate")


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ContractViolation(f"grid needs x_min < x_max, got {self.x_min}, {self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ContractViolation(f"grid needs n_points >= 2, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, int(self.n_points))

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max


def _stencil(grid: Grid, pts: np.ndarray, boundary: str):
    """Left cell index, fraction in the cell, and the off-grid mask for ``pts``.

    Under ``clamp`` the fraction is clipped to [0, 1] and the mask is None.
    """
    if boundary not in BOUNDARY_POLICIES:
        raise ContractViolation(f"unknown boundary policy {boundary!r}")
    n = int(grid.n_points)
    s = (pts - grid.x_min) / grid.spacing
    idx = np.clip(np.floor(s), 0, n - 2).astype(np.intp)
    t = s - idx
    if boundary == "clamp":
        return idx, np.clip(t, 0.0, 1.0), None
    outside = (t < 0.0) | (t > 1.0)
    return idx, t, (outside if outside.any() else None)


def _blend(a, b, wa, wb):
    """``wa * a + wb * b`` for convex weights, kept inside ``[min(a, b), max(a, b)]``.

    Every operation is non-decreasing in ``a`` and ``b``, so the result stays
    monotone under rounding, and it returns ``a`` exactly when ``a == b``.
    """
    return np.minimum(np.maximum(wa * a + wb * b, np.minimum(a, b)), np.maximum(a, b))


def _interp(values: np.ndarray, idx, t, outside=None):
    left, right = values[idx], values[idx + 1]
    out = _blend(left, right, 1.0 - t, t)
    if outside is not None:
        # linear extrapolation past the grid edge
        out = np.where(outside, left + t * (right - left), out)
    return out


@dataclass
class ValueFunction:
    grid: Grid
    values: np.ndarray
    boundary: str = "clamp"

    def __post_init__(self):
        if self.boundary not in BOUNDARY_POLICIES:
            raise ContractViolation(f"unknown boundary policy {self.boundary!r}")
        if np.shape(self.values) != (int(self.grid.n_points),):
            raise ContractViolation(f"values need shape ({self.grid.n_points},), got {np.shape(self.values)}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = _interp(self.values, *_stencil(self.grid, x, self.boundary))
        return float(out) if out.ndim == 0 else out


class _Chunk:
    """Flattened stencil for a block of nodes, atoms on the leading axis."""

    def __init__(self, sl, idx, t, outside, weights):
        self.sl = sl
        self.shape = idx.shape  # (2, m, controls)
        self.left = np.ascontiguousarray(idx).ravel()
        self.right = self.left + 1
        self.t = np.ascontiguousarray(t).ravel()
        self.s = 1.0 - self.t
        self.off = None
        if outside is not None and outside.any():
            self.off = np.flatnonzero(outside)
            self.off_t = self.t[self.off]
        self.w0 = np.ascontiguousarray(weights[0])
        self.w1 = np.ascontiguousarray(weights[1])


def _clip_between(v, a, b, scratch):
    """Clip ``v`` in place to ``[min(a, b), max(a, b)]``."""
    np.minimum(a, b, out=scratch)
    np.maximum(v, scratch, out=v)
    np.maximum(a, b, out=scratch)
    np.minimum(v, scratch, out=v)


class TwoAtomScheme:
    """Precomputed stencil for one worst-case step with two-atom kernels.

    The arithmetic matches ``_interp`` followed by ``_blend`` operation for
    operation; it is only rearranged into in-place passes over flat buffers.
    """

    def __init__(self, grid: Grid, dx: np.ndarray, weights: np.ndarray, running: np.ndarray,
                 boundary: str = "clamp", threads: int | None = 1):
        nodes = grid.nodes
        self.grid = grid
        self.boundary = boundary
        # atoms first: (2, nodes, controls)
        dx = np.moveaxis(np.asarray(dx, dtype=float), -1, 0)
        weights = np.moveaxis(np.asarray(weights, dtype=float), -1, 0)
        idx, t, outside = _stencil(grid, nodes[None, :, None] + dx, boundary)
        self.running = np.asarray(running, dtype=float)
        self.n_nodes = nodes.size
        threads = threads or os.cpu_count() or 1
        self.threads = max(1, min(int(threads), self.n_nodes))
        bounds = np.linspace(0, self.n_nodes, self.threads + 1).astype(int)
        self.chunks = [
            _Chunk(slice(a, b), idx[:, a:b], t[:, a:b], None if outside is None else outside[:, a:b],
                   weights[:, a:b])
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        ]

    def _step_chunk(self, values, c: _Chunk, out, arg):
        left = values.take(c.left)
        right = values.take(c.right)
        v = left * c.s
        v += right * c.t
        scratch = np.empty_like(v)
        _clip_between(v, left, right, scratch)
        if c.off is not None:
            # linear extrapolation past the grid edge
            lo = left[c.off]
            v[c.off] = lo + c.off_t * (right[c.off] - lo)
        v = v.reshape(c.shape)
        a0, a1 = v[0], v[1]
        combo = a0 * c.w0
        combo += a1 * c.w1
        _clip_between(combo, a0, a1, scratch[: combo.size].reshape(combo.shape))
        k = np.argmax(combo, axis=1)  # first maximum, i.e. smallest control in lattice order
        best = np.take_along_axis(combo, k[:, None], axis=1)[:, 0]
        out[c.sl] = self.running[c.sl] + best
        arg[c.sl] = k

    def step(self, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=float)
        out = np.empty(self.n_nodes)
        arg = np.empty(self.n_nodes, dtype=np.intp)
        if len(self.chunks) == 1:
            self._step_chunk(values, self.chunks[0], out, arg)
        else:
            with ThreadPoolExecutor(len(self.chunks)) as pool:
                list(pool.map(lambda c: self._step_chunk(values, c, out, arg), self.chunks))
        if not np.all(np.isfinite(out)):
            i = int(np.argmin(np.isfinite(out)))
            raise NumericError(f"non-finite value at grid node {i} (x={self.grid.nodes[i]!r})")
        return out, arg


def _rademacher_scheme(grid, h, band, g, pts, boundary, threads):
    x = grid.nodes[:, None]
    step = math.sqrt(h) * sigma(band, pts[None, :, 0], x)
    dx = np.stack([step, -step], axis=-1)
    w = np.full(dx.shape, 0.5)
    return TwoAtomScheme(grid, dx, w, h * as_family(g)(grid.nodes), boundary, threads)


def _kernel_scheme(kernel: KernelSpec, grid, g, pts, boundary, threads):
    lam = pts[None, :, :]
    _, dx, w = increments(kernel, lam, grid.nodes[:, None])
    dx = np.broadcast_to(dx, (grid.n_points, len(pts), 2))
    w = np.broadcast_to(w, (grid.n_points, len(pts), 2))
    return TwoAtomScheme(grid, dx, w, kernel.h * as_family(g)(grid.nodes), boundary, threads)


def apply_S_h(J: ValueFunction, h: float, band: CoefficientBand, g: Family | None = None,
              controls=ControlGrid(33, 1), threads: int | None = 1) -> ValueFunction:
    """One worst-case step ``h g(x) + 1/2 max_lambda [J(x + sqrt(h) sigma) + J(x - sqrt(h) sigma)]``."""
    if not np.all(np.isfinite(J.values)):
        raise NumericError("input value function has non-finite entries")
    pts = control_points(controls, 1)
    scheme = _rademacher_scheme(J.grid, h, band, g if g is not None else Zero(), pts, J.boundary, threads)
    out, _ = scheme.step(np.asarray(J.values, dtype=float))
    return ValueFunction(J.grid, out, J.boundary)


@dataclass
class PricingResult:
    price: float
    h: float
    N: int
    value_curve: ValueFunction
    lambda_resolution: int
    wall_time: float
    control_points: np.ndarray
    # argmax control index per (forward time step, node) when recorded; argmax_t0 is always kept
    argmax: np.ndarray | None = None
    argmax_t0: np.ndarray | None = None
    x0: float = math.nan
    meta: dict = field(default_factory=dict)


def _run(scheme: TwoAtomScheme, payoff: PayoffSpec, x0: float, h: float, grid: Grid, pts,
         record_controls: bool, boundary: str) -> PricingResult:
    if not grid.contains(x0):
        raise ContractViolation(f"x0={x0} outside grid [{grid.x_min}, {grid.x_max}]")
    if not h <= payoff.T * (1 + 1e-12):
        raise ContractViolation(f"h={h} exceeds horizon T={payoff.T}")
    t0 = time.perf_counter()
    N = n_steps(payoff.T, h)
    values = np.asarray(payoff.l(grid.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericError("terminal payoff is non-finite on the grid")
    records = np.empty((N, grid.n_points), dtype=np.int32) if record_controls else None
    first = None
    for j in range(N):
        values, arg = scheme.step(values)
        if records is not None:
            records[N - 1 - j] = arg
        if j == N - 1:
            first = arg.astype(np.int32)  # controls used at time 0
    if boundary == "clamp":
        bound = payoff_bound(payoff, (grid.x_min, grid.x_max))
        if np.max(np.abs(values)) > bound * (1 + 1e-9) + 1e-12:
            raise NumericError(f"value function exceeds payoff bound {bound}")
    curve = ValueFunction(grid, values, boundary)
    res = PricingResult(
        price=curve(x0),
        h=h,
        N=N,
        value_curve=curve,
        lambda_resolution=len(pts),
        wall_time=time.perf_counter() - t0,
        control_points=pts,
        argmax=records,
        argmax_t0=first,
        x0=x0,
    )
    return res


def price(band: CoefficientBand, payoff: PayoffSpec, x0: float, h: float, grid: Grid,
          controls=ControlGrid(33, 1), boundary: str = "clamp", threads: int | None = 1,
          record_controls: bool = False) -> PricingResult:
    """``S_h`` composed ``floor(T/h)`` times on the terminal payoff, read off at ``x0``.

    ``controls`` is a one-dimensional ControlGrid or an explicit array of
    lambda values; a single value gives the frozen-control (linear) recursion.
    """
    pts = control_points(controls, 1)
    scheme = _rademacher_scheme(grid, h, band, payoff.g, pts, boundary, threads)
    return _run(scheme, payoff, x0, h, grid, pts, record_controls, boundary)


def worst_case_expectation(kernel: KernelSpec, payoff: PayoffSpec, x0: float, grid: Grid,
                           controls=None, boundary: str = "clamp", threads: int | None = 1,
                           record_controls: bool = False) -> PricingResult:
    """Backward recursion with a generic two-atom kernel, on the state coordinate only.

    The driver coordinate never enters the state transition of any supported
    kernel, so the recursion runs on the one-dimensional state grid.
    """
    if controls is None:
        controls = ControlGrid(33 if kernel.control_dim == 1 else 3, kernel.control_dim)
    pts = control_points(controls, kernel.control_dim)
    scheme = _kernel_scheme(kernel, grid, payoff.g, pts, boundary, threads)
    return _run(scheme, payoff, x0, kernel.h, grid, pts, record_controls, boundary)


@dataclass
class SweepReport:
    rows: list[tuple[float, int, float, float, float]]
    flags: list[str]
    boundary_distance_sd: float
    results: list[PricingResult]

    columns = ("h", "N", "price", "diff", "order")


def boundary_distance(band: CoefficientBand, grid: Grid, x0: float, T: float) -> float:
    """Distance from x0 to the nearer grid edge, in units of ``sqrt(max a_upper * T)``."""
    sd = math.sqrt(float(np.max(band.a_upper(grid.nodes))) * T)
    return min(x0 - grid.x_min, grid.x_max - x0) / sd


def sweep(band: CoefficientBand, payoff: PayoffSpec, x0: float, h_list: Sequence[float], grid: Grid,
          controls=ControlGrid(33, 1), boundary: str = "clamp", threads: int | None = 1) -> SweepReport:
    """Prices over decreasing h with differences to the finest-h price and empirical orders.

    With ``d[i] = |p[i] - p[i-1]|`` the order at row i is
    ``log(d[i-1] / d[i]) / log(h[i-1] / h[i])``; rows without two nonzero
    differences report NaN.
    """
    hs = [float(h) for h in h_list]
    if len(hs) < 3:
        raise ContractViolation("sweep needs at least 3 step sizes")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ContractViolation("h_list must be strictly decreasing")
    results = [price(band, payoff, x0, h, grid, controls, boundary, threads) for h in hs]
    prices = [r.price for r in results]
    ref = prices[-1]
    diffs = [math.nan] + [abs(b - a) for a, b in zip(prices, prices[1:])]
    rows = []
    for i, (h, r) in enumerate(zip(hs, results)):
        order = math.nan
        if i >= 2 and diffs[i - 1] > 0 and diffs[i] > 0:
            order = math.log(diffs[i - 1] / diffs[i]) / math.log(hs[i - 1] / hs[i])
        rows.append((h, r.N, r.price, abs(r.price - ref), order))
    flags = []
    succ = diffs[1:]
    scale = max(1.0, max(abs(p) for p in prices))
    if any(b > a + 1e-12 * scale for a, b in zip(succ, succ[1:])):
        flags.append("non-Cauchy: successive price differences do not decrease")
    dist = boundary_distance(band, grid, x0, payoff.T)
    if dist < 5:
        flags.append(f"boundary contamination risk: x0 is {dist:.2f} sd from the grid edge")
    return SweepReport(rows, flags, dist, results)
