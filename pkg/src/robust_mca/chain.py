"""Controlled Markov chain simulation and Monte Carlo lower bounds for DP prices."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import Grid, PricingResult
from .errors import ContractViolation, InvalidKernelError
from .kernels import KernelSpec, increments
from .model import control_points
from .payoff import PayoffSpec, n_steps
from .rng import ATOM_STREAM, CONTROL_STREAM, counter_uniforms

BLOCK = 8192


@dataclass(frozen=True)
class FeedbackControl:
    """Markov feedback rule ``(step, state) -> control``.

    ``rule`` is ``"constant"``, ``"lookup"`` (control index per nearest grid node,
    one row per time step or a single time-independent row) or ``"random"``
    (independent uniform draw from ``points`` at every step).
    """

    rule: str
    points: np.ndarray
    table: np.ndarray | None = None
    grid: Grid | None = None
    name: str = ""

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if np.any((pts < 0) | (pts > 1)):
            raise ContractViolation("feedback control points must lie in [0, 1]")
        if self.rule not in ("constant", "lookup", "random"):
            raise ContractViolation(f"unknown control rule {self.rule!r}")
        if self.rule == "constant" and len(pts) != 1:
            raise ContractViolation("constant control needs exactly one point")
        if self.rule == "lookup":
            if self.table is None or self.grid is None:
                raise ContractViolation("lookup control needs a table and a grid")
            table = np.atleast_2d(np.asarray(self.table, dtype=np.intp))
            if table.shape[1] != self.grid.n_points:
                raise ContractViolation("lookup table width must match the grid")
            if table.min() < 0 or table.max() >= len(pts):
                raise ContractViolation("lookup table references a missing control point")
            object.__setattr__(self, "table", table)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def constant(cls, lam, name: str = "") -> "FeedbackControl":
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return cls("constant", lam[None, :], name=name or f"constant{tuple(lam.tolist())}")

    @classmethod
    def random_uniform(cls, points, name: str = "random") -> "FeedbackControl":
        return cls("random", points, name=name)

    @classmethod
    def lookup(cls, grid: Grid, points, table, name: str = "lookup") -> "FeedbackControl":
        return cls("lookup", points, table=table, grid=grid, name=name)

    @classmethod
    def random_lookup(cls, grid: Grid, points, seed: int, steps: int = 1, name: str = "") -> "FeedbackControl":
        """Lookup control with an independently drawn control index per (step, node)."""
        pts = np.atleast_2d(points)
        rng = np.random.default_rng(seed)
        table = rng.integers(0, len(pts), size=(steps, grid.n_points))
        return cls("lookup", pts, table=table, grid=grid, name=name or f"random_lookup[{seed}]")

    def select(self, step: int, states: np.ndarray, paths: np.ndarray, seed: int) -> np.ndarray:
        """Controls for a batch of paths at ``step``, shape ``(len(states), dim)``."""
        n = len(states)
        if self.rule == "constant":
            return np.broadcast_to(self.points[0], (n, self.dim))
        if self.rule == "random":
            u = counter_uniforms(seed, CONTROL_STREAM, paths, step)
            k = np.minimum((u * len(self.points)).astype(np.intp), len(self.points) - 1)
            return self.points[k]
        g = self.grid
        node = np.clip(np.rint((states - g.x_min) / g.spacing), 0, g.n_points - 1).astype(np.intp)
        row = self.table[min(step, len(self.table) - 1)]
        return self.points[row[node]]


@dataclass(frozen=True)
class PathSample:
    h: float
    Y: np.ndarray  # (steps + 1, 2) as (driver, state)
    seed: int
    path_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(len(self.Y))


def _advance(kernel: KernelSpec, Y: np.ndarray, lam: np.ndarray, u: np.ndarray, step: int):
    try:
        dz, dx, w = increments(kernel, lam, Y[:, 1])
    except InvalidKernelError as exc:
        raise InvalidKernelError(f"step {step}: {exc}") from None
    up = u < w[:, 0]
    Y = Y.copy()
    Y[:, 0] += np.where(up, dz[:, 0], dz[:, 1])
    Y[:, 1] += np.where(up, dx[:, 0], dx[:, 1])
    return Y


def _check_dim(kernel: KernelSpec, control: FeedbackControl):
    if control.dim != kernel.control_dim:
        raise ContractViolation(f"control has dim {control.dim}, kernel {kernel.kind.value} needs {kernel.control_dim}")


def simulate(kernel: KernelSpec, control: FeedbackControl, x0: float, steps: int, seed: int,
             path_index: int = 0) -> PathSample:
    """One path of the controlled chain, started at ``(0, x0)``.

    Atom choice is inverse transform on a uniform keyed by (seed, path_index, step),
    so path ``i`` is the same whether simulated alone or inside a Monte Carlo batch.
    """
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    _check_dim(kernel, control)
    paths = np.array([path_index], dtype=np.uint64)
    Y = np.array([[0.0, float(x0)]])
    out = [Y[0]]
    uniforms = counter_uniforms(seed, ATOM_STREAM, paths[0], np.arange(steps, dtype=np.uint64))
    for k in range(steps):
        lam = control.select(k, Y[:, 1], paths, seed)
        Y = _advance(kernel, Y, lam, uniforms[k:k + 1], k)
        out.append(Y[0])
    return PathSample(kernel.h, np.array(out), seed, path_index)


@dataclass(frozen=True)
class InterpolatedPath:
    """Piecewise-linear continuous-time path through the chain states."""

    h: float
    Y: np.ndarray

    @property
    def horizon(self) -> float:
        return self.h * (len(self.Y) - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon * (1 + 1e-12)):
            raise ContractViolation(f"evaluation time outside [0, {self.horizon}]")
        q = t / self.h
        near = np.rint(q)
        on_node = np.abs(q - near) <= 1e-9 * np.maximum(1.0, q)
        k = np.where(on_node, near, np.floor(q)).astype(np.intp)
        k = np.minimum(k, len(self.Y) - 1)
        k1 = np.minimum(k + 1, len(self.Y) - 1)
        frac = np.where(on_node, 0.0, q - k)[..., None]
        lo, hi = self.Y[k], self.Y[k1]
        # (floor + 1 - t/h) * Y_k + (t/h - floor) * Y_{k+1}; exact Y_k at node times
        return np.where(on_node[..., None], lo, (1.0 - frac) * lo + frac * hi)


def interpolate(path: PathSample) -> InterpolatedPath:
    return InterpolatedPath(path.h, path.Y)


def _block_payoffs(kernel, control, payoff, x0, N, seed, start, stop):
    paths = np.arange(start, stop, dtype=np.uint64)
    Y = np.zeros((stop - start, 2))
    Y[:, 1] = x0
    running = np.zeros(stop - start)
    h = kernel.h
    for k in range(N):
        running += h * payoff.g(Y[:, 1])
        lam = control.select(k, Y[:, 1], paths, seed)
        Y = _advance(kernel, Y, lam, counter_uniforms(seed, ATOM_STREAM, paths, k), k)
    return running + payoff.l(Y[:, 1])


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float
    n_paths: int

    def __iter__(self):
        return iter((self.estimate, self.std_error))


def monte_carlo_value(kernel: KernelSpec, control: FeedbackControl, payoff: PayoffSpec, x0: float,
                      n_paths: int, seed: int, threads: int | None = 1, h: float | None = None) -> MCEstimate:
    """Sample mean and standard error of the discretised payoff over ``n_paths`` chains."""
    if n_paths < 2:
        raise ContractViolation("n_paths must be >= 2")
    if h is not None and not math.isclose(h, kernel.h, rel_tol=1e-12):
        raise ContractViolation(f"h={h} does not match kernel step {kernel.h}")
    _check_dim(kernel, control)
    N = n_steps(payoff.T, kernel.h)
    blocks = [(a, min(a + BLOCK, n_paths)) for a in range(0, n_paths, BLOCK)]
    work = lambda ab: _block_payoffs(kernel, control, payoff, x0, N, seed, *ab)
    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(min(threads, len(blocks))) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(ab) for ab in blocks]
    vals = np.concatenate(parts)
    if np.all(vals == vals[0]):
        return MCEstimate(float(vals[0]), 0.0, n_paths)
    return MCEstimate(float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n_paths)), n_paths)


def extract_greedy_control(result: PricingResult, band=None, h: float | None = None,
                           controls=None) -> FeedbackControl:
    """Time-dependent lookup control that replays the DP argmax at the nearest grid node.

    Needs a result computed with ``record_controls=True``.
    """
    if result.argmax is None:
        raise ContractViolation("pricing result carries no per-step argmax records; "
                                "rerun with record_controls=True")
    if h is not None and not math.isclose(h, result.h, rel_tol=1e-12):
        raise ContractViolation(f"h={h} does not match the pricing result (h={result.h})")
    pts = result.control_points
    if controls is not None:
        expected = control_points(controls, pts.shape[1])
        if expected.shape != pts.shape or not np.array_equal(expected, pts):
            raise ContractViolation("control lattice does not match the one used for pricing")
    return FeedbackControl.lookup(result.value_curve.grid, pts, result.argmax, name="greedy")
