"""Closed catalogue of scalar function families used for bands and payoffs.

Every family is a small frozen dataclass that evaluates vectorised over numpy
arrays, serialises to a ``{"family": name, ...}`` record and knows the points
where it changes monotonicity (so sup-norms over an interval are exact).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError

_REGISTRY: dict[str, type] = {}


def _register(name: str):
    def deco(cls):
        cls.family = name
        _REGISTRY[name] = cls
        return cls

    return deco


class Family:
    family: str = ""

    def __call__(self, x):
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_dict(self) -> dict[str, Any]:
        d = {"family": self.family}
        d.update(asdict(self))
        return d

    def sup_abs(self, lo: float, hi: float) -> float:
        """Exact sup of ``|f|`` on ``[lo, hi]`` (families are monotone between breakpoints)."""
        pts = [lo, hi] + [b for b in self.breakpoints() if lo < b < hi]
        return float(np.max(np.abs(self(np.asarray(pts, dtype=float)))))


@_register("constant")
@dataclass(frozen=True)
class Constant(Family):
    c: float

    def __call__(self, x):
        return np.full(np.shape(x), float(self.c)) if np.ndim(x) else float(self.c)


@_register("zero")
@dataclass(frozen=True)
class Zero(Family):
    def __call__(self, x):
        return np.zeros(np.shape(x)) if np.ndim(x) else 0.0


@_register("affine")
@dataclass(frozen=True)
class Affine(Family):
    alpha: float
    beta: float

    def __call__(self, x):
        return self.alpha + self.beta * np.asarray(x, dtype=float)


@_register("identity")
@dataclass(frozen=True)
class Identity(Family):
    def __call__(self, x):
        return np.asarray(x, dtype=float) * 1.0


@_register("clamp")
@dataclass(frozen=True)
class Clamp(Family):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"clamp needs lo <= hi, got {self.lo}, {self.hi}")

    def __call__(self, x):
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lo), self.hi)

    def breakpoints(self):
        return (self.lo, self.hi)


@_register("power_clamp")
@dataclass(frozen=True)
class PowerClamp(Family):
    """``clamp(x, lo, hi) ** p``."""

    lo: float
    hi: float
    p: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"power_clamp needs lo <= hi, got {self.lo}, {self.hi}")

    def __call__(self, x):
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lo), self.hi) ** self.p

    def breakpoints(self):
        return (self.lo, 0.0, self.hi)


@_register("table")
@dataclass(frozen=True)
class Table(Family):
    """Piecewise-linear lookup, flat outside the breakpoints."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(v) for v in self.x)
        ys = tuple(float(v) for v in self.y)
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", ys)
        if len(xs) < 2 or len(xs) != len(ys):
            raise ValueError("table needs at least two (x, y) pairs of equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("table breakpoints must be strictly increasing")

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.y)

    def breakpoints(self):
        return self.x

    def to_dict(self):
        return {"family": "table", "x": list(self.x), "y": list(self.y)}


@_register("call")
@dataclass(frozen=True)
class Call(Family):
    K: float

    def __call__(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.K, 0.0)

    def breakpoints(self):
        return (self.K,)


@_register("put")
@dataclass(frozen=True)
class Put(Family):
    K: float

    def __call__(self, x):
        return np.maximum(self.K - np.asarray(x, dtype=float), 0.0)

    def breakpoints(self):
        return (self.K,)


@_register("cutoff_call")
@dataclass(frozen=True)
class CutoffCall(Family):
    """``min(max(x - K, 0), M)``."""

    K: float
    M: float

    def __call__(self, x):
        return np.minimum(np.maximum(np.asarray(x, dtype=float) - self.K, 0.0), self.M)

    def breakpoints(self):
        return (self.K, self.K + self.M)


@dataclass(frozen=True)
class FromCallable(Family):
    """Escape hatch for library users; not serialisable."""

    fn: Callable = field(compare=False)
    name: str = "callable"

    def __call__(self, x):
        return self.fn(x)

    def to_dict(self):
        raise TypeError("callable-backed families cannot be serialised")

    def sup_abs(self, lo, hi):
        xs = np.linspace(lo, hi, 10_001)
        return float(np.max(np.abs(self(xs))))


def family_names() -> list[str]:
    return sorted(_REGISTRY)


def from_dict(record: dict[str, Any], path: str = "") -> Family:
    if isinstance(record, (int, float)) and not isinstance(record, bool):
        return Constant(float(record))
    if not isinstance(record, dict):
        raise ConfigError(path, f"expected a {{family, ...}} record, got {type(record).__name__}")
    params = dict(record)
    name = params.pop("family", None)
    if name not in _REGISTRY:
        raise ConfigError(f"{path}.family" if path else "family",
                          f"unknown family {name!r}; choose from {family_names()}")
    cls = _REGISTRY[name]
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(path, f"bad parameters for family {name!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def as_family(f) -> Family:
    if isinstance(f, Family):
        return f
    if isinstance(f, dict):
        return from_dict(f)
    if isinstance(f, (int, float)):
        return Constant(float(f))
    if callable(f):
        return FromCallable(f)
    raise TypeError(f"cannot interpret {f!r} as a function family")
