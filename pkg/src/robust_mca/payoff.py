"""Claims built from a running payoff g and a terminal payoff l over horizon T."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation
from .families import Family, Zero, as_family, from_dict


def n_steps(T: float, h: float) -> int:
    """``floor(T / h)``, robust to ``h = T / N`` being inexact in binary."""
    if not h > 0:
        raise ContractViolation(f"h must be positive, got {h}")
    q = T / h
    k = round(q)
    if abs(q - k) <= 1e-9 * max(1.0, q):
        return int(k)
    return int(math.floor(q))


@dataclass(frozen=True)
class PayoffSpec:
    l: Family
    T: float = 1.0
    g: Family = Zero()

    def __post_init__(self):
        object.__setattr__(self, "l", as_family(self.l))
        object.__setattr__(self, "g", as_family(self.g))
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ContractViolation(f"horizon T must be positive, got {self.T}")

    def to_dict(self) -> dict:
        return {"g": self.g.to_dict(), "l": self.l.to_dict(), "T": self.T}

    @classmethod
    def from_dict(cls, d: dict, path: str = "payoff") -> "PayoffSpec":
        if not isinstance(d, dict):
            raise ConfigError(path, "expected a table with g, l, T")
        if "l" not in d:
            raise ConfigError(f"{path}.l", "missing terminal payoff")
        g = from_dict(d["g"], f"{path}.g") if "g" in d else Zero()
        l = from_dict(d["l"], f"{path}.l")
        try:
            T = float(d.get("T", 1.0))
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.T", f"not a number: {d.get('T')!r}") from None
        if not T > 0:
            raise ConfigError(f"{path}.T", "must be positive")
        return cls(l=l, g=g, T=T)


def discrete_payoff(spec: PayoffSpec, h: float, path) -> float | np.ndarray:
    """``sum_{i < N} h g(Y_i) + l(Y_N)`` with ``N = floor(T / h)``.

    ``path`` holds states along its last axis, so a 2-d array of paths gives one
    value per row.
    """
    states = np.asarray(path, dtype=float)
    N = n_steps(spec.T, h)
    if states.shape[-1] < N + 1:
        raise ContractViolation(f"path has {states.shape[-1]} states, need at least {N + 1}")
    running = h * np.sum(spec.g(states[..., :N]), axis=-1) if N else 0.0
    out = running + spec.l(states[..., N])
    return float(out) if np.ndim(out) == 0 else out


def payoff_bound(spec: PayoffSpec, domain: tuple[float, float]) -> float:
    """``T * sup|g| + sup|l|`` over the declared state interval."""
    lo, hi = domain
    return spec.T * spec.g.sup_abs(lo, hi) + spec.l.sup_abs(lo, hi)
