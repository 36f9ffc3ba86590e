"""Run configuration: loading from JSON/TOML, validation with field paths, round-trip."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import BOUNDARY_POLICIES, Grid
from .errors import ConfigError, RobustMCAError
from .kernels import KernelKind
from .model import CoefficientBand, ControlGrid
from .payoff import PayoffSpec

DEFAULT_VERIFY_H = tuple(2.0 ** -k for k in range(3, 11))
# default lattice points per control axis, by control dimension
DEFAULT_LAMBDA_POINTS = {1: 33, 2: 9, 4: 5}
MAX_CONTROL_POINTS = 100_000

_KNOWN_KEYS = {
    "band", "payoff", "kernel", "x0", "grid", "h", "N", "h_list", "N_list", "lambda_points",
    "probe_lambda_points", "probe_points", "eps_list", "seed", "out", "boundary", "n_paths",
    "controls", "steps",
}


def _num(d, key, path, default=None, kind=float, positive=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}{key}", "missing required value")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}{key}", f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{path}{key}", f"expected an integer, got {v!r}")
    v = kind(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}{key}", "must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{path}{key}", "must be positive")
    return v


def _num_list(d, key, path, kind=float):
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}{key}", "expected a nonempty list")
    return [_num({str(i): x}, str(i), f"{path}{key}.", kind=kind, positive=True) for i, x in enumerate(v)]


@dataclass
class RunConfig:
    band: CoefficientBand
    payoff: PayoffSpec
    grid: Grid
    x0: float
    kernel: KernelKind = KernelKind.SYMMETRIC_RADEMACHER
    h: float | None = None
    h_list: list[float] | None = None
    lambda_points: int | None = None
    probe_lambda_points: int = 5
    probe_points: int = 101
    eps_list: list[float] = field(default_factory=lambda: [0.5])
    seed: int = 0
    out: str = "out"
    boundary: str = "clamp"
    n_paths: int = 10_000
    steps: int | None = None
    controls: list[dict] = field(default_factory=lambda: [{"rule": "constant", "lambda": None}])

    def control_grid(self) -> ControlGrid:
        """DP control lattice for the configured kernel."""
        dim = self.kernel.control_dim
        return ControlGrid(self.lambda_points or DEFAULT_LAMBDA_POINTS[dim], dim)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "band": self.band.to_dict(),
            "payoff": self.payoff.to_dict(),
            "kernel": self.kernel.value,
            "x0": self.x0,
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n_points": self.grid.n_points},
            "probe_lambda_points": self.probe_lambda_points,
            "probe_points": self.probe_points,
            "eps_list": list(self.eps_list),
            "seed": self.seed,
            "out": self.out,
            "boundary": self.boundary,
            "n_paths": self.n_paths,
            "controls": [dict(c) for c in self.controls],
        }
        if self.lambda_points is not None:
            d["lambda_points"] = self.lambda_points
        if self.h is not None:
            d["h"] = self.h
        if self.h_list is not None:
            d["h_list"] = list(self.h_list)
        if self.steps is not None:
            d["steps"] = self.steps
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "configuration must be a table")
        unknown = sorted(set(d) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        if "band" not in d:
            raise ConfigError("band", "the band table is missing")
        band = CoefficientBand.from_dict(d["band"], "band")
        if "payoff" not in d:
            raise ConfigError("payoff", "the payoff table is missing")
        payoff = PayoffSpec.from_dict(d["payoff"], "payoff")
        g = d.get("grid")
        if not isinstance(g, dict):
            raise ConfigError("grid", "expected a table with x_min, x_max, n_points")
        x_min = _num(g, "x_min", "grid.")
        x_max = _num(g, "x_max", "grid.")
        n_points = _num(g, "n_points", "grid.", kind=int)
        if not x_min < x_max:
            raise ConfigError("grid.x_max", "must exceed grid.x_min")
        if n_points < 2:
            raise ConfigError("grid.n_points", "must be >= 2")
        grid = Grid(x_min, x_max, n_points)
        try:
            band.check(grid.nodes)
        except RobustMCAError as exc:
            raise ConfigError("band", str(exc)) from None
        x0 = _num(d, "x0", "")
        if not grid.contains(x0):
            raise ConfigError("x0", f"must lie in [{x_min}, {x_max}]")
        try:
            kernel = KernelKind(d.get("kernel", KernelKind.SYMMETRIC_RADEMACHER.value))
        except ValueError:
            raise ConfigError("kernel", f"unknown kernel kind; choose from {[k.value for k in KernelKind]}") from None

        h = None
        if "h" in d and "N" in d:
            raise ConfigError("N", "give either h or N, not both")
        if "h" in d:
            h = _num(d, "h", "", positive=True)
        elif "N" in d:
            h = payoff.T / _num(d, "N", "", kind=int, positive=True)
        if h is not None and h > payoff.T:
            raise ConfigError("h", "must not exceed payoff.T")

        h_list = None
        if "h_list" in d and "N_list" in d:
            raise ConfigError("N_list", "give either h_list or N_list, not both")
        if "h_list" in d:
            h_list = _num_list(d, "h_list", "")
        elif "N_list" in d:
            h_list = [payoff.T / n for n in _num_list(d, "N_list", "", kind=int)]
        if h_list is not None and any(b >= a for a, b in zip(h_list, h_list[1:])):
            raise ConfigError("h_list", "must be strictly decreasing")

        lambda_points = _num(d, "lambda_points", "", kind=int) if "lambda_points" in d else None
        if lambda_points is not None:
            if lambda_points < 2:
                raise ConfigError("lambda_points", "must be >= 2")
            if lambda_points ** kernel.control_dim > MAX_CONTROL_POINTS:
                raise ConfigError("lambda_points", f"{lambda_points}**{kernel.control_dim} control points exceed "
                                                   f"the limit of {MAX_CONTROL_POINTS}")
        probe_lambda_points = _num(d, "probe_lambda_points", "", 5, int)
        if probe_lambda_points < 2:
            raise ConfigError("probe_lambda_points", "must be >= 2")
        probe_points = _num(d, "probe_points", "", 101, int)
        if probe_points < 2:
            raise ConfigError("probe_points", "must be >= 2")
        eps_list = _num_list(d, "eps_list", "") if "eps_list" in d else [0.5]
        seed = _num(d, "seed", "", 0, int)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        out = d.get("out", "out")
        if not isinstance(out, str):
            raise ConfigError("out", "expected a path string")
        boundary = d.get("boundary", "clamp")
        if boundary not in BOUNDARY_POLICIES:
            raise ConfigError("boundary", f"choose from {list(BOUNDARY_POLICIES)}")
        n_paths = _num(d, "n_paths", "", 10_000, int)
        if n_paths < 2:
            raise ConfigError("n_paths", "must be >= 2")
        steps = _num(d, "steps", "", kind=int, positive=True) if "steps" in d else None
        controls = d.get("controls", [{"rule": "constant", "lambda": None}])
        if not isinstance(controls, list) or not controls:
            raise ConfigError("controls", "expected a nonempty list of control rules")
        for i, c in enumerate(controls):
            if not isinstance(c, dict) or c.get("rule") not in ("constant", "random", "random_lookup", "greedy"):
                raise ConfigError(f"controls.{i}.rule", "choose from constant, random, random_lookup, greedy")
            if c["rule"] == "constant" and c.get("lambda") is not None:
                lam = c["lambda"]
                lam = lam if isinstance(lam, list) else [lam]
                if len(lam) != kernel.control_dim or any(
                        isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1 for v in lam):
                    raise ConfigError(f"controls.{i}.lambda",
                                      f"expected {kernel.control_dim} numbers in [0, 1]")
        return cls(band=band, payoff=payoff, grid=grid, x0=x0, kernel=kernel, h=h, h_list=h_list,
                   lambda_points=lambda_points, probe_lambda_points=probe_lambda_points,
                   probe_points=probe_points, eps_list=eps_list, seed=seed, out=out, boundary=boundary,
                   n_paths=n_paths, steps=steps, controls=[dict(c) for c in controls])


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text.decode("utf-8"))
        elif path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            raise ConfigError("<file>", f"unsupported config extension {path.suffix!r}; use .json or .toml")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("<file>", f"parse error: {exc}") from None
    return RunConfig.from_dict(data)
