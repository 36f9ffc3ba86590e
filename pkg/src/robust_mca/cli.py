"""Command line entry point: ``robust-mca <subcommand> --config run.toml --out dir``.

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 contract violation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import presets
from .chain import FeedbackControl, extract_greedy_control, monte_carlo_value, simulate
from .config import DEFAULT_VERIFY_H, RunConfig, load_config
from .engine import price, sweep, worst_case_expectation
from .errors import ConfigError, RobustMCAError
from .kernels import KernelKind, KernelSpec, verify_convergence
from .model import ControlGrid
from .payoff import n_steps
from .svg import line_plot

log = logging.getLogger("robust_mca")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = Path(args.out or (cfg.out if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config", "this subcommand needs a configuration file")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _require_h(cfg: RunConfig) -> float:
    if cfg.h is None:
        raise ConfigError("h", "missing step size (give h or N)")
    return cfg.h


def _dp(cfg: RunConfig, h: float, threads, record=False):
    if cfg.kernel is KernelKind.SYMMETRIC_RADEMACHER:
        return price(cfg.band, cfg.payoff, cfg.x0, h, cfg.grid, cfg.control_grid(),
                     cfg.boundary, threads, record_controls=record)
    kernel = KernelSpec(cfg.kernel, cfg.band, h)
    return worst_case_expectation(kernel, cfg.payoff, cfg.x0, cfg.grid, cfg.control_grid(),
                                  cfg.boundary, threads, record_controls=record)


def cmd_price(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    res = _dp(cfg, _require_h(cfg), args.threads)
    write_csv(out / "price.csv", ("h", "N", "x0", "price"), [(res.h, res.N, cfg.x0, res.price)])
    write_csv(out / "value_curve.csv", ("x", "value"),
              zip(cfg.grid.nodes.tolist(), res.value_curve.values.tolist()))
    print(_fmt(res.price))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    if cfg.h_list is None:
        raise ConfigError("h_list", "sweep needs h_list or N_list")
    if cfg.kernel is not KernelKind.SYMMETRIC_RADEMACHER:
        raise ConfigError("kernel", "sweep runs the symmetric_rademacher recursion only")
    rep = sweep(cfg.band, cfg.payoff, cfg.x0, cfg.h_list, cfg.grid, cfg.control_grid(),
                cfg.boundary, args.threads)
    write_csv(out / "sweep.csv", rep.columns, rep.rows)
    for flag in rep.flags:
        log.warning(flag)
    print(f"boundary_distance_sd={rep.boundary_distance_sd!r}")
    for row in rep.rows:
        print(",".join(_fmt(v) for v in row))
    return 0


def cmd_verify_kernel(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    h_list = cfg.h_list or list(DEFAULT_VERIFY_H)
    kind = cfg.kernel
    controls = ControlGrid(cfg.probe_lambda_points, kind.control_dim)
    xs = np.linspace(cfg.grid.x_min, cfg.grid.x_max, cfg.probe_points)
    rep = verify_convergence(lambda h: KernelSpec(kind, cfg.band, h), h_list, controls, xs, cfg.eps_list)
    write_csv(out / "verify_kernel.csv", rep.columns, rep.rows)
    for flag in rep.flags:
        log.warning(flag)
    print(f"slope_a={rep.slope_a!r} slope_b={rep.slope_b!r}")
    return 0


def _build_control(spec: dict, cfg: RunConfig, kernel: KernelSpec, threads, index: int) -> FeedbackControl:
    dim = kernel.control_dim
    lattice = cfg.control_grid()
    rule = spec["rule"]
    if rule == "constant":
        lam = spec.get("lambda")
        lam = [1.0] * dim if lam is None else (lam if isinstance(lam, list) else [lam])
        return FeedbackControl.constant(lam)
    if rule == "random":
        return FeedbackControl.random_uniform(lattice.points(), name=f"random[{index}]")
    if rule == "random_lookup":
        seed = int(spec.get("seed", cfg.seed + index))
        return FeedbackControl.random_lookup(cfg.grid, lattice.points(), seed, name=f"random_lookup[{seed}]")
    res = _dp(cfg, kernel.h, threads, record=True)
    return extract_greedy_control(res)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    h = _require_h(cfg)
    kernel = KernelSpec(cfg.kernel, cfg.band, h)
    controls = [_build_control(c, cfg, kernel, args.threads, i) for i, c in enumerate(cfg.controls)]
    steps = cfg.steps or n_steps(cfg.payoff.T, h)
    path = simulate(kernel, controls[0], cfg.x0, steps, cfg.seed)
    write_csv(out / "path.csv", ("t", "driver", "state"),
              ((t, y[0], y[1]) for t, y in zip(path.times.tolist(), path.Y.tolist())))
    rows = []
    for c in controls:
        est = monte_carlo_value(kernel, c, cfg.payoff, cfg.x0, cfg.n_paths, cfg.seed, args.threads)
        rows.append((c.name, est.estimate, est.std_error, est.n_paths))
        print(f"{c.name}: {est.estimate!r} +/- {est.std_error!r}")
    write_csv(out / "mc_summary.csv", ("control", "estimate", "std_error", "n_paths"), rows)
    return 0


def cmd_reproduce_fig1(args) -> int:
    out = _out_dir(args, None)
    res = presets.reproduce_fig1(threads=args.threads)
    x = res.grid.nodes.tolist()
    for N, curve in res.curves.items():
        write_csv(out / f"curve_N{N}.csv", ("x", "value"), zip(x, curve.tolist()))
    write_csv(out / "gaps.csv", ("N_a", "N_b", "sup_gap"), res.gaps())
    series = [(f"N = {N}", res.grid.nodes, c) for N, c in res.curves.items()]
    (out / "fig1.svg").write_text(line_plot(series, title="V_N = S_{1/N}^N(l)", xlabel="x", ylabel="V_N(x)"))
    for a, b, gap in res.gaps():
        print(f"gap(V_{a}, V_{b}) = {gap!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-mca",
                                     description="Robust superhedging prices by Markov chain approximation")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="run configuration (.json or .toml)")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    common.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("price", cmd_price), ("sweep", cmd_sweep), ("verify-kernel", cmd_verify_kernel),
                     ("simulate", cmd_simulate), ("reproduce-fig1", cmd_reproduce_fig1)):
        p = sub.add_parser(name, parents=[common])
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except RobustMCAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
