import copy
import csv
import json
import xml.etree.ElementTree as ET

import pytest

from robust_mca import presets
from robust_mca.cli import main
from robust_mca.config import RunConfig, load_config
from robust_mca.errors import ConfigError

FIG1_BAND = {
    "a_lower": {"family": "clamp", "lo": 1.0, "hi": 30.0},
    "a_upper": {"family": "power_clamp", "lo": 1.0, "hi": 30.0, "p": 2.0},
    "bound_C": 900.0,
}
FIG1_PAYOFF = {"l": {"family": "cutoff_call", "K": 0.5, "M": 20.0}, "g": {"family": "zero"}, "T": 1.0}
FIG1_GRID = {"x_min": 0.0, "x_max": 5.0, "n_points": 5001}

FIG1_TOML = """
x0 = 1.0
N = 1200
boundary = "extrapolate"

[grid]
x_min = 0.0
x_max = 5.0
n_points = 5001

[band]
bound_C = 900.0
a_lower = { family = "clamp", lo = 1.0, hi = 30.0 }
a_upper = { family = "power_clamp", lo = 1.0, hi = 30.0, p = 2.0 }

[payoff]
T = 1.0
l = { family = "cutoff_call", K = 0.5, M = 20.0 }
"""


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def base_config(**extra):
    cfg = {"band": copy.deepcopy(FIG1_BAND), "payoff": copy.deepcopy(FIG1_PAYOFF),
           "grid": {"x_min": 0.0, "x_max": 5.0, "n_points": 501}, "x0": 1.0, "h": 0.05}
    cfg.update(extra)
    return cfg


def test_price_constant_payoff_prints_seven(tmp_path, capsys):
    cfg = base_config(payoff={"l": {"family": "constant", "c": 7.0}, "T": 1.0})
    code = main(["price", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path / "o")])
    assert code == 0
    assert capsys.readouterr().out.strip() == "7.0"
    rows = read_rows(tmp_path / "o" / "price.csv")
    assert rows[0] == ["h", "N", "x0", "price"] and float(rows[1][3]) == 7.0


def test_missing_a_upper_exits_two(tmp_path, capsys):
    cfg = base_config()
    del cfg["band"]["a_upper"]
    code = main(["price", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "band.a_upper" in capsys.readouterr().err


@pytest.mark.parametrize("mutate, field", [
    (lambda c: c.update(kernel="trinomial"), "kernel"),
    (lambda c: c["grid"].update(n_points=1), "grid.n_points"),
    (lambda c: c.update(x0=9.0), "x0"),
    (lambda c: c.update(colour="red"), "colour"),
    (lambda c: c["band"]["a_lower"].update(family="spline"), "band.a_lower"),
    (lambda c: c.update(boundary="wrap"), "boundary"),
])
def test_config_errors_name_the_field(tmp_path, capsys, mutate, field):
    cfg = base_config()
    mutate(cfg)
    assert main(["price", "--config", write_json(tmp_path / "c.json", cfg)]) == 2
    assert field in capsys.readouterr().err


def test_fig1_toml_price_curve_has_5001_rows(tmp_path):
    path = tmp_path / "fig1.toml"
    path.write_text(FIG1_TOML)
    assert main(["price", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "value_curve.csv")
    assert rows[0] == ["x", "value"]
    assert len(rows) - 1 == 5001
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == 5.0


def test_toml_and_json_load_the_same_config(tmp_path):
    toml_path = tmp_path / "fig1.toml"
    toml_path.write_text(FIG1_TOML)
    data = {"x0": 1.0, "N": 1200, "boundary": "extrapolate", "grid": FIG1_GRID, "band": FIG1_BAND,
            "payoff": {"T": 1.0, "l": FIG1_PAYOFF["l"]}}
    a = load_config(toml_path)
    b = load_config(write_json(tmp_path / "fig1.json", data))
    assert a == b
    assert a.h == pytest.approx(1 / 1200)


def test_config_round_trip(tmp_path):
    cfg = base_config(kernel="robust_binomial", h_list=[0.1, 0.05, 0.025], eps_list=[0.5, 0.25], seed=42,
                      controls=[{"rule": "constant", "lambda": [1, 0, 1, 0]}, {"rule": "random"}])
    loaded = RunConfig.from_dict(cfg)
    again = RunConfig.from_dict(json.loads(json.dumps(loaded.to_dict())))
    assert again == loaded


def test_unreadable_and_unknown_format(tmp_path, capsys):
    assert main(["price", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "c.yaml"
    bad.write_text("x0: 1")
    assert main(["price", "--config", str(bad)]) == 2
    broken = tmp_path / "c.toml"
    broken.write_text("x0 = = 1")
    assert main(["price", "--config", str(broken)]) == 2


def test_contract_violation_exit_code(tmp_path):
    cfg = base_config(kernel="martingale_binomial", h=0.5,
                      band={"a_lower": {"family": "constant", "c": 1.0}, "a_upper": {"family": "constant", "c": 1.0},
                            "b_lower": {"family": "constant", "c": -5.0}, "b_upper": {"family": "constant", "c": 5.0},
                            "bound_C": 5.0})
    assert main(["price", "--config", write_json(tmp_path / "c.json", cfg)]) == 4


def test_numeric_error_exit_code(tmp_path):
    cfg = base_config(payoff={"l": {"family": "affine", "alpha": 1e308, "beta": 1e308}, "T": 1.0})
    assert main(["price", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path / "o")]) == 3


def test_simulate_is_byte_identical(tmp_path):
    cfg = base_config(kernel="martingale_binomial", h=0.01, n_paths=3000,
                      band={"a_lower": {"family": "constant", "c": 1.0}, "a_upper": {"family": "constant", "c": 4.0},
                            "bound_C": 4.0},
                      grid={"x_min": -10.0, "x_max": 10.0, "n_points": 401}, x0=0.0,
                      controls=[{"rule": "constant", "lambda": [0, 0, 1, 1]}, {"rule": "random"},
                                {"rule": "random_lookup", "seed": 3}, {"rule": "greedy"}])
    path = write_json(tmp_path / "c.json", cfg)
    outputs = []
    for run, threads in (("a", "1"), ("b", "3")):
        assert main(["simulate", "--config", path, "--out", str(tmp_path / run), "--threads", threads]) == 0
        outputs.append({name: (tmp_path / run / name).read_bytes() for name in ("path.csv", "mc_summary.csv")})
    assert outputs[0] == outputs[1]
    rows = read_rows(tmp_path / "a" / "path.csv")
    assert rows[0] == ["t", "driver", "state"] and len(rows) == 102
    summary = read_rows(tmp_path / "a" / "mc_summary.csv")
    assert summary[0] == ["control", "estimate", "std_error", "n_paths"] and len(summary) == 5
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "c"), "--seed", "5"]) == 0
    assert (tmp_path / "c" / "path.csv").read_bytes() != outputs[0]["path.csv"]


def test_verify_kernel_crr_columns(tmp_path, capsys):
    cfg = base_config(kernel="robust_crr",
                      band={"a_lower": {"family": "constant", "c": 1.0}, "a_upper": {"family": "constant", "c": 2.0},
                            "b_lower": {"family": "affine", "alpha": -0.5, "beta": 0.1},
                            "b_upper": {"family": "affine", "alpha": 0.2, "beta": 0.1}, "bound_C": 2.0})
    assert main(["verify-kernel", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "verify_kernel.csv")
    assert rows[0] == ["h", "sup_res_b", "sup_res_a", "eps", "delta_h_eps"]
    body = [[float(v) for v in r] for r in rows[1:]]
    assert len(body) == 8
    assert all(r[1] <= 1e-12 for r in body)
    ratios = [r[2] / r[0] for r in body]
    assert max(ratios) == pytest.approx(min(ratios), rel=1e-9)
    assert "slope_a=" in capsys.readouterr().out


def test_sweep_writes_table(tmp_path):
    cfg = base_config(h_list=[0.1, 0.05, 0.025], lambda_points=9)
    assert main(["sweep", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert rows[0] == ["h", "N", "price", "diff", "order"] and len(rows) == 4


def test_fig1_sweep_differences_shrink(tmp_path):
    cfg = base_config(grid=FIG1_GRID, boundary=presets.FIG1_BOUNDARY, N_list=list(presets.FIG1_N))
    del cfg["h"]
    assert main(["sweep", "--config", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 0
    prices = [float(r[2]) for r in read_rows(tmp_path / "sweep.csv")[1:]]
    diffs = [abs(b - a) for a, b in zip(prices, prices[1:])]
    assert all(b < a for a, b in zip(diffs, diffs[1:])), f"successive differences {diffs}"


def test_reproduce_fig1_outputs(tmp_path):
    assert main(["reproduce-fig1", "--out", str(tmp_path)]) == 0
    curves = sorted(tmp_path.glob("curve_N*.csv"))
    assert len(curves) == 6
    for c in curves:
        vals = [float(r[1]) for r in read_rows(c)[1:]]
        assert len(vals) == 5001
        assert all(0.0 <= v <= 20.0 for v in vals)
    gaps = read_rows(tmp_path / "gaps.csv")[1:]
    assert [(int(a), int(b)) for a, b, _ in gaps] == list(zip(presets.FIG1_N, presets.FIG1_N[1:]))
    assert float(gaps[-1][2]) < float(gaps[0][2])
    root = ET.parse(tmp_path / "fig1.svg").getroot()
    assert root.tag.endswith("svg") and root.get("version") == "1.1"
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 6


def test_bad_flags(capsys):
    assert main(["price", "--threads", "0"]) == 2
    assert main(["price", "--seed", "-1"]) == 2
    assert main(["price"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_control_lattice_defaults_and_cap():
    assert len(RunConfig.from_dict(base_config()).control_grid()) == 33
    assert len(RunConfig.from_dict(base_config(kernel="martingale_binomial")).control_grid()) == 5 ** 4
    with pytest.raises(ConfigError, match="lambda_points"):
        RunConfig.from_dict(base_config(kernel="robust_binomial", lambda_points=33))
