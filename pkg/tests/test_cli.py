import csv
import io
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tbdos import cli
from tbdos import laplacian_dos as lap
from tbdos.error_bounds import laplacian_bound

ANCHORS = Path(__file__).resolve().parents[1] / "anchors"


def run_cli(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    text = out.read_text() if out.exists() else None
    return code, text


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- schemas and grids -------------------------------------------------------

@pytest.mark.parametrize("sub, extra", [
    ("laplacian-dos", ["--mu-min", "0", "--mu-max", "0"]),
    ("mathieu-dos", ["--mu-min", "0", "--mu-max", "0", "--eps", "1/20"]),
    ("converge", ["--synthetic"]),
    ("probes", []),
])
def test_headers_exact(tmp_path, sub, extra):
    code, text = run_cli(tmp_path, sub, *extra)
    assert code == 0
    assert text.splitlines()[0] == ",".join(cli.SCHEMAS[sub])


def test_laplacian_grid_and_bounds(tmp_path):
    code, text = run_cli(tmp_path, "laplacian-dos", "--mu-min", "0", "--mu-max", "20",
                         "--mu-step", "1", "--eps", "1/40")
    assert code == 0
    r = rows(text)
    assert [float(x["mu"]) for x in r] == [float(m) for m in range(21)]
    for x in r:
        b = laplacian_bound(1 / 40, float(x["mu"]))
        if b.valid:
            assert float(x["abs_err"]) < b.dos_bound


def test_single_point_grid(tmp_path):
    for sub in ("laplacian-dos", "mathieu-dos"):
        code, text = run_cli(tmp_path, sub, "--mu-min", "3", "--mu-max", "3", "--eps", "1/20")
        assert code == 0 and len(rows(text)) == 1


def test_threads_do_not_change_bytes(tmp_path):
    args = ["laplacian-dos", "--mu-min", "-2", "--mu-max", "6", "--mu-step", "0.5"]
    _, a = run_cli(tmp_path, *args, "--threads", "1", name="a.csv")
    _, b = run_cli(tmp_path, *args, "--threads", "8", name="b.csv")
    assert a == b


def test_mathieu_lambda0_matches_laplacian(tmp_path):
    grid = ["--mu-min", "0", "--mu-max", "5", "--mu-step", "5", "--eps", "1/40"]
    _, m = run_cli(tmp_path, "mathieu-dos", "--lambda", "0", *grid, name="m.csv")
    _, l = run_cli(tmp_path, "laplacian-dos", *grid, name="l.csv")
    for a, b in zip(rows(m), rows(l)):
        assert abs(float(a["dos_d_eps"]) - float(b["dos_d_eps"])) <= 1e-6
        assert abs(float(a["dos_c"]) - float(b["dos_c"])) <= 1e-6


@pytest.fixture(scope="module")
def mathieu_curve(tmp_path_factory):
    """Default Mathieu curve (lambda=8, eps=1/100, mu in [0, 60] step 0.5)."""
    cfg_args = ["mathieu-dos"]
    ns = cli.build_parser().parse_args(cfg_args)
    anchor = ANCHORS / f"mathieu-dos-{cli.config_from_args(ns).identity()}.csv"
    assert anchor.exists(), "curve anchor missing from the repository"
    out = tmp_path_factory.mktemp("fig2") / "m.csv"
    code = cli.main([*cfg_args, "--anchors-dir", str(ANCHORS), "--out", str(out)])
    return code, out.read_text()


def test_mathieu_curve_matches_anchor(mathieu_curve):
    assert mathieu_curve[0] == 0


def test_mathieu_curve_band_structure(mathieu_curve):
    c = [float(x["dos_c"]) for x in rows(mathieu_curve[1])]
    minima = [i for i in range(1, len(c) - 1) if c[i] < c[i - 1] and c[i] < c[i + 1]]
    assert len(minima) >= 2


def test_laplacian_curve_matches_anchor(tmp_path):
    ns = cli.build_parser().parse_args(["laplacian-dos"])
    assert (ANCHORS / f"laplacian-dos-{cli.config_from_args(ns).identity()}.csv").exists()
    code, _ = run_cli(tmp_path, "laplacian-dos", "--anchors-dir", str(ANCHORS))
    assert code == 0


# -- converge ----------------------------------------------------------------

def test_converge_laplacian_rate(tmp_path):
    code, text = run_cli(tmp_path, "converge", "--model", "laplacian", "--mu-min", "5",
                         "--mu-max", "5", "--eps-list", "1/20,1/40,1/80,1/160")
    assert code == 0
    r = rows(text)
    assert [x["fitted_exponent"] for x in r[:-1]] == ["", "", ""]
    assert float(r[-1]["fitted_exponent"]) >= 1 / 11
    assert all(x["bound_valid"] == "true" for x in r)


def test_converge_mathieu_decreasing(tmp_path):
    code, text = run_cli(tmp_path, "converge", "--model", "mathieu", "--lambda", "8",
                         "--mu-min", "0", "--mu-max", "0", "--eps-list", "1/50,1/100,1/200")
    assert code == 0
    errs = [float(x["abs_err"]) for x in rows(text)]
    assert errs[0] > errs[1] > errs[2]


def test_converge_synthetic_exponent_two(tmp_path):
    code, text = run_cli(tmp_path, "converge", "--synthetic", "--eps-list", "1/10,1/20,1/40")
    assert code == 0
    assert float(rows(text)[-1]["fitted_exponent"]) == pytest.approx(2.0, abs=1e-12)


def test_converge_needs_three_eps(tmp_path):
    code, text = run_cli(tmp_path, "converge", "--eps-list", "1/20,1/40")
    assert code == cli.EXIT_USAGE and text is None


# -- probes and self-test ----------------------------------------------------

def test_probe_suite_passes(tmp_path):
    code, text = run_cli(tmp_path, "probes")
    assert code == 0
    r = rows(text)
    assert all(x["pass"] == "true" for x in r)
    diag = [x for x in r if x["probe"] == "combes_thomas_diagonal"]
    assert len(diag) == 1 and "insufficient-data" in diag[0]["param_json"]
    for x in r:
        if x["probe"] == "gershgorin":
            assert float(x["value"]) <= 0


def test_self_test(tmp_path):
    code, text = run_cli(tmp_path, "self-test")
    assert code == 0
    assert all(x["pass"] == "true" for x in rows(text))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tbdos", "self-test"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0
    assert res.stdout.startswith("probe,param_json,value,threshold,pass")


# -- errors and exit codes ---------------------------------------------------

@pytest.mark.parametrize("args", [
    ["laplacian-dos", "--mu-min", "5", "--mu-max", "1"],
    ["laplacian-dos", "--mu-step", "0"],
    ["laplacian-dos", "--eps", "abc"],
    ["mathieu-dos", "--eps", "1/3"],
    ["converge", "--q", "1.6"],
    ["frobnicate"],
    ["laplacian-dos", "--k-panels", "4"],
])
def test_usage_errors_leave_no_file(tmp_path, args):
    code, text = run_cli(tmp_path, *args)
    assert code == cli.EXIT_USAGE
    assert text is None
    assert not any(p.name.startswith(".tbdos-") for p in tmp_path.iterdir())


def test_io_error(tmp_path):
    code = cli.main(["laplacian-dos", "--mu-min", "0", "--mu-max", "0",
                     "--out", str(tmp_path / "missing" / "x.csv")])
    assert code == cli.EXIT_IO


def test_strict_escalates_non_convergence(tmp_path, monkeypatch):
    monkeypatch.setattr(lap, "MAX_PANELS", 64)
    args = ["laplacian-dos", "--mu-min", "0", "--mu-max", "0", "--k-panels", "16"]
    code, text = run_cli(tmp_path, *args)
    assert code == 0 and text
    code, _ = run_cli(tmp_path, *args, "--strict", name="s.csv")
    assert code == cli.EXIT_NUMERIC


def test_anchor_bless_then_mismatch(tmp_path):
    anchors = tmp_path / "anchors"
    args = ["laplacian-dos", "--mu-min", "0", "--mu-max", "2", "--anchors-dir", str(anchors)]
    code, _ = run_cli(tmp_path, *args)
    assert code == 0
    (path,) = anchors.iterdir()
    assert run_cli(tmp_path, *args)[0] == 0
    text = path.read_text().replace("0.35", "0.36", 1)
    path.write_text(text)
    assert run_cli(tmp_path, *args)[0] == cli.EXIT_NUMERIC


def test_compare_csv_tolerance():
    a = "x,y\n1,0.5\n"
    assert cli.compare_csv(a, "x,y\n1,0.5000000000001\n") == []
    assert cli.compare_csv(a, "x,y\n1,0.50001\n")
    assert cli.compare_csv(a, "x,y\n1,0.5\n2,3\n")
    assert cli.compare_csv("p\nnan\n", "p\nnan\n") == []


def test_identity_ignores_execution_settings():
    base = cli.RunConfig("converge", threads=1, out="a.csv")
    other = cli.RunConfig("converge", threads=8, out="b.csv", strict=True)
    assert base.identity() == other.identity()
    assert base.identity() != cli.RunConfig("converge", lam=4.0).identity()


# -- formatting --------------------------------------------------------------

@given(st.floats(allow_nan=False))
def test_numeric_round_trip(x):
    assert float(cli.fmt(x)) == x


def test_format_values():
    assert cli.fmt(True) == "true"
    assert cli.fmt(7) == "7"
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert math.isnan(float(cli.fmt(float("nan"))))


def test_parse_number_fractions():
    assert cli.parse_number("1/40") == 0.025
    assert cli.parse_list("1/20, 1/40,0.5") == [0.05, 0.025, 0.5]


def test_mu_grid_inclusive_endpoint():
    cfg = cli.RunConfig("laplacian-dos", mu_min=0.0, mu_max=60.0, mu_step=0.5)
    g = cli.mu_grid(cfg)
    assert len(g) == 121 and g[-1] == 60.0
