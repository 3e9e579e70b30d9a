import csv
from pathlib import Path

import numpy as np
import pytest

from ghft import cli
from ghft import greenops as go
from ghft.scalar import ScalarModel
from ghft.sources import bump
from ghft.spacetime import read_pgm

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[spacetime]
family = FRW
n_t = 64
n_x = 96
delta_x = 1/16
t0 = -1
scale_factor = 1 + 0.1*t**2
lapse = (1 + 0.1*t**2)**2

[model]
scalar_mass_sq = 1.0
dirac_mass = 1.0
proca_mass_sq = {proca}

[numerics]
seed = 3
sources = 4
pairs = 4
observables = 4
algebra_samples = 10

[suites]
run = {suites}

[output]
dir = out
"""


def _write(tmp_path, suites="scalar", proca="1.0", name="s.ini", **extra):
    text = SMALL.format(suites=suites, proca=proca)
    for section, body in extra.items():
        text += f"\n[{section}]\n{body}\n"
    p = tmp_path / name
    p.write_text(text)
    return p


def _report(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    monkeypatch.delenv("GHFT_OUT", raising=False)


def test_default_minkowski_scenario(tmp_path, monkeypatch):
    monkeypatch.setenv("GHFT_OUT", str(tmp_path / "mink"))
    assert cli.main(["check", str(CONFIGS / "minkowski_scalar.ini")]) == 0
    rows = _report(tmp_path / "mink" / "report.csv")
    assert rows[0] == cli.REPORT_HEADER
    causal = [r for r in rows[1:] if r[1] == "causality"]
    assert causal and float(causal[0][2]) <= 1e-12 and causal[0][4] == "true"


def test_all_suites_pass_and_write_artifacts(tmp_path):
    cfg = _write(tmp_path, "greenops, scalar, dirac, proca, algebra")
    assert cli.main(["check", str(cfg)]) == 0
    out = tmp_path / "out"
    rows = _report(out / "report.csv")
    assert {r[0] for r in rows[1:]} == {"greenops", "scalar", "dirac", "proca", "algebra"}
    assert all(r[4] == "true" for r in rows[1:])
    pgms = list(out.glob("*.pgm"))
    assert pgms and read_pgm(pgms[0]).dtype == bool
    assert list(out.glob("*.csv")) != [out / "report.csv"]


def test_empty_suite_list(tmp_path):
    cfg = _write(tmp_path, "")
    assert cli.main(["check", str(cfg)]) == 0
    assert _report(tmp_path / "out" / "report.csv") == [cli.REPORT_HEADER]


def test_zero_proca_mass_is_a_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, "proca", proca="0")
    assert cli.main(["check", str(cfg)]) == 2
    assert "proca_mass_sq" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [
    ("[suites]\nrun = {suites}", "[suites]\nrun = maxwell"),
    ("n_t = 64", "n_t = sixty"),
    ("seed = 3", "seed = 3\ngreen_tol = 1"),
    ("seed = 3", "seed = 3\nmystery = 1"),
    ("family = FRW", "family = Kerr"),
    ("n_t = 64", "n_t = 4"),
])
def test_invalid_configs_exit_2(tmp_path, patch):
    text = SMALL.replace(*patch).format(suites="scalar", proca="1.0")
    p = tmp_path / "bad.ini"
    p.write_text(text)
    assert cli.main(["check", str(p)]) == 2


def test_missing_config_is_an_io_error(tmp_path):
    assert cli.main(["check", str(tmp_path / "nope.ini")]) == 3


def test_unwritable_output_is_an_io_error(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    monkeypatch.setenv("GHFT_OUT", str(blocker / "sub"))
    assert cli.main(["check", str(_write(tmp_path, ""))]) == 3


def test_failed_check_exits_1(tmp_path):
    # an impossible symbol tolerance makes the greenops suite fail
    cfg = _write(tmp_path, "greenops").read_text().replace("seed = 3", "seed = 3\nsymbol_tol = 1e-12")
    p = tmp_path / "fail.ini"
    p.write_text(cfg)
    assert cli.main(["check", str(p)]) == 1
    rows = _report(tmp_path / "out" / "report.csv")
    assert any(r[4] == "false" for r in rows[1:])


def test_runs_are_byte_identical(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "scalar, algebra")
    outputs = []
    for k in range(2):
        monkeypatch.setenv("GHFT_OUT", str(tmp_path / f"run{k}"))
        assert cli.main(["check", str(cfg)]) == 0
        outputs.append({p.name: p.read_bytes() for p in (tmp_path / f"run{k}").iterdir()})
    assert outputs[0] == outputs[1]


def test_parallel_jobs_match_sequential(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "scalar, proca")
    reports = []
    for k, jobs in enumerate(("1", "2")):
        monkeypatch.setenv("GHFT_OUT", str(tmp_path / f"j{k}"))
        assert cli.main(["check", str(cfg), "--jobs", jobs]) == 0
        reports.append((tmp_path / f"j{k}" / "report.csv").read_bytes())
    assert reports[0] == reports[1]


def test_suite_results_do_not_depend_on_selection(tmp_path, monkeypatch):
    rows = []
    for k, suites in enumerate(("scalar", "dirac, scalar")):
        monkeypatch.setenv("GHFT_OUT", str(tmp_path / f"sel{k}"))
        assert cli.main(["check", str(_write(tmp_path, suites))]) == 0
        rows.append([r for r in _report(tmp_path / f"sel{k}" / "report.csv") if r[0] == "scalar"])
    assert rows[0] == rows[1]


def test_output_dir_is_relative_to_config(tmp_path):
    sub = tmp_path / "cfgs"
    sub.mkdir()
    assert cli.main(["check", str(_write(sub, ""))]) == 0
    assert (sub / "out" / "report.csv").exists()


def test_csv_numbers_have_17_digits(tmp_path):
    cli.write_csv(tmp_path / "x.csv", [["a", 0.1, True]])
    assert (tmp_path / "x.csv").read_text().strip() == "a,0.10000000000000001,true"


def test_green_subcommand(tmp_path):
    cfg = _write(tmp_path)
    sc = cli.load_config(cfg)
    lat = sc.lattice()
    model = ScalarModel(lat, 1.0)
    src = tmp_path / "src.csv"
    go.write_section_csv(src, model.section(bump(lat, 0.5, 3.0, 0.3, 0.3)))
    for which in ("retarded", "advanced", "causal"):
        assert cli.main(["green", str(cfg), "--source", str(src), "--which", which]) == 0
        assert (tmp_path / "out" / f"green_scalar_{which}.csv").exists()
        assert (tmp_path / "out" / f"green_scalar_{which}.pgm").exists()
    u = go.read_section_csv(tmp_path / "out" / "green_scalar_retarded.csv", lat, 1, "real")
    ref = go.green_apply(model.operator, model.section(bump(lat, 0.5, 3.0, 0.3, 0.3)))
    assert np.allclose(u.values, ref.values, rtol=1e-15, atol=0)


def test_green_rejects_bad_source(tmp_path):
    cfg = _write(tmp_path)
    src = tmp_path / "bad.csv"
    src.write_text("not,a,section\n1,2,3\n")
    assert cli.main(["green", str(cfg), "--source", str(src)]) == 2


def test_algebra_subcommand(tmp_path, capsys):
    cfg = _write(tmp_path, algebra="statistics = bose\ngenerators = 3")
    expr = tmp_path / "e.txt"
    expr.write_text("# comment\nPhi(0)*Phi(1) - Phi(1)*Phi(0)\nPhi(2) - Phi(2)\n")
    assert cli.main(["algebra", str(cfg), "--expr", str(expr)]) == 0
    text = (tmp_path / "out" / "normal_forms.txt").read_text()
    assert "Phi(2) - Phi(2)\n  = 0" in text
    assert capsys.readouterr().out.startswith("Phi(0)*Phi(1)")
    gram = _report(tmp_path / "out" / "registry_gram.csv")
    assert gram[0] == ["i", "j", "value"] and len(gram) == 10


def test_algebra_fermi_and_parse_error(tmp_path):
    cfg = _write(tmp_path, algebra="statistics = fermi\ngenerators = 2")
    expr = tmp_path / "e.txt"
    expr.write_text("Psi(0)*Phi(0) + Phi(0)*Psi(0)\n")
    assert cli.main(["algebra", str(cfg), "--expr", str(expr)]) == 0
    expr.write_text("Phi(0) *\n")
    assert cli.main(["algebra", str(cfg), "--expr", str(expr)]) == 2


@pytest.mark.slow
def test_convergence_subcommand(tmp_path):
    text = """
[spacetime]
family = FRW
n_t = 33
n_x = 64
delta_x = 4/64
delta_t = 2/32
t0 = -1
scale_factor = 1 + 0.1*t**2

[suites]
run = scalar, proca

[output]
dir = conv
"""
    p = tmp_path / "c.ini"
    p.write_text(text)
    code = cli.main(["convergence", str(p), "--levels", "3"])
    rows = _report(tmp_path / "conv" / "convergence.csv")
    assert rows[0] == ["identity", "level", "n_t", "n_x", "error", "order"]
    orders = {r[0]: r[5] for r in rows[1:] if r[1] == "2"}
    assert orders["proca_dd"] == "exact"
    assert abs(float(orders["scalar_manufactured"]) - 2) <= 0.2
    assert float(orders["scalar_sigma_tau"]) >= 1.8
    assert float(orders["proca_sigma_tau"]) >= 1.8
    assert code == 0
    assert cli.main(["convergence", str(p), "--levels", "1"]) == 2
