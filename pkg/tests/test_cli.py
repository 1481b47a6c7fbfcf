import hashlib
import json

import numpy as np
import pytest

from densym.cli import COMMANDS, build_parser, main

HESTON = """[model]
preset = "heston"
a = 0.1
b = 0.5
sigma = 0.3
lambda = -0.5
horizon_T = 1.0
"""
RHO = """[rho]
y_center = 0.2
y_half = 0.1
z_center = 0.0
z_half = 0.3
"""


@pytest.fixture
def files(tmp_path):
    (tmp_path / "heston.toml").write_text(HESTON)
    (tmp_path / "rho.toml").write_text(RHO)
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_transform_row(files, capsys):
    code, out, _ = run(capsys, "transform", "--model", files / "heston.toml", "--r-list", "1.0")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == "r,beta2_tilde"
    assert float(row.split(",")[1]) == pytest.approx(1.8333333333333333, abs=1e-12)
    code, out, _ = run(capsys, "transform", "--model", files / "heston.toml", "--r-list", "1.0",
                       "--convention", "literal")
    assert float(out.strip().splitlines()[1].split(",")[1]) == pytest.approx(0.8333333333333333, abs=1e-12)


def test_missing_model_is_usage_error(capsys):
    code, _, err = run(capsys, "transform", "--r-list", "1")
    assert code == 64 and "usage:" in err and "--model" in err
    code, _, err = run(capsys, "frobnicate")
    assert code == 64
    code, _, err = run(capsys, "mu", "--model", "x.toml", "--r-list", "a,b")
    assert code == 64 and "--r-list" in err


def test_help_lists_every_flag_with_default(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == set(COMMANDS)
    for name, p in sub.choices.items():
        for action in p._actions:
            if action.dest == "help":
                continue
            assert action.help and ("default" in action.help or "required" in action.help), (name, action.dest)
        assert main([name, "--help"]) == 0
        assert "--model" in capsys.readouterr().out


def test_mu_csv(files, capsys):
    code, out, _ = run(capsys, "mu", "--model", files / "heston.toml", "--r-list", "0.01,1,2", "--base", "1.0")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "r,log_mu,mu"
    r, log_mu, mu = map(float, lines[3].split(","))
    assert mu == pytest.approx(7.7485e-4, rel=1e-4) and np.exp(log_mu) == pytest.approx(mu, rel=1e-15)
    # 17 significant digits round-trip
    assert float(lines[1].split(",")[1]) == float(repr(float(lines[1].split(",")[1])))


def test_validation_and_numerical_exit_codes(files, capsys):
    bad = files / "bad.toml"
    bad.write_text("[model]\npreset = 'heston'\na = 0.1\nb = 0.5\nsigma = 0.3\nlambda = 1.5\n")
    assert run(capsys, "mu", "--model", bad, "--r-list", "1")[0] == 1
    bad.write_text("[model]\npreset = 'heston'\na = 0.1\n")
    code, _, err = run(capsys, "mu", "--model", bad, "--r-list", "1")
    assert code == 1 and "missing keys" in err
    bad.write_text("not toml [")
    assert run(capsys, "mu", "--model", bad, "--r-list", "1")[0] == 1
    assert run(capsys, "mu", "--model", files / "nope.toml", "--r-list", "1")[0] == 1
    assert run(capsys, "mu", "--model", files / "heston.toml", "--r-list", "-1")[0] == 1
    assert run(capsys, "estimate-q", "--model", files / "heston.toml", "--rho", files / "rho.toml",
               "--x", "0,0", "--paths", "10")[0] == 1
    blow = files / "blow.toml"
    blow.write_text("[model]\npreset = 'custom'\nbeta1 = '0.1 + exp(exp(r))'\nbeta2 = '0'\n"
                    "sigma1 = 'sqrt(r)'\nsigma2 = '1'\nlambda = 0.0\n")
    code, _, err = run(capsys, "simulate", "--model", blow, "--x0", "3,0", "--paths", "10", "--steps", "50")
    assert code == 2 and "NonFiniteState" in err


def test_simulate_determinism_and_dump(files, capsys, tmp_path):
    args = ["simulate", "--model", files / "heston.toml", "--x0", "0.2,-0.1", "--paths", "80000",
            "--steps", "20", "--seed", "42"]
    outs = []
    for streams in ("1", "8", "1"):
        code, out, _ = run(capsys, *args, "--streams", streams)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]
    dump = tmp_path / "terminal.csv"
    assert run(capsys, *args, "--dump-terminal", dump, "--transformed")[0] == 0
    data = np.loadtxt(dump, delimiter=",", skiprows=1)
    assert data.shape == (80000, 2) and np.all(data[:, 0] >= 0)
    manifest = json.loads((tmp_path / "terminal.csv.manifest.json").read_text())
    assert manifest["outputs"][0]["sha256"] == hashlib.sha256(dump.read_bytes()).hexdigest()
    assert manifest["seed"] == 42 and "numpy" in manifest["versions"]


def test_estimate_q_csv(files, capsys):
    code, out, _ = run(capsys, "estimate-q", "--model", files / "heston.toml", "--rho", files / "rho.toml",
                       "--x", "0.2,0.0", "--paths", "20000", "--steps", "50", "--seed", "3")
    header, row = out.strip().splitlines()
    assert code == 0 and header == "value,std_error,n_paths,seed"
    value, se, n, seed = row.split(",")
    assert float(value) > 0 and float(se) > 0 and n == "20000" and seed == "3"


def test_solve_pde_outputs(files, capsys, tmp_path):
    u, p, pgm = tmp_path / "u.csv", tmp_path / "p.csv", tmp_path / "p.pgm"
    code, out, err = run(capsys, "solve-pde", "--model", files / "heston.toml", "--transformed", "--rho",
                         files / "rho.toml", "--grid", "120x90", "--tsteps", "200", "--ymax", "2", "--z", "-3:3",
                         "--out", u, "--density", p, "--pgm", pgm)
    assert code == 0, err
    rows = p.read_text().splitlines()
    assert rows[0] == "y,z,value" and len(rows) == 1 + 120 * 90
    first, second = rows[1].split(","), rows[2].split(",")
    assert first[0] == second[0] == "0" and float(first[1]) == -3.0 and float(second[1]) > -3.0
    raw = pgm.read_bytes()
    assert raw.startswith(b"P5\n90 120\n255\n") and len(raw) == len(b"P5\n90 120\n255\n") + 120 * 90
    vals = np.loadtxt(p, delimiter=",", skiprows=1)[:, 2].reshape(120, 90)
    img = np.frombuffer(raw[-120 * 90:], dtype=np.uint8).reshape(120, 90)
    assert img.max() == 255 and img[::-1][np.unravel_index(vals.argmax(), vals.shape)] == 255
    manifest = json.loads((tmp_path / "u.csv.manifest.json").read_text())
    assert [o["path"] for o in manifest["outputs"]] == [str(u), str(p), str(pgm)]
    assert "solve" in manifest["wall_times"] and "max_residual_constant_test" in out


def test_solve_pde_option_checks(files, capsys, tmp_path):
    base = ["solve-pde", "--model", files / "heston.toml", "--out", tmp_path / "u.csv", "--grid", "40x40"]
    assert run(capsys, *base, "--terminal", "one")[0] == 0
    assert run(capsys, *base, "--density", tmp_path / "p.csv", "--rho", files / "rho.toml")[0] == 1
    assert run(capsys, *base)[0] == 1  # rho-over-mu needs --rho
    assert run(capsys, *base, "--terminal", "one", "--grid", "40by40")[0] == 64


def test_run_table_defaults_and_flag_precedence(files, capsys):
    cfg = files / "run.toml"
    cfg.write_text(HESTON + "\n[run]\npaths = 1000\nsteps = 5\nseed = 9\n")
    code, out, _ = run(capsys, "simulate", "--model", cfg, "--x0", "0.2,0")
    assert out.strip().splitlines()[1].split(",")[3:] == ["1000", "9"]
    code, out, _ = run(capsys, "simulate", "--model", cfg, "--x0", "0.2,0", "--seed", "4")
    assert out.strip().splitlines()[1].split(",")[3:] == ["1000", "4"]


def test_verify_report_is_byte_identical(files, capsys, tmp_path):
    reports = []
    for k in range(2):
        path = tmp_path / f"r{k}.csv"
        code, _, err = run(capsys, "verify", "--model", files / "heston.toml", "--suite", "adjoint", "--seed", "42",
                           "--report", path)
        assert code == 0, err
        reports.append(path.read_bytes())
    assert reports[0] == reports[1]
    lines = reports[0].decode().splitlines()
    assert lines[0] == "check,point,lhs,rhs,residual,tolerance,pass" and len(lines) == 10
