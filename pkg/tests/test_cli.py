"""Command-line interface: exit codes, output formats, config handling."""

import json
import shutil
import subprocess
import sys
from fractions import Fraction

import pytest

from probtrace.cli import (
    EXIT_ERROR,
    EXIT_INCONCLUSIVE,
    EXIT_SAT,
    EXIT_UNSAT,
    load_config,
    main,
    parse_domain,
    parse_fraction,
    render_fraction,
)

from helpers import DATA_DIR

PROG = str(DATA_DIR / "motivating.prob")
CERT = str(DATA_DIR / "motivating.cert")

SAT_PROGRAM = "@pre true\n@post X = 0\n@beta 1/2\nint X;\nX := 0;\n"
UNSAT_PROGRAM = "@pre true\n@post X = 0\n@beta 9/10\nint X;\nX := 1;\n"


# ---------------------------------------------------------------------------
# small pieces


def test_fraction_rendering():
    assert render_fraction(Fraction(0)) == "0"
    assert render_fraction(Fraction(3)) == "3"
    assert render_fraction(Fraction(3, 8)) == "3/8 (~0.375)"


def test_fraction_parsing():
    assert parse_fraction("3/10") == Fraction(3, 10)
    assert parse_fraction("0.25") == Fraction(1, 4)
    from probtrace.cli import CliError

    with pytest.raises(CliError):
        parse_fraction("a/b")
    with pytest.raises(CliError):
        parse_fraction("1/0")


def test_domain_parsing():
    dom = parse_domain(["C=0..3", "X=-2..2"])
    assert dom.range_of("C") == (0, 3)
    assert dom.range_of("X") == (-2, 2)
    assert dom.range_of("Y") == (-4, 4)
    assert parse_domain([]) is None
    from probtrace.cli import CliError

    with pytest.raises(CliError, match="expected VAR"):
        parse_domain(["C=0-3"])
    with pytest.raises(CliError, match="empty range"):
        parse_domain(["C=3..0"])


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("beta = 1/2  # threshold\nmax_iters = 7\n\n// comment\n")
    values = load_config(str(cfg))
    assert values == {"beta": "1/2", "max_iters": "7"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("wat = 1\n")
    from probtrace.cli import CliError

    with pytest.raises(CliError, match="unknown config key"):
        load_config(str(bad))


# ---------------------------------------------------------------------------
# verify


def test_verify_unsat_exit_and_report(capsys):
    code = main(["verify", PROG])
    out = capsys.readouterr().out
    assert code == EXIT_UNSAT
    assert "Unsat" in out
    assert "3/8" in out
    assert "error precondition" in out


def test_verify_sat_with_beta_override(capsys):
    code = main(["verify", PROG, "--beta", "1/2"])
    out = capsys.readouterr().out
    assert code == EXIT_SAT
    assert "Sat" in out and "1/2" in out


def test_verify_json_schema(capsys):
    code = main(["verify", PROG, "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == EXIT_UNSAT
    for key in (
        "verdict",
        "bound_num",
        "bound_den",
        "iterations",
        "traces",
        "error_pre",
    ):
        assert key in report, key
    assert report["verdict"] == "unsat"
    assert Fraction(report["bound_num"], report["bound_den"]) == Fraction(3, 8)
    assert len(report["traces"]) == 3
    assert "C" in report["error_pre"]
    assert report["beta"] == "3/10"
    assert report["solver"]["queries"] > 0


def test_verify_refutational_flag(capsys):
    code = main(["verify", PROG, "--refutational", "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == EXIT_UNSAT
    assert report["verdict"] == "unsat"
    assert Fraction(report["bound_num"], report["bound_den"]) > Fraction(3, 10)


def test_verify_iteration_cap_gives_inconclusive(tmp_path, capsys):
    # a cap of zero forbids any refinement work
    f = tmp_path / "p.prob"
    f.write_text(SAT_PROGRAM)
    code = main(["verify", str(f), "--max-iters", "0"])
    out = capsys.readouterr().out
    assert code == EXIT_INCONCLUSIVE
    assert "Inconclusive" in out


def test_verify_missing_file(capsys):
    code = main(["verify", "no/such/file.prob"])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "error:" in err


def test_verify_bad_beta(capsys):
    code = main(["verify", PROG, "--beta", "zero"])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "rational" in err


def test_verify_parse_error(tmp_path, capsys):
    f = tmp_path / "broken.prob"
    f.write_text("@pre true\n@post X = 0\nint X;\nX := 0;\n")  # no @beta
    code = main(["verify", str(f)])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "beta" in err


# ---------------------------------------------------------------------------
# check


def test_check_accepts_the_shipped_certificate(capsys):
    code = main(["check", PROG, CERT])
    out = capsys.readouterr().out
    assert code == EXIT_SAT
    assert "accepted" in out
    assert "1/2" in out


def test_check_rejects_tighter_threshold(capsys):
    code = main(["check", PROG, CERT, "--beta", "3/10"])
    out = capsys.readouterr().out
    assert code == EXIT_UNSAT
    assert "rejected" in out


def test_check_json(capsys):
    code = main(["check", PROG, CERT, "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == EXIT_SAT
    assert report["verdict"] == "certified"
    assert Fraction(report["bound_num"], report["bound_den"]) == Fraction(1, 2)
    assert report["components"] == 2


def test_check_malformed_certificate(tmp_path, capsys):
    bad = tmp_path / "bad.cert"
    bad.write_text("beta 1/2\nedge 0 1 skip\n")
    code = main(["check", PROG, str(bad)])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "error:" in err


# ---------------------------------------------------------------------------
# oracle


def test_oracle_default_domain(capsys):
    code = main(["oracle", PROG])
    out = capsys.readouterr().out
    assert code == EXIT_SAT
    assert "15/32" in out and "exact" in out
    assert "exceeds" in out  # 15/32 > 3/10


def test_oracle_bounded_domain_json(capsys):
    code = main(
        ["oracle", PROG, "--dom", "C=0..3", "--beta", "47/100", "--json"]
    )
    data = json.loads(capsys.readouterr().out)
    assert code == EXIT_SAT
    assert Fraction(data["lo_num"], data["lo_den"]) == Fraction(7, 16)
    assert data["exact"] is True
    assert data["decision"] == "within"


def test_oracle_bad_domain(capsys):
    code = main(["oracle", PROG, "--dom", "C=x..y"])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "--dom" in err


def test_oracle_resolves_branching_demonically(tmp_path, capsys):
    f = tmp_path / "nd.prob"
    f.write_text(
        "@pre true\n@post X = 0\n@beta 1/2\nint X;\n"
        "{ X := 0; } <*> { X := 1; };\n"
    )
    code = main(["oracle", str(f), "--json"])
    data = json.loads(capsys.readouterr().out)
    assert code == EXIT_SAT
    # the adversary picks the violating branch
    assert Fraction(data["lo_num"], data["lo_den"]) == 1
    assert data["decision"] == "exceeds"


# ---------------------------------------------------------------------------
# bench


@pytest.fixture()
def bench_dir(tmp_path):
    d = tmp_path / "suite"
    d.mkdir()
    (d / "easy_sat.prob").write_text(SAT_PROGRAM)
    (d / "easy_unsat.prob").write_text(UNSAT_PROGRAM)
    return d


def test_bench_table(bench_dir, capsys):
    code = main(["bench", str(bench_dir)])
    out = capsys.readouterr().out
    assert code == EXIT_SAT
    lines = out.splitlines()
    for col in ("Benchmark", "Result", "#Iteration", "Upper Bound", "#Traces", "Time"):
        assert col in lines[0]
    assert any("easy_sat" in l and "Sat" in l for l in lines)
    assert any("easy_unsat" in l and "Unsat" in l for l in lines)


def test_bench_json(bench_dir, capsys):
    code = main(["bench", str(bench_dir), "--json"])
    reports = json.loads(capsys.readouterr().out)
    assert code == EXIT_SAT
    assert [r["verdict"] for r in reports] == ["sat", "unsat"]


def test_bench_flags_inconclusive_rows(bench_dir, capsys):
    (bench_dir / "capped.prob").write_text(SAT_PROGRAM)
    code = main(["bench", str(bench_dir), "--max-iters", "0"])
    out = capsys.readouterr().out
    assert code == EXIT_INCONCLUSIVE
    assert "Inconclusive" in out


def test_bench_missing_dir(capsys):
    code = main(["bench", "no/such/dir"])
    assert code == EXIT_ERROR


def test_bench_empty_dir(tmp_path, capsys):
    code = main(["bench", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "no .prob files" in err


# ---------------------------------------------------------------------------
# config precedence and the installed entry point


def test_config_defaults_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("beta = 1/2\n")
    code = main(["verify", PROG, "--config", str(cfg)])
    capsys.readouterr()
    assert code == EXIT_SAT  # config beta loosens the threshold
    code = main(["verify", PROG, "--config", str(cfg), "--beta", "3/10"])
    capsys.readouterr()
    assert code == EXIT_UNSAT  # explicit flag wins over the config


def test_console_script_is_installed():
    exe = shutil.which("probtrace")
    if exe is None:
        pytest.skip("entry point not on PATH in this environment")
    proc = subprocess.run(
        [exe, "verify", PROG, "--json"], capture_output=True, text=True
    )
    assert proc.returncode == EXIT_UNSAT
    report = json.loads(proc.stdout)
    assert report["verdict"] == "unsat"


def test_module_invocation():
    proc = subprocess.run(
        [sys.executable, "-m", "probtrace.cli", "oracle", PROG, "--json"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_SAT
    data = json.loads(proc.stdout)
    assert Fraction(data["lo_num"], data["lo_den"]) == Fraction(15, 32)
