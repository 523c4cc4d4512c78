"""Theory files, report serialization, and the command-line front end."""

import json
import pathlib

import pytest

from ktphase import theories as TH
from ktphase.cli import (
    RunOptions,
    canonical_json,
    emit_report,
    emit_theory,
    main,
    parse_theory,
    run_pipeline,
)
from ktphase.errors import ParseError, UndeclaredSymbolError

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "ktphase" / "theories_data"


# ---------------------------------------------------------------------------
# theory files
# ---------------------------------------------------------------------------

def test_shipped_files_equal_builtins():
    for name in TH.THEORY_NAMES:
        text = (DATA / f"{name}.theory").read_text(encoding="utf-8")
        assert parse_theory(text) == TH.builtin(name)


def test_emit_parse_round_trip():
    for name in TH.THEORY_NAMES:
        t = TH.builtin(name)
        text = emit_theory(t)
        assert parse_theory(text) == t
        assert emit_theory(parse_theory(text)) == text


def test_two_transversal_marks_rejected():
    text = """theory bad
dim 2
coords x0 x1 @transversal x0 @transversal x1
field q
lagrangian "q"
"""
    with pytest.raises(ParseError) as err:
        parse_theory(text)
    assert "second @transversal" in str(err.value)
    assert err.value.line == 3


def test_undeclared_symbol_named_in_error():
    text = """theory bad
dim 1
coords t
field q
lagrangian "q*w"
"""
    with pytest.raises(UndeclaredSymbolError) as err:
        parse_theory(text)
    assert "'w'" in str(err.value)


def test_duplicate_field_rejected():
    text = """theory bad
dim 1
coords t
field q
field q
lagrangian "q"
"""
    with pytest.raises(ParseError):
        parse_theory(text)


def test_unknown_key_rejected():
    with pytest.raises(ParseError):
        parse_theory("theory x\ndim 1\ncoords t\nfield q\nhamiltonian \"q\"\nlagrangian \"q\"\n")


def test_transversal_marker_parsed():
    text = """theory tm
dim 2
coords x0 x1 @transversal x1
field q
lagrangian "q"
"""
    t = parse_theory(text)
    assert t.transversal == 1
    assert "@transversal x1" in emit_theory(t)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_canonical_json_deterministic_and_sorted():
    a = canonical_json({"b": 1.5, "a": [True, None, 2]})
    b = canonical_json({"a": [True, None, 2], "b": 1.5})
    assert a == b
    assert a.index('"a"') < a.index('"b"')
    assert "1.5" in a


def test_float_formatting_17_digits():
    s = canonical_json({"x": 0.1})
    assert "0.10000000000000001" in s


def test_identical_reports_identical_bytes():
    t = TH.builtin("mechanics")
    r1 = run_pipeline(t, RunOptions(symbolic_only=True))
    r2 = run_pipeline(t, RunOptions(symbolic_only=True))
    assert emit_report(r1, "data") == emit_report(r2, "data")


def test_latex_contains_textbook_notation():
    t = TH.builtin("mechanics")
    r = run_pipeline(t, RunOptions(symbolic_only=True))
    latex = emit_report(r, "latex", t).decode()
    assert r"m\dot q\,\delta q" in latex
    assert r"\documentclass" in latex and r"\end{document}" in latex


def test_empty_check_report_is_valid_minimal_document():
    t = TH.builtin("length")
    r = run_pipeline(t, RunOptions(symbolic_only=True))
    data = emit_report(r, "data").decode()
    parsed = json.loads(data)
    assert parsed["theory"]["name"] == "length"
    plain = emit_report(r, "plain").decode()
    assert plain.strip().endswith("status: pass")


def test_unknown_format_rejected():
    t = TH.builtin("mechanics")
    r = run_pipeline(t, RunOptions(symbolic_only=True))
    from ktphase.errors import KtError
    with pytest.raises(KtError):
        emit_report(r, "yaml")


# ---------------------------------------------------------------------------
# command line: exit codes
# ---------------------------------------------------------------------------

def test_cli_derive_exit_zero(capsys):
    assert main(["derive", "mechanics", "--format", "plain"]) == 0
    out = capsys.readouterr().out
    assert "m*v δ(q)" in out


def test_cli_parse_error_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.theory"
    bad.write_text("theory x\ndim 1\ncoords t\nfield q\nlagrangian \"q +\"\n")
    assert main(["derive", str(bad)]) == 1
    assert "parse error" in capsys.readouterr().err


def test_cli_check_failure_exit_two(tmp_path, capsys):
    # checking a non-builtin theory has no golden record: exit code 2
    custom = tmp_path / "custom.theory"
    custom.write_text("theory custom\ndim 1\ncoords t\nfield q\n"
                      "lagrangian \"1/2*q'^2\"\n")
    assert main(["check", str(custom)]) == 2
    assert "check failure" in capsys.readouterr().err


def test_cli_internal_error_exit_three(capsys):
    assert main(["derive", "/nonexistent/path.theory"]) == 3


def test_cli_check_mechanics_passes(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["check", "mechanics", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["passed"] is True
    assert report["checks"]["symbolic"]["entries"]["alpha"]["pass"] is True


def test_cli_seed_env_override(tmp_path, monkeypatch):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    monkeypatch.setenv("KT_SEED", "7")
    assert main(["check", "mechanics", "--seed", "3", "--out", str(out1)]) == 0
    monkeypatch.delenv("KT_SEED")
    assert main(["check", "mechanics", "--seed", "7", "--out", str(out2)]) == 0
    r1 = json.loads(out1.read_text())
    r2 = json.loads(out2.read_text())
    assert r1["options"]["seed"] == 7

    def strip_walltime(checks):
        for block in checks.values():
            block["entries"].pop("runtime_s", None)
        return checks

    assert strip_walltime(r1["checks"]) == strip_walltime(r2["checks"])


def test_cli_scalar_lattice_flag(tmp_path):
    out = tmp_path / "s.json"
    assert main(["check", "scalar", "--lattice", "16", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["checks"]["lattice"]["entries"]["rank"]["rank"] == 32
