"""End-to-end tests for the command-line front end."""

import json

import pytest

from qseplogic.casestudies import fixture_text
from qseplogic.cli import main


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_defaults_to_zero_state(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "q := |0>; q := X[q]")
    assert main(["run", prog]) == 0
    out = capsys.readouterr().out
    assert "trace: 1" in out
    assert "final density matrix:" in out
    # |1><1| on one qubit
    assert out.splitlines()[-1].split() == ["0", "1"]


def test_run_keep_marginal(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "a := |0>; b := |0>; a := H[a]")
    assert main(["run", prog, "--keep", "b"]) == 0
    out = capsys.readouterr().out
    assert "marginal on [b]:" in out
    assert "1" in out.splitlines()[-2] or "1" in out.splitlines()[-1]


def test_run_unknown_gate_is_parse_error(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "q := FROB[q]")
    assert main(["run", prog]) == 2
    assert "parse error" in capsys.readouterr().err


def test_run_input_not_covering_program_is_semantic_error(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "q := H[q]")
    state = _write(tmp_path, "s.json", json.dumps(
        {"dims": {"p": 2}, "vector": [1, 0]}))
    assert main(["run", prog, "--input", state]) == 3
    assert "semantic error" in capsys.readouterr().err


def test_run_reports_loop_truncation(tmp_path, capsys):
    # the guard outcome holds forever, so all weight stays in flight
    prog = _write(tmp_path, "p.prog",
                  "q := |0>; q := X[q]; while std[q] = 1 do skip od")
    assert main(["run", prog]) == 0
    out = capsys.readouterr().out
    assert "warning:" in out and "truncated" in out


def test_check_program_output_satisfied(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "q := |0>; q := H[q]")
    phi = _write(tmp_path, "f.txt", "proj [[0.5,0.5],[0.5,0.5]] on [q]")
    assert main(["check", phi, "--program", prog]) == 0
    assert "satisfied" in capsys.readouterr().out


def test_check_violation_names_atom_and_residual(tmp_path, capsys):
    prog = _write(tmp_path, "p.prog", "q := |0>; q := H[q]")
    phi = _write(tmp_path, "f.txt", "D[q] /\\ proj std.0 on [q]")
    assert main(["check", phi, "--program", prog]) == 1
    out = capsys.readouterr().out
    assert "violated atom: proj" in out
    assert "residual: 5.000e-01" in out


def test_check_state_file_uniform(tmp_path, capsys):
    phi = _write(tmp_path, "f.txt", "U[q]")
    state = _write(tmp_path, "s.json", json.dumps(
        {"dims": {"q": 2},
         "matrix": [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]}))
    assert main(["check", phi, "--state", state]) == 0


def test_check_missing_register_is_semantic_error(tmp_path, capsys):
    phi = _write(tmp_path, "f.txt", "U[r]")
    state = _write(tmp_path, "s.json", json.dumps(
        {"dims": {"q": 2}, "vector": [1, 0]}))
    assert main(["check", phi, "--state", state]) == 3
    assert "domain error" in capsys.readouterr().err


def test_prove_bundled_script(tmp_path, capsys):
    proof = _write(tmp_path, "q.proof", fixture_text("qotp1.proof"))
    assert main(["prove", proof]) == 0
    out = capsys.readouterr().out
    assert "nodes pass" in out
    assert "empirical leaves" in out


def test_prove_parse_error(tmp_path, capsys):
    proof = _write(tmp_path, "bad.proof", "(Frobnicate")
    assert main(["prove", proof]) == 2


def test_prove_failure_exits_one(tmp_path, capsys):
    # Init postcondition does not match its precondition under the update
    proof = _write(
        tmp_path, "bad.proof",
        '(rule Init (pre "top") (prog "q := |0>") (post "proj std.1 on [q]"))')
    assert main(["prove", proof]) == 1
    out = capsys.readouterr().out
    assert "0/1 nodes pass" in out


def test_fuzz_is_reproducible_and_job_count_invariant(capsys):
    assert main(["fuzz", "--trials", "6", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["fuzz", "--trials", "6", "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    assert main(["fuzz", "--trials", "6", "--seed", "3", "--jobs", "3"]) == 0
    assert capsys.readouterr().out == first


def test_fuzz_zero_trials(capsys):
    assert main(["fuzz", "--trials", "0"]) == 0
    assert "0 trials, 0 counterexamples" in capsys.readouterr().out


def test_fuzz_report_document(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["fuzz", "--trials", "4", "--seed", "1",
                 "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["command"] == "fuzz"
    assert doc["ok"] is True
    assert doc["details"]["counterexamples"] == 0


def test_case_qotp_smoke(capsys):
    assert main(["case", "qotp", "--trials", "10"]) == 0
    out = capsys.readouterr().out
    assert "case qotp:" in out
    assert "result: ok" in out


def test_case_rejects_unknown_name(capsys):
    with pytest.raises(SystemExit):
        main(["case", "teleport"])
