import json

import numpy as np
import pytest

from sinkdiff import TransportInstance, save_instance
from sinkdiff.cli import EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main


def test_solve_generated(tmp_path, capsys):
    out = tmp_path / "plan.json"
    code = main(["solve", "--generate", "20,10,3", "--epsilon", "0.5", "--tol", "1e-10", "--out", str(out)])
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    assert data["converged"] is True
    assert np.asarray(data["plan"]).shape == (20, 10)
    assert "converged=true" in capsys.readouterr().err


def test_solve_history(tmp_path):
    hist = tmp_path / "h.csv"
    code = main(["solve", "--generate", "6,5,1", "--epsilon", "0.5", "--out", str(tmp_path / "p.json"),
                 "--history", str(hist)])
    assert code == EXIT_OK
    lines = hist.read_text().splitlines()
    assert lines[0] == "iter,marginal_violation,d_var_to_final"
    assert float(lines[-1].split(",")[2]) == 0.0


def test_solve_constant_cost(tmp_path):
    a = np.array([0.2, 0.3, 0.5])
    b = np.array([0.6, 0.4])
    save_instance(TransportInstance(np.full((3, 2), 1.3), a, b, 0.4), tmp_path / "i.json")
    out = tmp_path / "p.json"
    assert main(["solve", "--instance", str(tmp_path / "i.json"), "--out", str(out)]) == EXIT_OK
    P = np.asarray(json.loads(out.read_text())["plan"])
    np.testing.assert_allclose(P, np.outer(a, b), atol=1e-12)


def test_invalid_instance(tmp_path, capsys):
    bad = {"cost": [[0.0, 1.0]], "a": [1.0], "b": [0.3, 0.3], "epsilon": 0.1}
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["solve", "--instance", str(tmp_path / "bad.json")]) == EXIT_INPUT
    assert "mass_balance" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--generate", "3"],
        ["solve", "--generate", "4,3", "--epsilon", "-1"],
        ["solve"],
        ["solve", "--instance", "/nonexistent/file.json"],
    ],
)
def test_input_errors(argv):
    assert main(argv) == EXIT_INPUT


def test_nonconvergence_exit(tmp_path):
    code = main(["solve", "--generate", "10,8,0", "--epsilon", "0.01", "--max-iter", "3",
                 "--out", str(tmp_path / "p.json")])
    assert code == EXIT_NUMERIC


def test_differentiate(tmp_path, capsys):
    out = tmp_path / "d.json"
    code = main(["differentiate", "--generate", "10,8,0", "--epsilon", "0.2", "--tol", "1e-12",
                 "--oracle", "--out", str(out)])
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    assert data["agreement_frobenius"] <= 1e-8
    assert data["oracle_max_abs"] <= 1e-5
    assert np.asarray(data["closed_form"]["slices"]).shape == (1, 10, 8)
    assert "agreement" in capsys.readouterr().err


def test_differentiate_routes_and_params(tmp_path):
    for route in ("spectral", "resolvent"):
        for param in ("softmax-a", "direct-b"):
            out = tmp_path / f"{route}-{param}.json"
            assert main(["differentiate", "--generate", "5,4,2", "--epsilon", "0.5", "--tol", "1e-12",
                         "--route", route, "--param", param, "--out", str(out)]) == EXIT_OK
            assert json.loads(out.read_text())["agreement_frobenius"] <= 1e-8


def test_differentiate_constant_cost(tmp_path):
    a = np.array([0.25, 0.75])
    b = np.array([0.5, 0.2, 0.3])
    save_instance(TransportInstance(np.full((2, 3), 0.5), a, b, 0.3), tmp_path / "i.json")
    out = tmp_path / "d.json"
    assert main(["differentiate", "--instance", str(tmp_path / "i.json"), "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert np.max(np.abs(data["closed_form"]["slices"])) <= 1e-10
    assert np.max(np.abs(data["piggyback"]["slices"])) <= 1e-10


def test_differentiate_tangent_file(tmp_path):
    tangents = {"tangents": [{"label": "shift", "d_a": [0.1, -0.1], "d_b": [0.0, 0.05, -0.05]}]}
    (tmp_path / "t.json").write_text(json.dumps(tangents))
    out = tmp_path / "d.json"
    assert main(["differentiate", "--generate", "2,3,0", "--epsilon", "0.5", "--tol", "1e-12",
                 "--tangents", str(tmp_path / "t.json"), "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["labels"] == ["shift"]
    S = np.asarray(data["closed_form"]["slices"][0])
    np.testing.assert_allclose(S.sum(axis=1), [0.1, -0.1], atol=1e-8)


def test_study_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["study", "--generate", "8,6,0", "--epsilon", "0.3", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "iter,plan_err,deriv_err,marginal_violation"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert rows[0, 0] == 0 and rows[-1, 2] == 0.0
    assert np.min(rows[:, 2]) <= 1e-8
    assert "deriv_ratio=" in capsys.readouterr().err


def test_study_stdout(capsys):
    assert main(["study", "--generate", "4,3,0", "--epsilon", "0.5"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "iter,plan_err,deriv_err,marginal_violation"


def test_study_constant_cost(tmp_path):
    a = np.array([0.5, 0.5])
    save_instance(TransportInstance(np.zeros((2, 2)), a, a, 0.1), tmp_path / "i.json")
    out = tmp_path / "s.csv"
    assert main(["study", "--instance", str(tmp_path / "i.json"), "--out", str(out)]) == EXIT_OK
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    assert max(float(r[2]) for r in rows) <= 1e-12


def test_check(capsys):
    assert main(["check"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "measured=" in out and "allowed=" in out


@pytest.mark.parametrize("target", ["jacobian", "plan-derivative"])
def test_check_break(target, capsys):
    assert main(["check", "--break", target]) == EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out


def test_generate_round_trip_and_determinism(tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "--generate", "7,5,11", "--epsilon", "0.2", "--out", str(p1)]) == EXIT_OK
    assert main(["generate", "--generate", "7,5", "--seed", "11", "--epsilon", "0.2", "--out", str(p2)]) == EXIT_OK
    assert p1.read_text() == p2.read_text()
    s1, s2 = tmp_path / "s1.json", tmp_path / "s2.json"
    for s in (s1, s2):
        assert main(["solve", "--instance", str(p1), "--out", str(s)]) == EXIT_OK
    assert s1.read_text() == s2.read_text()
