from fractions import Fraction

import pytest

import psync

ST = {"system": "st", "n": 4, "f": 1, "theta": "11/10",
      "faults": [{"node": 0, "behaviour": "random", "period": "1/2"}]}
MAIN = {"system": "main", "n": 4, "f": 1, "theta": "1004/1000",
        "faults": [{"node": 2, "behaviour": "equivocator", "period": "5"}]}


def test_st_run_passes():
    r = psync.run(ST, seed=3)
    assert r["passed"]
    assert all(c["ok"] for c in r["checks"])
    assert Fraction(r["metrics"]["max_skew"]) < 2


def test_main_run_stabilises():
    r = psync.run(MAIN, seed=1)
    assert r["passed"]
    assert r["metrics"]["stabilisation"]["found"]


def test_trace_replays_to_same_metrics():
    r, csv = psync.run(ST, seed=7, trace=True)
    assert csv.count("\n") > 10
    again = psync.evaluate(ST, 7, csv)
    assert again["metrics"] == r["metrics"]
    assert psync.run(ST, seed=7, trace=True)[1] == csv


def test_normalise_fills_defaults():
    s = psync.normalise({"system": "resync", "n": 7, "f": 2})
    assert Fraction(s["theta"]) > 1
    assert s["system"] == "resync"


def test_solver_report_and_describe():
    report = psync.solve_report({"system": "main", "theta": "1004/1000"})
    assert "violated" not in report
    assert "machine" in psync.describe(MAIN, machines=True)


def test_errors_are_value_errors():
    with pytest.raises(psync.ScenarioError):
        psync.run({"system": "st", "n": 3, "f": 1})
    with pytest.raises(psync.InfeasibleError, match=r"\(2\+sqrt\(32\)\)/7"):
        psync.solve_report({"system": "main", "theta": "6/5"})
    with pytest.raises(ValueError):
        psync.run("{not json")
