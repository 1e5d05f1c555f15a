"""Experiment records and small-grid runs of the experiment registry."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.experiments import Check, Scenario, run_experiment


@pytest.mark.parametrize("value, tol, rel, expected", [
    (0.5, 1.0, "<=", True), (2.0, 1.0, "<=", False), (2.0, 1.0, ">=", True),
    (True, True, "==", True), (float("nan"), 1.0, "<=", False),
])
def test_check_relations(value, tol, rel, expected):
    assert Check("c", value, tol, rel).passed is expected


def test_scenario_from_config_defaults_patch_to_dimension():
    scn = Scenario.from_config({"grid": {"n": 4, "N_t": 8, "N_n": 8}})
    assert scn.patch["lower"] == [0.25] * 3
    assert scn.grid().shape == (8, 8, 8, 9)


def test_operator_cache(grid16):
    scn = Scenario()
    g = scn.metric_field()
    assert scn.operator(g, grid16, "m") is scn.operator(g, grid16, "m")


def test_forward_solve_small():
    res = run_experiment(Scenario(N_t=16, N_n=16), "forward.solve")
    assert res.passed
    x, y = res.series["profile.dat"]
    assert y[0] == pytest.approx(-1.0) and abs(y[-1]) < 1e-12  # centre node x1 = 1/2


def test_flat_oracle_small():
    res = run_experiment(Scenario(N_t=16, N_n=16), "dnmap.flat_oracle", {"K": 2, "tolerance": 0.02})
    assert res.passed
    header, rows = res.tables["symbol_fit.csv"]
    assert np.all(np.diff(rows[:, 0]) >= 0)


def test_gauge_invariance_small():
    res = run_experiment(Scenario(N_t=16, N_n=16), "dnmap.gauge_invariance", {"K": 1})
    checks = {c.name: c for c in res.checks}
    assert checks["negative_control_ratio"].passed
    assert checks["refinement_order"].value > 1.5
