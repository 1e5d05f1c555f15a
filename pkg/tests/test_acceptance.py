"""Acceptance criteria 1-12 at their stated grids and tolerances.

Each test prints one ``criterion k: PASS|FAIL`` line (also collected in the terminal summary) and then asserts.
"""

from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest

from calderon_lab.experiments import Scenario, run_experiment

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def wave_scenario():
    """Constructed pair on the tangential-wave base with the bump gauge factor and a boundary shear."""
    return Scenario(metric={"preset": "tangential_wave", "params": {}})


def _summarise(results):
    checks = [c for r in results for c in r.checks]
    failed = [c for c in checks if not c.passed]
    detail = ", ".join(f"{c.name}={c.value:.4g}" if isinstance(c.value, float) else f"{c.name}={c.value}"
                       for c in checks)
    return not failed, detail, failed


def _finish(report, number, title, results, seconds=None, limit=None):
    ok, detail, failed = _summarise(results)
    if limit is not None:
        detail += f", runtime={seconds:.1f}s (limit {limit:.0f}s)"
        ok = ok and seconds <= limit
    report(number, title, ok, detail)
    assert not failed, [str(c.as_dict()) for c in failed]
    if limit is not None:
        assert seconds <= limit, f"runtime {seconds:.1f}s exceeds {limit}s"


def test_criterion_01_conformal_covariance(acceptance_report):
    scn = Scenario(metric={"preset": "tangential_wave", "params": {}})
    t0 = time.perf_counter()
    res = run_experiment(scn, "forward.covariance", {"sizes": [32, 64]})
    _finish(acceptance_report, 1, "conformal covariance", [res], time.perf_counter() - t0, 30)


def test_criterion_02_flat_dn_oracle(acceptance_report):
    t0 = time.perf_counter()
    res = run_experiment(Scenario(), "dnmap.flat_oracle", {"N": 64, "K": 4, "tolerance": 0.01})
    _finish(acceptance_report, 2, "flat-slab DN oracle", [res], time.perf_counter() - t0, 60)


def test_criterion_03_gauge_invariance(acceptance_report):
    scn = Scenario(metric={"preset": "tangential_wave", "params": {}})
    t0 = time.perf_counter()
    res = run_experiment(scn, "dnmap.gauge_invariance", {"sizes": [32, 64]})
    _finish(acceptance_report, 3, "gauge invariance of the DN map", [res], time.perf_counter() - t0, 120)


def test_criterion_04_relations_and_normalization(acceptance_report):
    scn = Scenario()
    t0 = time.perf_counter()
    rel = run_experiment(scn, "gauge.relations", {"metric": "tangential_wave"})
    norm = run_experiment(scn, "gauge.normalization", {"presets": ["tangential_wave", "conformal_flat"]})
    _finish(acceptance_report, 4, "gauge relations and conformal normalization", [rel, norm],
            time.perf_counter() - t0, 180)


def test_criterion_05_jet_determination(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "gauge.jets", {"N": 48})
    _finish(acceptance_report, 5, "normalized jet agreement", [res])


def test_criterion_06_z_decay(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "zcoords.decay", {"N": 64})
    _finish(acceptance_report, 6, "Z-coordinate decay exponents", [res])


def test_criterion_07_gluing(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "zcoords.gluing",
                         {"N": 32, "second_patch": [[0.4, 0.35], [0.9, 0.85]]})
    _finish(acceptance_report, 7, "gluing consistency and injectivity", [res])


def test_criterion_08_green_laws(acceptance_report, wave_scenario):
    laws = run_experiment(wave_scenario, "greens.laws", {"sizes": [32, 64]})
    flat = run_experiment(wave_scenario, "greens.schwartz", {"N": 64, "metric": "flat"})
    curved = run_experiment(wave_scenario, "greens.schwartz", {"N": 64})
    _finish(acceptance_report, 8, "Green transformation laws and Schwartz kernel", [laws, flat, curved])


def test_criterion_09_diagonal(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "greens.diagonal", {"N": 64, "presets": ["flat", "tangential_wave"]})
    _finish(acceptance_report, 9, "diagonal asymptotics", [res])


def test_criterion_10_embedding(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "greens.embedding", {"N": 32})
    _finish(acceptance_report, 10, "embedding and reconstruction", [res])


def test_criterion_11_runge(acceptance_report, wave_scenario):
    res = run_experiment(wave_scenario, "runge.residuals", {"N": 32})
    _finish(acceptance_report, 11, "Runge approximation", [res])


@pytest.fixture(scope="module")
def verify_all_runs(tmp_path_factory):
    """Two timed ``verify-all`` runs of the command-line tool on the flat preset at N=32."""
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"verify_all_{k}")
        t0 = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "calderon_lab.cli", "verify-all", "--out", str(out)],
                              capture_output=True, text=True)
        runs.append({"code": proc.returncode, "seconds": time.perf_counter() - t0, "out": out,
                     "summary": (out / "summary.json").read_bytes()})
    return runs


def test_criterion_12_verify_all(acceptance_report, verify_all_runs):
    summary = json.loads(verify_all_runs[0]["summary"])
    codes = [r["code"] for r in verify_all_runs]
    slowest = max(r["seconds"] for r in verify_all_runs)
    identical = verify_all_runs[0]["summary"] == verify_all_runs[1]["summary"]
    ok = codes == [0, 0] and identical and slowest <= 300 and summary["passed"]
    acceptance_report(12, "verify-all end to end", ok,
                      f"checks={summary['checks']}, failed={len(summary['failures'])}, exit={codes}, "
                      f"runtime={slowest:.0f}s (limit 300s), identical={identical}")
    assert codes == [0, 0]
    assert summary["passed"], summary["failures"]
    assert identical
    assert slowest <= 300


def test_verify_all_matches_golden(verify_all_runs):
    from pathlib import Path

    from calderon_lab.cli import compare_golden

    golden = Path(__file__).parent / "golden" / "verify_all_flat"
    rep = compare_golden(verify_all_runs[0]["out"], golden, rtol=1e-6, atol=1e-10)
    assert rep.compared > 10
    assert rep.ok, rep.entries[:5]
