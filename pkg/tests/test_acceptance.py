"""Acceptance battery: one test per criterion, each with a wall-clock budget.

A summary line per criterion is printed at the end of the pytest run.
"""

import time

import numpy as np

from fueterlab.cli import RunConfig
from fueterlab.suites import run_suite

from conftest import ACCEPTANCE_LINES

SEED = 20240611
_cache = {}


def _run(suite, target=None, grid=None):
    key = (suite, target, grid)
    if key not in _cache:
        cfg = RunConfig(suite=suite, target=target, grid=grid, seed=SEED).validate()
        t0 = time.perf_counter()
        res = run_suite(cfg, np.random.default_rng(SEED))
        _cache[key] = (res, time.perf_counter() - t0)
    return _cache[key]


def _judge(number, title, results, budget, extra=()):
    checks = [c for res, _ in results for c in res.checks] + list(extra)
    elapsed = sum(t for _, t in results)
    failed = [c for c in checks if not c.passed]
    within = elapsed <= budget
    ok = not failed and within
    detail = "; ".join(f"{c.name}={c.value:.3g}" if isinstance(c.value, float) else f"{c.name}={c.value}"
                       for c in failed)
    ACCEPTANCE_LINES.append(
        f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.1f}s / {budget:.0f}s)"
        + (f"  failing: {detail}" if detail else ""))
    assert not failed, [c.to_dict() for c in failed]
    assert within, f"took {elapsed:.1f}s, budget {budget}s"


def test_criterion_01_energy_identity_3d():
    _judge(1, "3D energy identity on Taub-NUT sections",
           [_run("energy-identity-3d", "taubnut", 32)], 120)


def test_criterion_02_primitives():
    res, t = _run("targets-check", "taubnut")
    names = {c.name for c in res.checks}
    assert {"primitive_defect", "growth_stability"} <= names
    _judge(2, "primitives and linear growth", [(res, t)], 60)


def test_criterion_03_stokes_pairings():
    _judge(3, "vanishing sphere pairings and Eguchi-Hanson contrast",
           [_run("stokes", "taubnut"), _run("stokes", "flat")], 120)


def test_criterion_04_monotonicity_equality():
    _judge(4, "flat monotonicity equality", [_run("monotonicity")], 120)


def test_criterion_05_jet_algebra():
    _judge(5, "jet harmonicity, conformality, rigidity", [_run("jets")], 60)


def test_criterion_06_twistor():
    _judge(6, "twistor structures and lift identity", [_run("twistor")], 60)


def test_criterion_07_solver_and_oracle():
    _judge(7, "solver descent against the spectral oracle", [_run("solve", "flat", 32)], 180)


def test_criterion_08_energy_bound():
    solve_res, _ = _run("solve", "flat", 32)
    per_output = [c for c in solve_res.checks if c.name == "energy_plus_lambda"]
    assert per_output
    _judge(8, "energy bound on solver outputs and the doubling family",
           [_run("energy-bound")], 60, extra=per_output)


def test_criterion_09_atiyah_hitchin_profile():
    _judge(9, "Atiyah-Hitchin profile", [_run("targets-check", "ah")], 60)


def test_criterion_10_axisymmetric_map():
    _judge(10, "axisymmetric bolt map and its density", [_run("blowup-axi")], 60)


def test_criterion_11_four_dimensional_operator():
    _judge(11, "4D energy identity coefficient and cylinder reduction", [_run("fueter4d")], 120)
