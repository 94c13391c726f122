"""Acceptance battery: every criterion at its stated tolerance.

Runs the shipped selftest once per session, asserts each criterion, and
reruns the full battery to confirm bit-identical numeric artifacts.  One
pass/fail line per criterion is printed (visible with pytest -s; the CLI
`hjblab selftest` prints the same lines unconditionally).
"""

import filecmp
import os

import pytest

from hjblab.selftest import run_selftest


@pytest.fixture(scope="module")
def battery(tmp_path_factory):
    out = tmp_path_factory.mktemp("selftest")
    result = run_selftest(str(out), threads=2)
    for outcome in result.outcomes:
        print(outcome.line())
    return out, result


def _outcome(result, criterion, fragment=""):
    matches = [o for o in result.outcomes
               if o.criterion == criterion and fragment in o.name]
    assert matches, f"no outcome recorded for criterion {criterion} {fragment!r}"
    return matches[0]


def test_criterion_1_counterexample_gap(battery):
    _, result = battery
    o = _outcome(result, 1)
    assert o.passed, o.line()
    assert o.runtime < 10.0


def test_criterion_2_mc_crosscheck(battery):
    _, result = battery
    o = _outcome(result, 2)
    assert o.passed, o.line()
    assert o.runtime < 60.0


def test_criterion_3_oracle_agreement(battery):
    _, result = battery
    o = _outcome(result, 3)
    assert o.passed, o.line()


def test_criterion_4_monotonicity(battery):
    _, result = battery
    o = _outcome(result, 4)
    assert o.passed, o.line()


def test_criterion_5_verification(battery):
    _, result = battery
    o = _outcome(result, 5)
    assert o.passed, o.line()


def test_criterion_6_dpp(battery):
    _, result = battery
    o = _outcome(result, 6)
    assert o.passed, o.line()


def test_criterion_7_sweeps(battery):
    _, result = battery
    o = _outcome(result, 7, fragment="sweeps")
    assert o.passed, o.line()


def test_criterion_7_truncation(battery):
    _, result = battery
    o = _outcome(result, 7, fragment="truncation")
    assert o.passed, o.line()


def test_criterion_8_solver_validation(battery):
    _, result = battery
    o = _outcome(result, 8)
    assert o.passed, o.line()


def test_criterion_9_reproducibility_spot(battery):
    _, result = battery
    o = _outcome(result, 9)
    assert o.passed, o.line()


def test_catalog_bounds(battery):
    _, result = battery
    o = _outcome(result, 0)
    assert o.passed, o.line()


def test_criterion_9_full_rerun_bit_identical(battery, tmp_path):
    """Second selftest run reproduces every numeric artifact byte for byte."""
    out1, result = battery
    assert result.total_runtime < 300.0
    out2 = tmp_path / "again"
    result2 = run_selftest(str(out2), threads=2)
    assert result2.all_passed
    names = sorted(os.listdir(out1))
    names2 = sorted(os.listdir(out2))
    assert names == names2
    skip = {"selftest_summary.json"}  # carries wall-clock runtime
    for name in names:
        if name in skip:
            continue
        assert filecmp.cmp(os.path.join(out1, name), os.path.join(out2, name),
                           shallow=False), f"artifact {name} differs between runs"
