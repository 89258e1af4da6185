import re

import numpy as np
import pytest

from survmeta.cohort import PreprocessConfig, build_snapshot, trim
from survmeta.synth import DgpConfig, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_synthetic():
    """A 600-subject synthetic cohort and its truth, shared across modules."""
    cfg = DgpConfig(n_subjects=600, seed=7, snapshot_tau=3, beta_age=0.4, propensity_age=0.8)
    return cfg, *generate(cfg)


@pytest.fixture(scope="session")
def small_cohort(small_synthetic):
    _, records, _ = small_synthetic
    return trim(build_snapshot(records, 3, PreprocessConfig()))


# --------------------------------------------------------------- acceptance report

CRITERIA = {
    1: "oracle ATE recovery (T, S, matching K=5 with Cox)",
    2: "null-effect calibration",
    3: "Cox agrees with grid search and finite differences",
    4: "KM and RMET exact on hand fixtures",
    5: "matching collapse identity",
    6: "T-learner with KM equals unadjusted KM",
    7: "metric pair-enumeration oracles",
    8: "ablation direction",
    9: "pipeline invariants",
    10: "RSF sanity",
}
_criterion_outcomes: dict = {}


def _criterion_of(nodeid):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_", nodeid)
    return int(match.group(1)) if match else None


def pytest_runtest_logreport(report):
    number = _criterion_of(report.nodeid)
    if number is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        ok = _criterion_outcomes.get(number, True)
        _criterion_outcomes[number] = ok and report.passed and not report.skipped \
            if report.when == "call" else False


def pytest_terminal_summary(terminalreporter):
    if not _criterion_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        if number not in _criterion_outcomes:
            continue
        verdict = "PASS" if _criterion_outcomes[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {CRITERIA[number]}")
