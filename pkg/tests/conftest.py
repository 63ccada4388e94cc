import numpy as np
import pytest

from survstack.surv_core import StepSurvivalCurve, SurvivalDataset, validate_curve


def simulate_lognormal(n, beta, sd=0.5, cens_upper=8.0, seed=0, intercept=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, len(beta)))
    t = np.exp(intercept + x @ np.asarray(beta) + sd * rng.standard_normal(n))
    c = rng.uniform(0, cens_upper, n)
    return SurvivalDataset(np.minimum(t, c), t < c, x)


@pytest.fixture
def small_data():
    return simulate_lognormal(120, [1.0, -0.5, 0.0], seed=11)


@pytest.fixture
def curve_checker():
    """Assert that every row of a survival matrix is a valid survival curve."""
    def check(times, surv):
        surv = np.atleast_2d(surv)
        order = np.argsort(times)
        for row in surv:
            validate_curve(StepSurvivalCurve(np.asarray(times)[order], row[order]), atol=1e-12)
    return check


_CRITERIA = []


@pytest.fixture
def report_criterion(capsys):
    """Record one pass/fail line for an acceptance criterion; ``None`` means skipped."""
    def record(label, passed, detail):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {label}: {status}  {detail}"
        _CRITERIA.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
