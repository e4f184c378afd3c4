"""Shared helpers: population factories and enumeration-based oracles."""

from __future__ import annotations

import numpy as np
import pytest

from rerand import FinitePopulation, enumerate_assignments


def random_population(rng, n=8, k=1, j=2, scale=1.0) -> FinitePopulation:
    """Generic fuzz population with correlated outcomes and covariates."""
    x = rng.standard_normal((n, k))
    w = rng.standard_normal((n, j))
    load_x = rng.standard_normal(k)
    load_w = rng.standard_normal(j)
    y0 = x @ load_x + w @ load_w + scale * rng.standard_normal(n)
    y1 = y0 + rng.standard_normal() + 0.5 * scale * rng.standard_normal(n)
    return FinitePopulation(y1=y1, y0=y0, x=x, w=w)


def condition2_population(rng, n=12, k=1, j=3) -> FinitePopulation:
    """Population where x is an exact linear map of w (analyzer richer)."""
    w = rng.standard_normal((n, j))
    B1 = rng.standard_normal((j, k))
    x = w @ B1
    y0 = w @ rng.standard_normal(j) + rng.standard_normal(n)
    y1 = y0 + 1.0 + 0.5 * rng.standard_normal(n)
    return FinitePopulation(y1=y1, y0=y0, x=x, w=w)


def condition3_population(rng, n=12, k=3, j=1) -> FinitePopulation:
    """Population where w is an exact linear map of x (designer richer)."""
    x = rng.standard_normal((n, k))
    B2 = rng.standard_normal((k, j))
    w = x @ B2
    y0 = x @ rng.standard_normal(k) + rng.standard_normal(n)
    y1 = y0 + 1.0 + 0.5 * rng.standard_normal(n)
    return FinitePopulation(y1=y1, y0=y0, x=x, w=w)


def enumerate_estimates(pop: FinitePopulation, n1: int, estimator):
    """Apply an estimator to the observed data of every assignment."""
    out = []
    for asg in enumerate_assignments(pop.n, n1):
        out.append(estimator(pop.observed(asg.z), asg))
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_acceptance(name: str, outcome: str) -> None:
    _ACCEPTANCE_RESULTS[name] = outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        label = item.name
        _ACCEPTANCE_RESULTS.setdefault(label, "PASS" if report.passed
                                       else "FAIL")
        if not report.passed:
            _ACCEPTANCE_RESULTS[label] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"[{_ACCEPTANCE_RESULTS[name]}] {name}")
