from __future__ import annotations

import functools

import pytest
from hypothesis import HealthCheck, settings

from nambugeom.embedding import resolve
from nambugeom.verify import analyze

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES: dict[str, str] = {}

SPHERE = "catalog:sphere?r=1"
TORUS = "catalog:torus?R=2,r=1"

CURVED3 = {
    "name": "curved-graph2", "n": 2, "m": 3,
    "coords": ["u1", "u2", "0.3*u1^2-0.2*u1*u2+0.1*u2^3"],
    "ambient": [["1+0.1*x1^2", "0.05*x3", "0"], ["0.05*x3", "1", "0"], ["0", "0", "exp(0.1*x2)"]],
    "domain": [[-1, 1], [-1, 1]],
}
CURVED4 = {
    "name": "curved-graph4", "n": 2, "m": 4,
    "coords": ["u1", "u2", "u1^2+u1*u2", "u1*u2-u2^2+0.3*u1^3"],
    "ambient": [["1+0.1*x1^2", "0.05*x3", "0", "0"], ["0.05*x3", "1", "0", "0.02*x1"],
                ["0", "0", "exp(0.1*x2)", "0"], ["0", "0.02*x1", "0", "1+0.1*x4^2"]],
    "domain": [[-1, 1], [-1, 1]],
}
GENERIC_P2 = {
    "name": "generic-p2", "n": 2, "m": 4,
    "coords": ["u1", "u2", "u1^2+u1*u2", "u1*u2-u2^2+0.3*u1^3"],
    "domain": [[-1, 1], [-1, 1]],
}


@functools.lru_cache(maxsize=None)
def cached_spec(ref: str):
    return resolve(ref)


@functools.lru_cache(maxsize=256)
def cached_analysis(ref: str, u: tuple, density: str | None = None):
    return analyze(cached_spec(ref), u, density)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def spec_of():
    return cached_spec
