import functools

import pytest

from nearshore.simulator import builtin_scenarios, generate


@functools.lru_cache(maxsize=None)
def scenario(name: str, seed: int = 0):
    """Generated (spec, bundle, truth), cached across the session."""
    spec = builtin_scenarios(seed)[name]
    bundle, truth = generate(spec)
    return spec, bundle, truth


@pytest.fixture(scope="session")
def kayak():
    return scenario("kayak_undock", 0)


@pytest.fixture(scope="session")
def docked():
    return scenario("docked_boats_mapping", 0)


_CRITERIA: list[tuple[int, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; all lines are printed again in the terminal summary."""

    def record(number: int, ok: bool, text: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        print(line)
        _CRITERIA.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
