import numpy as np
import pytest

from epp import Distribution, PredictionTable, bayes_ehmm


@pytest.fixture
def two_experts():
    """Constant experts a (P(1)=0.9) and b (P(1)=0.1) over outcomes 0/1."""
    return PredictionTable.constant({"a": {"0": 0.1, "1": 0.9}, "b": {"0": 0.9, "1": 0.1}}, 10)


@pytest.fixture
def bayes_ab():
    return bayes_ehmm(Distribution.uniform(["a", "b"]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
