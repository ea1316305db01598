import time
from contextlib import contextmanager

import pytest

RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Time a block as acceptance criterion `number` and record one pass/fail line."""
    results = request.config.stash[RESULTS_KEY]

    @contextmanager
    def run(number: int, title: str, budget: float):
        start = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            in_budget = elapsed <= budget
            verdict = "PASS" if ok and in_budget else "FAIL"
            note = "" if in_budget else " over budget"
            line = f"criterion {number:2d} {verdict}  {elapsed:9.4f} s (budget {budget:g} s){note}  {title}"
            results.append((number, line))
            print(line)
        assert in_budget, f"criterion {number} took {elapsed:.4f} s, budget {budget} s"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(RESULTS_KEY, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
