import sys
import time
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("flowhom", max_examples=25, deadline=None)
settings.load_profile("flowhom")

ACCEPTANCE = {}
_STUDIES = {}


@pytest.fixture(scope="session")
def study():
    """Convergence study per built-in scenario, computed once per session with its runtime."""
    from flowhom.scenarios import builtin
    from flowhom.sigma import convergence_study

    def get(name, eps_list=None):
        key = (name, tuple(sorted(eps_list or builtin(name).sweep.eps, reverse=True)))
        if key not in _STUDIES:
            start = time.perf_counter()
            report = convergence_study(builtin(name), eps_list=eps_list, threads=3)
            _STUDIES[key] = (report, time.perf_counter() - start)
        return _STUDIES[key]
    return get


@pytest.fixture
def record_criterion():
    """Store ``(number, passed, detail)`` for the end-of-run acceptance summary."""
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}")
