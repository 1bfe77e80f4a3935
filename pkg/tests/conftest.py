import pytest

from qetbound.model import build_chain
from qetbound.spectral import shift_to_zero, solve_ground

import acceptance_log


class Solved:
    def __init__(self, n, model, **params):
        self.H0 = build_chain(n, model, **params)
        self.gs = solve_ground(self.H0)
        self.H = shift_to_zero(self.H0, self.gs) if not self.gs.degeneracy_flag else None
        self.n = n


_cache = {}


@pytest.fixture(scope="session")
def solved():
    """Factory returning cached solved models keyed by (n, model, params)."""

    def get(n, model="tfim", **params):
        key = (n, model, tuple(sorted(params.items())))
        if key not in _cache:
            _cache[key] = Solved(n, model, **params)
        return _cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acceptance_log.RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = acceptance_log.RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
