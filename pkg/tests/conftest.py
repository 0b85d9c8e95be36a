import numpy as np
import pytest


def random_spd(g, n, cond_floor=0.2):
    a = g.standard_normal((n, n))
    m = a @ a.T / n + cond_floor * np.eye(n)
    return (m + m.T) / 2


def random_covariance(g, n, samples=None):
    samples = samples or 2 * n
    x = g.standard_normal((samples, n)) @ np.linalg.cholesky(random_spd(g, n)).T
    s = x.T @ x / samples
    return (s + s.T) / 2


@pytest.fixture
def g():
    return np.random.default_rng(20240611)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
