import sys

import numpy as np
import pytest

from sinkdiff import TransportInstance, solve
from sinkdiff.kernels import available_backends


def random_instance(rng, n, m, eps_range=(0.1, 1.0), cost_scale=1.0):
    cost = cost_scale * rng.uniform(size=(n, m))
    a = rng.dirichlet(np.ones(n)) if n > 1 else np.ones(1)
    b = rng.dirichlet(np.ones(m)) if m > 1 else np.ones(1)
    # Dirichlet draws may miss the mass balance by a few ulps.
    b = b * (a.sum() / b.sum())
    return TransportInstance(cost, a, b, rng.uniform(*eps_range))


def constant_cost_instance(rng, n, m, c=0.7, eps=0.3):
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(m))
    b = b * (a.sum() / b.sum())
    return TransportInstance(np.full((n, m), c), a, b, eps)


def fixed_point(inst, tol=1e-13):
    rep = solve(inst, tol=tol)
    assert rep.converged
    return rep.x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
