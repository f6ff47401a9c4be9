import numpy as np
import pytest

from degenlab import GridSpec, ProblemSpec, WeightSpec, get_case, solve_problem


def make_problem(case, nodes, eps=0.0, bounds=(-1.0, 1.0), **kw):
    """Standard problem wiring: thin-set data psi, exact outer data."""
    return ProblemSpec(
        grid=GridSpec(case.d, case.n, nodes, bounds=bounds),
        weight=WeightSpec(case.a, case.n),
        A=case.A,
        f=case.f,
        F=case.F,
        psi=case.psi,
        g=case.u,
        eps=eps,
        **kw,
    )


@pytest.fixture(scope="session")
def solve_cache():
    """Memoized manufactured-case solves shared across expensive tests."""
    cache = {}

    def get(name, d, n, a, nodes, eps=0.0, bounds=(-1.0, 1.0)):
        key = (name, d, n, a, nodes, eps, bounds)
        if key not in cache:
            case = get_case(name, d, n, a)
            cache[key] = (case, solve_problem(make_problem(case, nodes, eps, bounds)))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(42)
