import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("wlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("wlab")


@pytest.fixture(scope="session")
def gaussian_1d():
    from wlab.potentials import make_library_potential
    return make_library_potential("gaussian_well", d=1)


@pytest.fixture(scope="session")
def holder_1d():
    from wlab.potentials import make_library_potential
    return make_library_potential("holder_well", {"kappa": 0.5}, d=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cosine_gaussian_symbol(grid, tail=5.0):
    """cos(k x) exp(-p^2 / 2 sp^2) with exact derivatives up to third order.

    ``k`` is the lowest torus mode and ``sp`` is tied to the grid's momentum
    range at hbar = 0.05, so the symbol stays resolved down to that hbar.
    """
    from wlab.weylquant import RoughSymbol
    k = np.pi / grid.L
    sp = grid.p_max(0.05) / tail

    def value(x, p):
        return np.cos(k * x[:, 0]) * np.exp(-p[:, 0] ** 2 / (2 * sp**2))

    def deriv(x, p, alpha, beta):
        c, s = np.cos(k * x[:, 0]), np.sin(k * x[:, 0])
        cx = [c, -k * s, -k * k * c, k**3 * s][alpha[0]]
        u = p[:, 0]
        e = np.exp(-u**2 / (2 * sp**2))
        gp = [e, -u / sp**2 * e, (u * u - sp * sp) / sp**4 * e, -(u**3 - 3 * sp * sp * u) / sp**6 * e][beta[0]]
        return cx * gp

    return RoughSymbol(1, value, deriv, tail * sp)


@pytest.fixture
def cos_gauss():
    return cosine_gaussian_symbol


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
