import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab import multiscale as ms
from wlab.errors import ConfigurationError, DomainError, PreconditionError
from wlab.potentials import make_library_potential
from wlab.regions import Ball, Box


class Linear:
    """``V = s x_1`` with exact derivatives."""

    def __init__(self, d, s=0.25):
        self.d, self.s = d, s

    def value(self, x):
        return self.s * np.atleast_2d(x)[:, 0]

    def gradient(self, x):
        x = np.atleast_2d(x)
        g = np.zeros_like(x, dtype=float)
        g[:, 0] = self.s
        return g

    def hessian(self, x):
        x = np.atleast_2d(x)
        return np.zeros((len(x), self.d, self.d))


@pytest.fixture(scope="module")
def cover_2d():
    V = make_library_potential("gaussian_well", d=2)
    region = Ball((0.0, 0.0), 1.5)
    hbar = 0.2
    scale = ms.calibrate_scale(V, hbar, region, 11.0)
    cover = ms.partition_of_unity(ms.greedy_cover(region, scale))
    return V, region, hbar, scale, cover


# -- scale functions

@settings(max_examples=30)
@given(st.floats(0.0, 0.124), st.integers(1, 3))
def test_overlap_bound(rho, d):
    N = ms.overlap_bound(rho, d)
    assert 5**d <= N <= 2 * 6**d


def test_overlap_bound_domain():
    with pytest.raises(DomainError):
        ms.overlap_bound(1.0, 2)


def test_large_mu_scale():
    s = ms.large_mu_scale(4.0, 0.5, 5.5)
    x = np.zeros((3, 2))
    np.testing.assert_allclose(s.l(x), 0.5 * 0.5 / 4.0)
    np.testing.assert_array_equal(s.f(x), 1.0)
    assert s.rho == 0.0 and s.mode == "large_mu"
    with pytest.raises(DomainError):
        ms.large_mu_scale(0.1, 0.5, 11.0)
    with pytest.raises(DomainError):
        ms.large_mu_scale(2.0, 1.5, 11.0)


def test_calibrated_scale(cover_2d):
    V, region, hbar, scale, _ = cover_2d
    assert scale.rho < 1 / 8
    assert scale.l_max <= min(11.0 / 11.0, 1.0)
    # A comes from doubling 2^-10
    assert np.log2(scale.A) == int(np.log2(scale.A))
    x = np.array([[0.3, -0.2]])
    v = V.value(x)
    assert scale.l(x)[0] == pytest.approx(np.sqrt(v[0] ** 2 + hbar ** (4 / 3)) / scale.A, rel=1e-14)
    assert scale.f(x)[0] == pytest.approx(np.sqrt(scale.l(x)[0]), rel=1e-14)


def test_calibrate_rejects_buffer():
    with pytest.raises(DomainError):
        ms.calibrate_scale(Linear(1), 0.1, Box((-1.0,), (1.0,)), 0.0)


def test_gradient_oracle_matches_differences(cover_2d):
    _, _, _, scale, _ = cover_2d
    x = np.array([[0.4, 0.7]])
    h = 1e-6
    fd = [(scale.l(x + h * e) - scale.l(x - h * e))[0] / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(scale.grad_l(x)[0], fd, rtol=1e-6)


# -- admissibility grid and cover

def test_admissibility_spacing():
    scale = ms.large_mu_scale(2.0, 0.5, 11.0)
    region = Box((0.0, 0.0), (1.0, 1.0))
    pts = ms.admissibility_grid(region, scale.l)
    assert np.all(region.contains(pts))
    step = np.min(np.diff(np.unique(pts[:, 0])))
    assert step <= scale.l_max / 8 * (1 + 1e-12)
    with pytest.raises(ConfigurationError):
        ms.admissibility_grid(region, scale.l, max_points=10)


def test_cover_invariants(cover_2d):
    _, region, _, scale, cover = cover_2d
    assert cover.overlap <= cover.overlap_bound
    rng = np.random.default_rng(3)
    x = rng.uniform(-1.5, 1.5, (4000, 2))
    x = x[region.contains(x)]
    assert np.all(cover.multiplicity(x) >= 1)
    np.testing.assert_allclose(cover.scales, scale.l(cover.centers))
    np.testing.assert_allclose(cover.amplitudes, np.sqrt(cover.scales))


def test_cover_rejects_fast_scale():
    s = ms.large_mu_scale(2.0, 0.5, 11.0)
    s.rho = 0.2
    with pytest.raises(PreconditionError):
        ms.greedy_cover(Box((0.0,), (1.0,)), s)


def test_partition_of_unity(cover_2d):
    *_, cover = cover_2d
    c = cover.constants
    assert c["sum_dev"] <= 1e-10 and c["support_ok"]
    assert all(np.isfinite(c[k]) and c[k] > 0 for k in ("C1", "C2", "C3"))
    k = cover.size // 2
    far = cover.centers[k] + 1.01 * cover.scales[k] * np.array([[1.0, 0.0], [0.0, -1.0]])
    assert np.all(cover.phi(k, far) == 0)


def test_partition_derivative_constants_scale_free():
    # halving a constant scale must leave the l_k-normalized constants unchanged
    region = Box((0.0,), (2.0,))
    consts = []
    for mu in (2.0, 4.0):
        cover = ms.partition_of_unity(ms.greedy_cover(region, ms.large_mu_scale(mu, 0.5, 11.0)))
        consts.append([cover.constants[k] for k in ("C1", "C2")])
    np.testing.assert_allclose(consts[0], consts[1], rtol=0.25)


def test_slow_variation(cover_2d):
    *_, cover = cover_2d
    sv = ms.slow_variation_audit(cover)
    assert sv["holds"]
    assert sv["lower"] <= sv["min_ratio"] <= 1 <= sv["max_ratio"] <= sv["upper"]


def test_cover_json(cover_2d):
    *_, hbar, _, cover = cover_2d
    rows = json.loads(cover.to_json(hbar, 0.0))
    assert len(rows) == cover.size
    r = rows[0]
    assert set(r) == {"k", "x_k", "l_k", "f_k", "hbar_k", "mu_k", "overlap"}
    assert r["hbar_k"] == pytest.approx(hbar / (r["l_k"] * r["f_k"]))


# -- rescaling

def test_rescale_parameters(cover_2d):
    V, _, hbar, scale, cover = cover_2d
    k = 0
    prob = ms.rescale(V, None, None, cover.centers[k], cover.scales[k], cover.amplitudes[k], hbar, 0.0,
                      scale=scale)
    lk, fk = cover.scales[k], cover.amplitudes[k]
    assert prob.hbar_k == pytest.approx(hbar / (lk * fk))
    assert all(prob.checks.values())
    y = np.array([[0.5, -0.5]])
    assert prob.V(y)[0] == pytest.approx(V.value(lk * y + cover.centers[k])[0] / fk**2)


def test_rescale_magnetic_and_mu():
    V = Linear(2)
    from wlab.potentials import make_vector_potential
    a = make_vector_potential("swirl", {"B": 1.0}, d=2)
    prob = ms.rescale(V, a.value, None, np.zeros(2), 0.1, 1.0, 0.1, 2.0, mu0=0.5)
    assert prob.mu_k == pytest.approx(0.2)
    assert prob.a(np.array([[1.0, 0.0]]))[0] == pytest.approx(a.value(np.array([[0.1, 0.0]]))[0] / 0.1)
    with pytest.raises(PreconditionError):
        ms.rescale(V, None, None, np.zeros(2), 1.0, 1.0, 0.1, 2.0, mu0=0.5)


def test_rescale_rejects_uncalibrated(cover_2d):
    V, _, hbar, scale, cover = cover_2d
    bad = ms.ScaleFunction(scale.l, scale.grad_l, scale.f, scale.rho, scale.A / 64, scale.mode,
                           scale.epsilon_buffer, hbar)
    with pytest.raises(PreconditionError):
        ms.rescale(V, None, None, cover.centers[0], cover.scales[0], cover.amplitudes[0], hbar, 0.0, scale=bad)


# -- error budget

def test_error_budget_sum(cover_2d):
    *_, hbar, _, cover = cover_2d
    for gamma in (0.0, 1.0):
        out = ms.error_budget(cover, hbar, gamma, 2)
        hk = hbar / (cover.scales * cover.amplitudes)
        assert out["sum"] == pytest.approx(np.sum(hk ** (gamma - 1) * cover.amplitudes ** (2 * gamma)))
        assert out["ratio"] == pytest.approx(out["sum"] / hbar ** (gamma - 1))
        # the sum is a Riemann sum of the integral with cell volume ~ l^d
        assert 0.1 < out["sum"] / out["integral_bound"] < 10


def test_budget_dichotomy_3d():
    region = Box((-1.0, -0.25, -0.25), (1.0, 0.25, 0.25))
    V = Linear(3)
    ratios = {0.0: [], 1.0: []}
    for hbar in (0.2, 0.1):
        cover = ms.greedy_cover(region, ms.calibrate_scale(V, hbar, region, 11.0))
        for gamma in ratios:
            ratios[gamma].append(ms.error_budget(cover, hbar, gamma, 3)["ratio"])
    assert ratios[1.0][1] > ratios[1.0][0]
    assert max(ratios[0.0]) / min(ratios[0.0]) < 4
