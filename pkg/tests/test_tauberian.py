import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from wlab import fields as F
from wlab.errors import BandIncompleteError, DomainError
from wlab.schrodgrid import GridSpec, discretize, eigensolve_below
from wlab.smooth import BumpFunction
from wlab.specfun import GammaFunctional, make_test_g
from wlab.tauberian import build_mollifier, chi_hbar, smooth_g, tauberian_gap
from wlab.weylquant import fit_slope


@pytest.fixture(scope="module", params=[0.5, 1.0, 2.0])
def mollifier(request):
    return build_mollifier(request.param)


def _mass(m):
    # independent oracle: adaptive quadrature over lobes of the time-side kernel
    R = m.tail_radius(1e-14)
    edges = np.linspace(0.0, R, int(R * m.a / np.pi) + 2)
    total = sum(integrate.quad(m.chi1, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
                for a, b in zip(edges[:-1], edges[1:]))
    return 2.0 * total


def test_unit_mass(mollifier):
    assert _mass(mollifier) == pytest.approx(1.0, abs=1e-8)
    assert mollifier.chi_hat(0.0)[0] == pytest.approx(1.0, abs=1e-12)


def test_nonnegative(mollifier):
    t = np.linspace(-400, 400, 800_001)
    assert mollifier.chi1(t).min() >= -1e-12


def test_fourier_support(mollifier):
    T = mollifier.T
    s = np.linspace(T, 3 * T, 21)
    assert np.max(np.abs(mollifier.fourier_audit(s))) <= 1e-10
    assert np.all(mollifier.chi_hat(s) == 0)


def test_two_transforms_agree(mollifier):
    s = np.linspace(-0.9, 0.9, 7) * mollifier.T
    np.testing.assert_allclose(mollifier.chi_hat(s), mollifier.fourier_audit(s), atol=1e-9)
    np.testing.assert_allclose(mollifier.chi_hat(s), mollifier.chi_hat(-s), atol=1e-15)


def test_lower_bound_near_zero(mollifier):
    m = mollifier
    assert 0 < m.T1 < m.T and m.c > 0
    assert m.chi1(np.linspace(-m.T1, m.T1, 5001)).min() >= m.c * (1 - 1e-12)


def test_build_rejects_nonpositive_T():
    with pytest.raises(DomainError):
        build_mollifier(0.0)
    with pytest.raises(DomainError):
        build_mollifier(1.0).chi_hbar(0.0, 1.0)


# -- chi_hbar

def test_chi_hbar_at_zero():
    m = build_mollifier(1.0)
    assert chi_hbar(m, 0.1, 0.0) == pytest.approx(m.chi1(0.0) / 0.1, rel=1e-15)


@settings(max_examples=5)
@given(st.floats(0.05, 2.0))
def test_chi_hbar_unit_mass(hbar):
    m = build_mollifier(1.0)
    R = m.tail_radius(1e-14) * hbar
    edges = np.linspace(0.0, R, int(R * m.a / (np.pi * hbar)) + 2)
    mass = 2 * sum(integrate.quad(lambda t: m.chi_hbar(hbar, t), a, b, epsabs=0, epsrel=1e-12)[0]
                   for a, b in zip(edges[:-1], edges[1:]))
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_half_width_scales_with_hbar():
    m = build_mollifier(1.0)

    def half_width(h):
        peak = m.chi_hbar(h, 0.0)
        t = np.linspace(0.0, 20.0 * h, 20001)
        i = int(np.argmax(m.chi_hbar(h, t) < 0.5 * peak))
        return optimize.brentq(lambda s: m.chi_hbar(h, s) - 0.5 * peak, t[i - 1], t[i], xtol=1e-15)

    assert half_width(0.2) / half_width(0.1) == pytest.approx(2.0, abs=1e-6)


# -- smooth_g

def test_smooth_constant():
    m = build_mollifier(1.0)

    class Const:
        breakpoints = ()

        def __call__(self, t):
            return np.full_like(np.asarray(t, float), 3.0)

    out = smooth_g(Const(), m, 0.1)(np.linspace(-2, 2, 9))
    np.testing.assert_allclose(out, 3.0, atol=1e-10)


def test_vertical_shift_commutes():
    m = build_mollifier(1.0)
    g = GammaFunctional(1.0)

    class Shifted:
        breakpoints = (0.0,)

        def __call__(self, t):
            return g(t) + 0.7

    t = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(smooth_g(Shifted(), m, 0.1)(t), smooth_g(g, m, 0.1)(t) + 0.7, atol=1e-10)


def test_indicator_transition_window():
    m = build_mollifier(1.0)
    g = GammaFunctional(0.0)
    for h in (0.1, 0.05):
        gh = smooth_g(g, m, h)
        # the transition happens within a window proportional to hbar
        assert gh(np.array([-40 * h]))[0] > 0.99 and gh(np.array([40 * h]))[0] < 0.01
        assert gh(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-8)


def test_riesz_smoothing_error_is_order_hbar():
    m = build_mollifier(1.0)
    g = make_test_g(1.0, (-2.0, 0.0))
    hs = (0.1, 0.05, 0.025)
    t = np.linspace(-1.5, 0.5, 81)
    far = np.linspace(-1.5, -0.5, 41)
    kink, glob, smooth = [], [], []
    for h in hs:
        gh = smooth_g(g, m, h)
        kink.append(abs(gh(np.array([0.0]))[0]))
        glob.append(np.max(np.abs(gh(t) - g(t))) / h)
        smooth.append(np.max(np.abs(gh(far) - g(far))))
    # at the kink the error is hbar times the first absolute moment of chi_1
    assert kink[0] / kink[1] == pytest.approx(2.0, rel=0.02)
    assert kink[1] / kink[2] == pytest.approx(2.0, rel=0.02)
    assert glob[0] >= glob[1] >= glob[2]
    # away from the kink the kernel's vanishing first moment gives a faster rate
    assert np.log2(smooth[1] / smooth[2]) > 1.5


# -- Tauberian gap

@pytest.fixture(scope="module")
def well_spectra():
    from wlab.potentials import make_library_potential
    V = make_library_potential("gaussian_well", d=1)
    out = {}
    for h in (0.2, 0.1, 0.05, 0.025):
        N = 1 << int(np.ceil(np.log2(2 * 6.0 * 4 * np.sqrt(1.2) / h)))
        out[h] = eigensolve_below(discretize(V, None, 0, h, GridSpec(1, 6.0, N), Lambda=0.2), 0.2)
    return out


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_gap_rate(well_spectra, gamma):
    m = build_mollifier(1.0)
    f = BumpFunction(-0.15, 0.3)
    phi = F.RadialBump([0.0], 1.0)
    hs = sorted(well_spectra, reverse=True)
    ratio = [tauberian_gap(well_spectra[h], GammaFunctional(gamma), f, phi, m, h)["ratio"] for h in hs]
    assert fit_slope(hs, ratio) >= 1 + gamma - 0.2


def test_gap_zero_localizer(well_spectra):
    out = tauberian_gap(well_spectra[0.2], GammaFunctional(0.0), BumpFunction(-0.15, 0.3),
                        F.RadialBump([100.0], 1.0), build_mollifier(1.0), 0.2)
    assert out["gap_trace_norm"] == 0.0 and out["z_bound"] == 0.0


def test_gap_smooth_g_near_floor(well_spectra):
    class Smooth:
        breakpoints = ()

        def __call__(self, t):
            return np.cos(0.05 * np.asarray(t, float))

    h = 0.025
    out = tauberian_gap(well_spectra[h], Smooth(), BumpFunction(-0.15, 0.3), F.RadialBump([0.0], 1.0),
                        build_mollifier(1.0), h)
    # g'' ~ 2.5e-3, so the smoothing error is O(hbar^2 g'') against O(1) weights
    assert out["ratio"] <= 1e-5


def test_gap_band_check(well_spectra):
    with pytest.raises(BandIncompleteError):
        tauberian_gap(well_spectra[0.2], GammaFunctional(0.0), BumpFunction(0.1, 0.3), F.RadialBump([0.0], 1.0),
                      build_mollifier(1.0), 0.2)
