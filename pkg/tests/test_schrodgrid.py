import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab import fields as F
from wlab.errors import BandIncompleteError, ConfigurationError, NoncriticalError, PreconditionError
from wlab.potentials import PotentialModel, gauge_transform, make_library_potential, make_vector_potential, mollify
from wlab.regions import Box
from wlab.schrodgrid import (GridSpec, discretize, eigensolve_below, function_of, inertia_count, load_matrix,
                             local_agreement_norm, localization_norms, localized_trace, make_local_pair,
                             mollified_operator_gap, operator_lipschitz_constant, smoothed_density,
                             surface_density, weyl_count)
from wlab.schrodgrid.spectra import phase_volume
from wlab.smooth import BumpFunction, Plateau1D
from wlab.tauberian import build_mollifier
from wlab.weylquant import fit_slope


def const(d, c):
    return PotentialModel("constant", F.ConstantField(d, c), 1.0, np.inf)


# -- assembly

@pytest.mark.parametrize("boundary", ["dirichlet", "periodic"])
def test_free_spectrum_is_lattice_dispersion(boundary):
    g = GridSpec(1, 2.0, 32, boundary)
    hbar = 0.5
    w = la.eigvalsh(discretize(const(1, 0.0), None, 0, hbar, g, check=False).dense())
    k = np.arange(1, 32) if boundary == "dirichlet" else np.arange(32)
    arg = k * np.pi / (2 * 32) if boundary == "dirichlet" else k * np.pi / 32
    expected = np.sort((2 * hbar / g.h) ** 2 * np.sin(arg) ** 2)
    np.testing.assert_allclose(w, expected, atol=1e-10)


def test_constant_shift():
    g = GridSpec(2, 1.0, 8)
    A = discretize(const(2, 0.0), None, 0, 1.0, g, check=False).dense()
    B = discretize(const(2, -0.7), None, 0, 1.0, g, check=False).dense()
    np.testing.assert_allclose(B - A, -0.7 * np.eye(len(A)), atol=1e-14)


def test_magnetic_operator_hermitian():
    g = GridSpec(2, 3.0, 24, "periodic")
    a = make_vector_potential("swirl", {"B": 1.0, "radius": 2.0}, d=2)
    H = discretize(make_library_potential("gaussian_well", d=2), a, 1.0, 0.5, g, check=False)
    assert H.is_complex
    assert H.hermitian_defect() <= 1e-14


def test_gauge_covariance():
    g = GridSpec(2, 4.0, 32, "periodic")
    hbar, mu = 0.5, 1.0
    V = make_library_potential("gaussian_well", d=2)
    a = make_vector_potential("swirl", {"B": 1.0, "radius": 2.0}, d=2)
    chi = F.RadialBump(np.zeros(2), 1.5, amp=0.8)
    H = discretize(V, a, mu, hbar, g, check=False).dense()
    Hc = discretize(V, gauge_transform(a, chi), mu, hbar, g, check=False).dense()
    G = np.exp(1j * mu * chi.value(g.points()) / hbar)
    assert np.max(np.abs(Hc - (G[:, None] * H * G.conj()[None, :]))) <= 1e-12


def test_resolution_gate():
    V = make_library_potential("gaussian_well", d=1)
    with pytest.raises(ConfigurationError):
        discretize(V, None, 0, 0.05, GridSpec(1, 4.0, 64))
    # h = hbar / (4 p_max) exactly is admissible
    discretize(V, None, 0, 0.5, GridSpec(1, 4.0, 64), Lambda=0.0)


def test_dump_roundtrip(tmp_path):
    g = GridSpec(1, 2.0, 16)
    H = discretize(const(1, -0.1), None, 0, 0.4, g, check=False)
    H.dump(tmp_path / "m.bin")
    head, M = load_matrix(tmp_path / "m.bin")
    assert head == {"d": 1, "N": 16, "hbar": 0.4, "mu": 0.0}
    np.testing.assert_array_equal(M, H.dense())


# -- eigensolvers

def test_dense_and_iterative_agree(gaussian_1d):
    g = GridSpec(2, 3.0, 60)
    V = make_library_potential("gaussian_well", d=2)
    H = discretize(V, None, 0, 0.2, g, check=False)
    dense = eigensolve_below(H, 0.0)
    it = eigensolve_below(H, 0.0, dense_limit=100)
    assert it.method == "lobpcg-amg" and dense.method == "dense"
    assert it.count == dense.count == dense.inertia == it.inertia
    np.testing.assert_allclose(it.eigenvalues, dense.eigenvalues, atol=1e-7)


def test_complex_iterative_path():
    g = GridSpec(2, 3.0, 48)
    V = make_library_potential("gaussian_well", d=2)
    a = make_vector_potential("swirl", {"B": 1.0}, d=2)
    H = discretize(V, a, 1.0, 0.3, g, check=False)
    dense = eigensolve_below(H, 0.0)
    it = eigensolve_below(H, 0.0, dense_limit=100)
    assert it.method == "shift-invert"
    np.testing.assert_allclose(it.eigenvalues, dense.eigenvalues, atol=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.floats(-2, 2))
def test_inertia_matches_eigvalsh(seed, lam):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((12, 12))
    A = A + A.T
    expected = int(np.sum(la.eigvalsh(A) < lam))
    assert inertia_count(None, lam, dense=A) == expected
    import scipy.sparse as sp
    assert inertia_count(sp.csc_matrix(A), lam) == expected


def test_weyl_count_tracks_eigenvalue_count(gaussian_1d):
    g = GridSpec(1, 5.0, 2048)
    H = discretize(gaussian_1d, None, 0, 0.02, g)
    spec = eigensolve_below(H, 0.0)
    assert spec.count == pytest.approx(weyl_count(H, 0.0), abs=2)


def test_localized_trace_counts(gaussian_1d):
    g = GridSpec(1, 5.0, 512)
    spec = eigensolve_below(discretize(gaussian_1d, None, 0, 0.1, g), 0.0)
    one = F.ConstantField(1, 1.0)
    assert localized_trace(spec, one, 0.0) == pytest.approx(spec.count, rel=1e-12)
    assert localized_trace(spec, one, 1.0) == pytest.approx(np.sum(-spec.eigenvalues), rel=1e-12)
    spec_low = eigensolve_below(discretize(gaussian_1d, None, 0, 0.1, g), -0.5)
    with pytest.raises(BandIncompleteError):
        localized_trace(spec_low, one, 0.0)


# -- spectral functionals

def _energy_window(E):
    return np.exp(-(E + 0.5) ** 2 / 0.18) * Plateau1D(-3.5, 2.5, 1.0)(E)


def test_localization_decay():
    V = make_library_potential("gaussian_well", d=1)
    hs = [0.4, 0.2, 0.1]
    vals = []
    for h in hs:
        N = 1 << int(np.ceil(np.log2(2 * 5 * 4 / h)))
        H = discretize(V, None, 0, h, GridSpec(1, 5.0, N))
        vals.append(localization_norms(H, _energy_window, F.RadialBump([-1.5], 0.5),
                                       F.RadialBump([1.5], 0.5))["trace_norm"])
    assert vals[0] > vals[1] > vals[2]
    assert fit_slope(hs, vals) > 4


def test_localization_guards():
    H = discretize(const(1, 0.0), None, 0, 1.0, GridSpec(1, 2.0, 16), check=False)
    with pytest.raises(PreconditionError):
        localization_norms(H, np.exp, F.RadialBump([0.0], 1.0), F.RadialBump([0.5], 1.0))
    far = F.RadialBump([10.0], 0.5)
    assert localization_norms(H, np.exp, far, F.RadialBump([0.0], 1.0))["trace_norm"] == 0.0


def test_local_pair_and_agreement():
    V = make_library_potential("gaussian_well", d=1)
    omega = Box((-1.5,), (1.5,))
    hs = [0.4, 0.2, 0.1]
    vals = []
    for h in hs:
        N = 1 << int(np.ceil(np.log2(2 * 5 * 4 / h)))
        pair = make_local_pair(V, None, 0, h, GridSpec(1, 5.0, N), omega, tamper={"shift": 5.0, "buffer": 1.0})
        assert pair.rows_agree()
        vals.append(local_agreement_norm(pair, _energy_window, F.RadialBump([0.0], 1.0)))
    assert fit_slope(hs, vals) > 4


def test_local_pair_untampered_is_identical():
    V = make_library_potential("gaussian_well", d=1)
    pair = make_local_pair(V, None, 0, 0.4, GridSpec(1, 5.0, 128), Box((-1.0,), (1.0,)))
    assert local_agreement_norm(pair, _energy_window, F.RadialBump([0.0], 1.0)) == 0.0


def test_tamper_inside_omega_rejected():
    V = make_library_potential("gaussian_well", d=1)
    with pytest.raises(PreconditionError):
        make_local_pair(V, None, 0, 0.4, GridSpec(1, 5.0, 128), Box((-1.0,), (1.0,)),
                        tamper={"shift": 1.0, "keep": Box((-0.5,), (0.5,))})


def test_mollified_gap_bound(holder_1d):
    g = GridSpec(1, 4.0, 256)
    f = BumpFunction(-0.5, 0.4)
    H = discretize(holder_1d, None, 0, 0.2, g)
    for eps in (0.25, 0.125):
        He = discretize(mollify(holder_1d, eps), None, 0, 0.2, g)
        out = mollified_operator_gap(H, He, f, F.RadialBump([0.0], 2.0), f_support=f.support)
        assert out["op_norm_diff"] <= out["op_bound"]
        assert out["trace_norm_diff"] > 0


def test_mollified_gap_requires_same_grid(holder_1d):
    f = BumpFunction(-0.5, 0.4)
    H1 = discretize(holder_1d, None, 0, 0.2, GridSpec(1, 4.0, 512))
    H2 = discretize(holder_1d, None, 0, 0.2, GridSpec(1, 4.0, 256))
    with pytest.raises(ConfigurationError):
        mollified_operator_gap(H1, H2, f, F.RadialBump([0.0], 2.0))


@settings(max_examples=15)
@given(st.integers(0, 2**31))
def test_operator_lipschitz_bound(seed):
    f = BumpFunction(0.0, 1.0)
    C = operator_lipschitz_constant(f, *f.support)
    assert C >= np.max(np.abs(f.derivative(np.linspace(-1, 1, 2001), 1))) * (1 - 1e-6)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 10))
    A = 0.3 * (A + A.T)
    E = rng.standard_normal((10, 10))
    B = A + 0.05 * (E + E.T)
    lhs = la.norm(function_of(A, f) - function_of(B, f), 2)
    assert lhs <= C * la.norm(A - B, 2) * (1 + 1e-9)


def test_phase_volume_constant_potential():
    # |B_1| (s - c)^(d/2) int phi for a constant potential
    phi = F.RadialBump(np.zeros(2), 1.0)
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    from wlab.quadrature import nested_quadrature
    mass = nested_quadrature(phi, *box, rtol=1e-12)
    assert phase_volume(const(2, -1.0), phi, 0.5, 2, box) == pytest.approx(np.pi * 1.5 * mass, rel=1e-10)
    assert surface_density(const(2, -1.0), phi, 0.5, 2, box) == pytest.approx(np.pi * mass, rel=1e-8)


def test_smoothed_density_ratio(gaussian_1d):
    hbar = 0.05
    g = GridSpec(1, 4.0, 1024)
    spec = eigensolve_below(discretize(gaussian_1d, None, 0, hbar, g, Lambda=0.6), 0.6)
    f = BumpFunction(0.0, 0.5)
    out = smoothed_density(spec, F.RadialBump([0.0], 1.0), f, build_mollifier(2.0), hbar, 0.0, c=0.3,
                           window=(-0.1, 0.0, 0.1))
    assert out.ratio == pytest.approx(1.0, abs=0.1)


def test_smoothed_density_guards(gaussian_1d):
    hbar = 0.1
    g = GridSpec(1, 4.0, 512)
    spec = eigensolve_below(discretize(gaussian_1d, None, 0, hbar, g), 0.0)
    phi = F.RadialBump([0.0], 1.0)
    chi = build_mollifier(1.0)
    with pytest.raises(BandIncompleteError):
        smoothed_density(spec, phi, BumpFunction(0.0, 0.5), chi, hbar, -0.2)
    with pytest.raises(NoncriticalError):
        # the well bottom -1 sits on supp phi
        smoothed_density(spec, phi, BumpFunction(-1.0, 0.5), chi, hbar, -1.0, c=0.5)
