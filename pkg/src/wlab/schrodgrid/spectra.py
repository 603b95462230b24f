"""Eigenpairs below a cutoff and matrix-level spectral functionals."""
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.spatial import cKDTree

from ..errors import BandIncompleteError, ConfigurationError, ConvergenceError, NoncriticalError, PreconditionError
from ..potentials import check_noncritical
from ..quadrature import nested_quadrature
from ..regions import Box
from ..specfun import eval_g_gamma, sphere_area, weyl_constant

DENSE_LIMIT = 4096


@dataclass
class SpectralData:
    """Eigenpairs with eigenvalue at most ``Lambda``.

    Attributes
    ----------
    eigenvalues : ndarray
        Ascending.
    eigenvectors : ndarray
        Columns orthonormal in the plain l2 inner product of grid values.
    residual_bound : float
        Max of ``||H psi - lambda psi||`` over the returned pairs.
    inertia : int or None
        Number of eigenvalues below ``Lambda`` from a factorization of
        ``H - Lambda``, or None when no factorization was feasible.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    Lambda: float
    residual_bound: float
    inertia: Optional[int]
    operator: object
    method: str

    @property
    def count(self):
        return len(self.eigenvalues)

    def weights(self, phi):
        """``<psi_n, phi psi_n>`` for every eigenvector, phi acting by multiplication."""
        vals = _field_values(phi, self.operator.grid.points())
        return (np.abs(self.eigenvectors) ** 2).T @ vals


def _field_values(f, pts):
    if isinstance(f, np.ndarray):
        return f.astype(float)
    return np.asarray(f.value(pts) if hasattr(f, "value") else f(pts), dtype=float)


def inertia_count(H, Lambda, dense=None):
    """Number of eigenvalues of ``H`` below ``Lambda`` by Sylvester's law.

    Dense matrices use a Bunch-Kaufman LDL^T.  Sparse matrices use a sparse
    LU with symmetric ordering and diagonal pivoting, whose ``U`` diagonal is
    the ``D`` of an LDL^T factorization of the permuted matrix.
    """
    if dense is not None:
        A = dense - Lambda * np.eye(len(dense))
        _, D, _ = la.ldl(A, hermitian=True)
        return int(np.sum(la.eigvalsh(D) < 0)) if D.shape[0] <= 64 else _block_negatives(D)
    A = sp.csc_matrix(H - Lambda * sp.identity(H.shape[0], format="csc"))
    lu = sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    if np.any(lu.perm_r != lu.perm_c):
        raise ConvergenceError("sparse factorization left the diagonal; inertia unavailable")
    return int(np.sum(lu.U.diagonal().real < 0))


def _block_negatives(D):
    # D is block diagonal with 1x1 and 2x2 blocks
    n, i, neg = D.shape[0], 0, 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0:
            neg += int(np.sum(np.linalg.eigvalsh(D[i:i + 2, i:i + 2]) < 0))
            i += 2
        else:
            neg += int(D[i, i].real < 0)
            i += 1
    return neg


def weyl_count(H, Lambda):
    """Phase-space estimate of the number of eigenvalues below ``Lambda``."""
    g = H.grid
    v = np.maximum(Lambda - H.potential, 0.0)
    return weyl_constant(0.0, g.d) * H.hbar ** (-g.d) * g.cell_volume * float(np.sum(v ** (g.d / 2.0)))


def eigensolve_below(H, Lambda, tol=1e-8, dense_limit=DENSE_LIMIT, inertia="auto", seed=0):
    """All eigenpairs of ``H`` with eigenvalue at most ``Lambda``.

    Parameters
    ----------
    H : GridOperator
    Lambda : float
    tol : float
        Residual tolerance, relative to ``max(1, |lambda|)``.
    dense_limit : int
        Matrices up to this size use LAPACK; larger ones LOBPCG with an
        algebraic multigrid preconditioner (real) or shift-invert Lanczos (complex).
    inertia : {"auto", True, False}
        Completeness audit by factorization; "auto" skips it above 10^5 unknowns.
    """
    n = H.n
    if n <= dense_limit:
        A = H.dense()
        w, v = la.eigh(A, subset_by_value=(-np.inf, Lambda), driver="evr")
        res = np.linalg.norm(A @ v - v * w, axis=0) if len(w) else np.zeros(0)
        count = inertia_count(None, Lambda, dense=A) if inertia else None
        method = "dense"
    else:
        w, v, res, method = _iterative(H, Lambda, tol, seed)
        count = None
        if inertia is True or (inertia == "auto" and n <= 100_000):
            count = inertia_count(H.matrix, Lambda)
    scale = np.maximum(1.0, np.abs(w))
    bound = float(np.max(res)) if len(res) else 0.0
    if len(res) and np.any(res > tol * scale):
        raise ConvergenceError(f"residuals up to {bound:.3g} exceed tol {tol:.3g}", residuals=res)
    if count is not None and count != len(w):
        # an eigenvalue exactly at Lambda counts for the solver but not for the inertia
        at_cut = int(np.sum(np.abs(w - Lambda) <= tol * scale))
        if not (count <= len(w) <= count + at_cut):
            raise BandIncompleteError(f"solver returned {len(w)} eigenvalues, inertia counts {count}",
                                      window=(float(w[-1]) if len(w) else -np.inf, Lambda))
    return SpectralData(w, v, float(Lambda), bound, count, H, method)


def _iterative(H, Lambda, tol, seed):
    rng = np.random.default_rng(seed)
    k = int(1.3 * weyl_count(H, Lambda)) + 8
    if H.is_complex:
        return _shift_invert(H, Lambda, k, tol)
    import pyamg

    depth = max(0.0, -float(H.potential.min()))
    A = sp.csr_matrix(H.matrix + (1.05 * depth + 1e-3) * sp.identity(H.n))
    M = pyamg.smoothed_aggregation_solver(A).aspreconditioner()
    X = rng.standard_normal((H.n, k))
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v = sla.lobpcg(H.matrix, X, M=M, largest=False, tol=tol, maxiter=400)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        if w[-1] > Lambda or k >= H.n // 2:
            break
        # block too small to reach Lambda: reuse it and grow
        extra = int(0.5 * k) + 8
        X = np.hstack([v, rng.standard_normal((H.n, extra))])
        k += extra
    keep = w <= Lambda
    w, v = w[keep], v[:, keep]
    res = np.linalg.norm(H.matrix @ v - v * w, axis=0)
    return w, v, res, "lobpcg-amg"


def _shift_invert(H, Lambda, k, tol):
    sigma = float(H.potential.min()) - 1.0
    while True:
        k = min(k, H.n - 2)
        w, v = sla.eigsh(H.matrix.tocsc(), k=k, sigma=sigma, which="LM", tol=tol * 1e-2)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        if w[-1] > Lambda or k >= H.n - 2:
            break
        k = int(1.5 * k) + 8
    keep = w <= Lambda
    w, v = w[keep], v[:, keep]
    res = np.linalg.norm(H.matrix @ v - v * w, axis=0)
    return w, v, res, "shift-invert"


def localized_trace(spec, phi, gamma):
    """``sum_n g_gamma(lambda_n) <psi_n, phi psi_n>``; needs every eigenvalue <= 0."""
    if spec.Lambda < 0:
        raise BandIncompleteError("eigenpairs stop below 0", window=(spec.Lambda, 0.0))
    g = eval_g_gamma(gamma, spec.eigenvalues)
    return float(np.sum(g * spec.weights(phi)))


def function_of(H, f):
    """Dense ``f(H)`` from the full eigendecomposition (reference calculus)."""
    w, v = la.eigh(H.dense() if hasattr(H, "dense") else np.asarray(H))
    return (v * np.asarray(f(w))) @ v.conj().T


def _trace_norm(M):
    if M.size == 0:
        return 0.0
    return float(np.sum(la.svdvals(M)))


def _support_nodes(vals):
    return np.nonzero(np.abs(vals) > 0)[0]


def localization_norms(H, f, phi1, phi2, require_separation=True):
    """Trace norm of ``phi1 f(H) phi2`` with both localizers acting by multiplication."""
    pts = H.grid.points()
    v1, v2 = _field_values(phi1, pts), _field_values(phi2, pts)
    s1, s2 = _support_nodes(v1), _support_nodes(v2)
    if len(s1) == 0 or len(s2) == 0:
        return {"trace_norm": 0.0, "separation": np.inf}
    sep = float(cKDTree(pts[s1]).query(pts[s2])[0].min())
    if require_separation and sep <= 0:
        raise PreconditionError("localizer supports overlap on the grid")
    F = function_of(H, f)
    block = v1[s1, None] * F[np.ix_(s1, s2)] * v2[None, s2]
    return {"trace_norm": _trace_norm(block), "separation": sep}


def local_agreement_norm(pair, f, phi):
    """``||phi (f(H_mod) - f(H))||_1`` for a :class:`LocalPairing`."""
    pts = pair.H.grid.points()
    v = _field_values(phi, pts)
    s = _support_nodes(v)
    D = function_of(pair.H_mod, f) - function_of(pair.H, f)
    return _trace_norm(v[s, None] * D[s])


def operator_lipschitz_constant(f, lo, hi, n=1 << 14):
    """``(2 pi)^-1 int |xi| |hat f(xi)| d xi`` for f supported in ``[lo, hi]``.

    Bounds ``||f(A) - f(B)|| <= C ||A - B||`` for Hermitian A, B (write
    ``f(A) = (2 pi)^-1 int hat f(xi) e^{i xi A} d xi`` and use Duhamel).
    """
    width = hi - lo
    # pad so the periodic transform sees f with a wide zero margin
    t = np.linspace(lo - width, hi + width, n, endpoint=False)
    dt = t[1] - t[0]
    fh = np.fft.fft(np.asarray(f(t), float)) * dt
    xi = 2 * np.pi * np.fft.fftfreq(n, dt)
    return float(np.sum(np.abs(xi * fh)) * (xi[1] - xi[0]) / (2 * np.pi))


def mollified_operator_gap(H_V, H_Veps, f, phi, f_support=None):
    """``||phi (f(H_V) - f(H_Veps))||_1`` and the operator-norm core bound.

    Parameters
    ----------
    f_support : tuple, optional
        ``(lo, hi)`` containing ``supp f``; enables ``op_bound``, the
        Lipschitz-in-V bound ``C_f ||V - V_eps||_inf``.
    """
    if H_V.grid != H_Veps.grid or H_V.hbar != H_Veps.hbar or H_V.mu != H_Veps.mu:
        raise ConfigurationError("operators must share grid, hbar and mu")
    pts = H_V.grid.points()
    v = _field_values(phi, pts)
    s = _support_nodes(v)
    D = function_of(H_V, f) - function_of(H_Veps, f)
    sup_diff = float(np.max(np.abs(H_V.potential - H_Veps.potential)))
    out = {"trace_norm_diff": _trace_norm(v[s, None] * D[s]),
           "op_norm_diff": float(la.norm(D, 2)) if D.size else 0.0,
           "sup_potential_diff": sup_diff}
    if f_support is not None:
        C = operator_lipschitz_constant(f, *f_support)
        out["lipschitz_constant"] = C
        out["op_bound"] = C * sup_diff
    return out


@dataclass
class SmoothedDensity:
    """Smoothed spectral density at ``s`` and its phase-space prediction."""

    value: float
    oracle: float
    noncritical_margin: float

    @property
    def ratio(self):
        return self.value / self.oracle if self.oracle != 0 else np.nan


def phase_volume(V, phi, s, d, box, rtol=1e-12):
    """``int int_{p^2 + V(x) <= s} phi(x) dp dx = |B_1| int phi (s - V)_+^(d/2) dx``."""
    lo, hi = box
    ball = sphere_area(d) / d

    def f(x):
        return ball * np.maximum(s - _field_values(V, x), 0.0) ** (d / 2.0) * _field_values(phi, x)

    return nested_quadrature(f, lo, hi, rtol=rtol, atol=1e-300)


def surface_density(V, phi, s, d, box, step=1e-3):
    """``d/ds`` of :func:`phase_volume` by a five-point difference.

    Where the non-critical condition holds on ``supp phi`` the volume is
    smooth in ``s`` and the difference is accurate to ``O(step^4)``.
    """
    W = {k: phase_volume(V, phi, s + k * step, d, box) for k in (-2, -1, 1, 2)}
    return (8.0 * (W[1] - W[-1]) - (W[2] - W[-2])) / (12.0 * step)


def smoothed_density(spec, phi, f, chi, hbar, s, c=None, window=None):
    """``sum_n f(lambda_n) chi_hbar(lambda_n - s) <psi_n, phi psi_n>`` and its oracle.

    The oracle is ``(2 pi hbar)^-d f(s) dW/ds`` with ``W`` the phase-space
    volume of ``{p^2 + V <= s}`` weighted by ``phi`` (magnetic shifts do not
    change it).

    Parameters
    ----------
    chi : MollifierSpec or callable
        Either an object with ``chi_hbar(hbar, t)`` or a callable ``t -> chi_hbar(t)``.
    c : float, optional
        Non-critical margin required on ``supp phi``; default ``hbar^(2/3)``
        is replaced by half the measured margin when not given.
    window : tuple, optional
        Energies ``nu`` at which the non-critical condition is checked;
        defaults to ``(s,)``.
    """
    H = spec.operator
    V = H.fields.get("V")
    if V is None:
        raise ConfigurationError("operator does not carry its potential")
    d = H.grid.d
    lo, hi = phi.support_box()
    lo = np.maximum(np.broadcast_to(lo, (d,)), -H.grid.L)
    hi = np.minimum(np.broadcast_to(hi, (d,)), H.grid.L)
    region = Box(tuple(lo), tuple(hi))
    margin = np.inf
    for nu in (window or (s,)):
        rep = check_noncritical(lambda x, nu=nu: _field_values(V, x) - nu, region, hbar,
                                0.0 if c is None else c)
        margin = min(margin, rep.measured_min)
    if c is not None and margin < c:
        raise NoncriticalError(f"|nu - V| + hbar^(2/3) reaches {margin:.3g} < {c:.3g} on supp phi")
    if hasattr(chi, "chi_hbar"):
        kern = chi.chi_hbar(hbar, spec.eigenvalues - s)
    else:
        kern = np.asarray(chi(spec.eigenvalues - s))
    lam = spec.eigenvalues
    fl = np.asarray(f(lam), float)
    span = max(1.0, abs(spec.Lambda))
    above = np.asarray(f(spec.Lambda + span * np.linspace(1e-9, 10.0, 400)), float)
    if np.any(above != 0):
        raise BandIncompleteError("f does not vanish above the computed band", window=(spec.Lambda, np.inf))
    value = float(np.sum(fl * kern * spec.weights(phi)))
    oracle = (2 * np.pi * hbar) ** (-d) * float(f(np.array([s]))[0]) * surface_density(V, phi, s, d, (lo, hi))
    return SmoothedDensity(value, oracle, float(margin))
