"""Almost analytic extensions and the Helffer-Sjöstrand functional calculus.

``f(H) = -(1/pi) int_C dbar f~(z) (z - H)^-1 dx dy``.  The integrand on the
lower half plane is the adjoint of the one on the upper half plane (for real
f and a reflection-symmetric strip cutoff), so only ``y > 0`` is integrated
and the result is ``I + I^*``.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.linalg as la

from ..errors import QuadratureError
from ..quadrature import gauss_legendre

# 35 t^4 - 84 t^5 + 70 t^6 - 20 t^7: 0 -> 1 with three vanishing derivatives at both ends
_STEP = np.polynomial.Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


class AlmostAnalyticExtension:
    """``f~(x + iy) = chi(y/strip) sum_{n <= N} f^(n)(x) (iy)^n / n!``.

    ``chi`` equals 1 for ``|y| <= strip/2`` and vanishes for ``|y| >= strip``;
    it is the C^3 polynomial step, which is all the Stokes argument needs and
    keeps the y-integrand polynomial on the transition layer.
    Then ``dbar f~ = chi f^(N+1)(x) (iy)^N / (2 N!) + i chi'(y) S(x, y) / 2``
    with ``S`` the Taylor sum, so ``|dbar f~| <= C_N |y|^N``.

    Parameters
    ----------
    f : object
        Needs ``derivative(t, n)`` for ``n <= N + 1`` and a ``support`` pair.
    order : int
        Truncation order ``N``.
    """

    def __init__(self, f, order, strip=None):
        self.f, self.order = f, int(order)
        self.support = tuple(getattr(f, "support", (-np.inf, np.inf)))
        self.strip = float(strip) if strip is not None else self.natural_strip()
        self.constant = None

    def natural_strip(self, cap=1.0, samples=4001):
        """Largest height where the Taylor terms still shrink: ``min_n (n+1) M_n / M_{n+1}``.

        ``M_n = sup |f^(n)|``.  Compactly supported f have factorially growing
        derivatives, so a unit strip would make the truncated sum cancel
        catastrophically.
        """
        lo, hi = self.support
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return cap
        t = np.linspace(lo, hi, samples)
        M = [float(np.max(np.abs(self.f.derivative(t, n)))) for n in range(self.order + 2)]
        ratios = [(n + 1) * M[n] / M[n + 1] for n in range(self.order + 1) if M[n + 1] > 0]
        return float(min([cap] + ratios))

    def _taylor(self, x, y):
        s = np.zeros(np.broadcast(x, y).shape, complex)
        iy = 1j * y
        for n in range(self.order + 1):
            s = s + self.f.derivative(x, n) * iy**n / factorial(n)
        return s

    def _chi(self, y, n=0):
        t = np.clip(2.0 * np.abs(y) / self.strip - 1.0, 0.0, 1.0)
        if n == 0:
            return 1.0 - _STEP(t)
        return -_STEP.deriv()(t) * (2.0 / self.strip) * np.sign(y)

    def __call__(self, z):
        z = np.asarray(z, complex)
        x, y = z.real, z.imag
        return self._chi(y) * self._taylor(x, y)

    def dbar(self, z):
        z = np.asarray(z, complex)
        x, y = z.real, z.imag
        N = self.order
        main = self._chi(y) * self.f.derivative(x, N + 1) * (1j * y) ** N / factorial(N)
        edge = 1j * self._chi(y, 1) * self._taylor(x, y)
        return 0.5 * (main + edge)

    def measure_constant(self, samples=1000, seed=0):
        """Sampled ``sup |dbar f~(z)| / |Im z|^N`` over the strip."""
        rng = np.random.default_rng(seed)
        lo, hi = self.support
        x = rng.uniform(lo, hi, samples)
        y = self.strip * rng.uniform(1e-3, 1.0, samples)
        ratio = np.abs(self.dbar(x + 1j * y)) / y**self.order
        self.constant = float(np.max(ratio))
        return self.constant


def almost_analytic_extension(f, order, strip=None):
    """Build the extension and record its measured constant ``C_N``."""
    ext = AlmostAnalyticExtension(f, order, strip)
    ext.measure_constant()
    return ext


def _tridiagonal_resolvents(a, b, z, weights):
    """``sum_m weights[m] (z_m - T)^-1`` for Hermitian tridiagonal T.

    ``a`` is the diagonal, ``b`` the subdiagonal (``T[i+1, i] = b[i]``).
    Gaussian elimination without pivoting is vectorized over the nodes; the
    shifts have ``Im z > 0`` so every pivot is nonzero.
    """
    n, m = len(a), len(z)
    lower = -b
    upper = -np.conj(b)
    Y = np.zeros((m, n, n), complex)
    cp = np.zeros((m, n), complex)
    prev = None
    for i in range(n):
        piv = z - a[i]
        row = np.zeros((m, n), complex)
        row[:, i] = 1.0
        if i:
            piv = piv - lower[i - 1] * cp[:, i - 1]
            row = row - lower[i - 1] * prev
        if i < n - 1:
            cp[:, i] = upper[i] / piv
        prev = row / piv[:, None]
        Y[:, i] = prev
    acc = np.zeros((n, n), complex)
    X = Y[:, n - 1]
    acc[n - 1] = weights @ X
    for i in range(n - 2, -1, -1):
        X = Y[:, i] - cp[:, i, None] * X
        acc[i] = weights @ X
    return acc


@dataclass
class HSReport:
    """Diagnostics of a Helffer-Sjöstrand evaluation."""

    levels: int = 0
    nodes: int = 0
    error_estimate: float = 0.0
    converged: bool = True
    level_norms: list = field(default_factory=list)


def _panel_rule(lo, hi, panels, n):
    x, w = gauss_legendre(n)
    edges = np.linspace(lo, hi, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + h[:, None] * x[None, :]).ravel(), (h[:, None] * w[None, :]).ravel()


def _cells(lo, hi, ylo, yhi, width, n, ysplit=1):
    X, WX = _panel_rule(lo, hi, max(1, int(np.ceil((hi - lo) / width))), n)
    Yn, WY = _panel_rule(ylo, yhi, ysplit, n)
    Z = (X[:, None] + 1j * Yn[None, :]).ravel()
    W = (WX[:, None] * WY[None, :]).ravel()
    return Z, W


def hs_apply(H, f, order=8, contour_tol=1e-8, strip=None, n=8, max_levels=8, max_refine=4,
             chunk=1024, strict=True, report=None):
    """``f(H)`` by the Helffer-Sjöstrand formula.

    Parameters
    ----------
    H : GridOperator or ndarray
        Hermitian matrix.
    f : object
        Smooth compactly supported function with ``derivative(t, n)`` and ``support``.
    order : int
        Order of the almost analytic extension.
    strip : float, optional
        Strip height; defaults to :meth:`AlmostAnalyticExtension.natural_strip`.
    contour_tol : float
        Target Frobenius-norm accuracy of the quadrature.
    strict : bool
        Raise :class:`QuadratureError` when the tolerance is not met within
        ``max_levels`` dyadic strips; otherwise return the truncated result.
    report : HSReport, optional
        Filled with diagnostics.
    """
    A = H.dense() if hasattr(H, "dense") else np.asarray(H)
    A = 0.5 * (A + A.conj().T)
    dim = A.shape[0]
    rep = report if report is not None else HSReport()
    ext = AlmostAnalyticExtension(f, order, strip)
    strip = ext.strip
    lo, hi = ext.support
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise QuadratureError("f needs a bounded support")
    T, Q = la.hessenberg(A.astype(complex), calc_q=True)
    a = np.real(np.diag(T)).copy()
    b = np.diag(T, -1).copy()

    def integrate(Z, W):
        c = W * ext.dbar(Z)
        # ||(z - H)^-1|| <= 1/Im z, so dropped nodes cost at most drop_tol in total
        bound = np.abs(c) / Z.imag
        order_ = np.argsort(bound)
        dropped = np.cumsum(bound[order_]) <= drop_tol
        keep = np.ones(len(Z), bool)
        keep[order_[dropped]] = False
        Z, c = Z[keep], c[keep]
        acc = np.zeros((dim, dim), complex)
        for s in range(0, len(Z), chunk):
            acc += _tridiagonal_resolvents(a, b, Z[s:s + chunk], c[s:s + chunk])
        rep.nodes += len(Z)
        return acc

    drop_tol = 1e-3 * contour_tol / max(1, max_levels * (max_refine + 1))
    total = np.zeros((dim, dim), complex)
    level_tol = contour_tol / 8.0
    norms = []
    err = 0.0
    for k in range(max_levels):
        yhi, ylo = strip * 2.0**-k, strip * 2.0 ** -(k + 1)
        width = yhi
        coarse = integrate(*_cells(lo, hi, ylo, yhi, width, n))
        # without a refinement pass there is no error estimate for the level
        delta = np.inf
        for _ in range(max_refine):
            width *= 0.5
            fine = integrate(*_cells(lo, hi, ylo, yhi, width, n))
            delta = float(np.linalg.norm(fine - coarse))
            coarse = fine
            if delta <= level_tol:
                break
        err += delta
        total += coarse
        norms.append(float(np.linalg.norm(coarse)))
        # dbar f~ = O(y^N): the remaining strips shrink geometrically
        if k >= 2 and norms[-1] <= norms[-2] and norms[-1] <= level_tol:
            break
    rep.levels = len(norms)
    rep.level_norms = norms
    # the neglected strip below the last level is bounded by its geometric tail
    ratio = norms[-1] / norms[-2] if len(norms) > 1 and norms[-2] > 0 else 1.0
    tail = norms[-1] * ratio / (1 - ratio) if ratio < 1 else np.inf
    rep.error_estimate = (err + tail) / np.pi
    rep.converged = bool(rep.error_estimate <= contour_tol)
    if strict and not rep.converged:
        raise QuadratureError("Helffer-Sjöstrand quadrature did not reach tolerance", rep.error_estimate, contour_tol)
    S = total + total.conj().T
    return -(Q @ S @ Q.conj().T) / np.pi
