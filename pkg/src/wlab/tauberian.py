"""Nonnegative mollifiers with compactly supported Fourier transform.

Fourier convention: ``hat u(s) = int u(t) exp(-i s t) dt``.  Starting from an
even profile ``hat g(s) = (1 - (s/a)^2)_+^nu`` with ``a = T/2``, its inverse
transform ``q`` is a Bessel function,

    q(t) = (a / 2 pi) sqrt(pi) Gamma(nu + 1) (2 / (a t))^(nu + 1/2) J_(nu + 1/2)(a t),

and ``chi_1 = c q^2`` is nonnegative with ``hat chi_1 = c (2 pi)^-1 (hat g * hat g)``
supported in ``[-T, T]``.  ``c`` makes ``int chi_1 = hat chi_1(0) = 1``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import BandIncompleteError, DomainError
from .quadrature import batch_adaptive_gl, gauss_legendre


def _q_unit(x, nu):
    """``(2/x)^(nu + 1/2) J_(nu + 1/2)(x) * Gamma(nu + 3/2)``, equal to 1 at x = 0."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.ones_like(x)
    small = x < 1e-3
    xs = x[small]
    # two terms of the series: 1 - x^2 / (4 (nu + 3/2))
    out[small] = 1.0 - xs**2 / (4.0 * (nu + 1.5))
    xl = x[~small]
    out[~small] = (2.0 / xl) ** (nu + 0.5) * special.jv(nu + 0.5, xl) * special.gamma(nu + 1.5)
    return out


@dataclass
class MollifierSpec:
    """The mollifier ``chi_1`` and its Fourier transform.

    Attributes
    ----------
    T : float
        ``supp hat chi_1`` is contained in ``[-T, T]``; at ``|s| = T`` the
        transform vanishes to order ``2 nu + 1``.
    T1, c : float
        ``chi_1 >= c`` on ``[-T1, T1]``.
    nu : int
        Exponent of the Fourier profile; ``chi_1(t)`` decays like ``|t|^-(2 nu + 2)``.
    """

    T: float
    T1: float = 0.0
    c: float = 0.0
    nu: int = 6
    c_norm: float = 1.0

    @property
    def a(self):
        return 0.5 * self.T

    def q(self, t):
        pref = self.a / (2.0 * np.pi) * np.sqrt(np.pi) * special.gamma(self.nu + 1.0) / special.gamma(self.nu + 1.5)
        return pref * _q_unit(self.a * np.asarray(t, dtype=float), self.nu)

    def chi1(self, t):
        return self.c_norm * self.q(t) ** 2

    __call__ = chi1

    def ghat(self, s):
        u = np.asarray(s, dtype=float) / self.a
        return np.where(np.abs(u) < 1.0, np.maximum(1.0 - u**2, 0.0) ** self.nu, 0.0)

    def chi_hat(self, s, n=64):
        """``c (2 pi)^-1 (hat g * hat g)(s)`` by Gauss-Legendre on the overlap."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        x, w = gauss_legendre(n)
        a = self.a
        for i, si in enumerate(s):
            lo, hi = max(-a, si - a), min(a, si + a)
            if hi <= lo:
                continue
            u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            out[i] = 0.5 * (hi - lo) * np.sum(w * self.ghat(u) * self.ghat(si - u))
        return self.c_norm * out / (2.0 * np.pi)

    def chi_hbar(self, hbar, t):
        """``chi_1(t / hbar) / hbar``."""
        if not hbar > 0:
            raise DomainError("hbar must be positive")
        return self.chi1(np.asarray(t, dtype=float) / hbar) / hbar

    def tail_radius(self, mass=1e-13):
        """``R`` with ``int_{|t| > R} chi_1 <= mass``.

        Uses the large-argument envelope ``|J_v(x)| <~ sqrt(2 / (pi x))`` with
        a factor 4 of slack for moderate arguments.
        """
        nu, a = self.nu, self.a
        pref = 4.0 * self.c_norm * (a / (2.0 * np.pi) * np.sqrt(np.pi) * special.gamma(nu + 1.0)) ** 2 \
            * 2.0 ** (2 * nu + 1) / a ** (2 * nu + 1) * 2.0 / (np.pi * a)
        # chi_1(t) <= pref t^-(2 nu + 2); both tails integrate to 2 pref R^-(2 nu + 1) / (2 nu + 1)
        return float((2.0 * pref / ((2 * nu + 1) * mass)) ** (1.0 / (2 * nu + 1)))

    def fourier_audit(self, s, radius=None, n=20):
        """``hat chi_1(s)`` by direct quadrature of ``int chi_1(t) cos(s t) dt``.

        Independent of :meth:`chi_hat`: it integrates the time-side function.
        """
        R = self.tail_radius(1e-14) if radius is None else radius
        x, w = gauss_legendre(n)
        # panels short against both the kernel oscillation and the test frequencies
        smax = max(float(np.max(np.abs(s))), self.T)
        panels = int(np.ceil(R * max(smax, self.T) / np.pi)) + 1
        edges = np.linspace(0.0, R, panels + 1)
        h = 0.5 * np.diff(edges)[:, None]
        t = (0.5 * (edges[1:] + edges[:-1])[:, None] + h * x).ravel()
        wt = (h * w).ravel() * self.chi1(t)
        return np.array([2.0 * np.sum(wt * np.cos(si * t)) for si in np.atleast_1d(s)])


def build_mollifier(T, nu=6):
    """Construct the mollifier for Fourier half-width ``T`` and report ``T1``, ``c``."""
    if not T > 0:
        raise DomainError("T must be positive")
    m = MollifierSpec(float(T), nu=int(nu))
    a = m.a
    # Parseval: int q^2 = (2 pi)^-1 int ghat^2 = (2 pi)^-1 a B(1/2, 2 nu + 1)
    int_g2 = a * np.sqrt(np.pi) * special.gamma(2 * nu + 1.0) / special.gamma(2 * nu + 1.5)
    m.c_norm = 2.0 * np.pi / int_g2
    peak = float(m.chi1(0.0))
    # first zero of J_(nu + 1/2)(a t) bounds the monotone central lobe
    first_zero = _first_bessel_zero(nu + 0.5) / a
    t_half = optimize.brentq(lambda t: float(m.chi1(t)) - 0.5 * peak, 0.0, first_zero)
    m.T1 = float(min(t_half, 0.5 * T))
    m.c = float(np.min(m.chi1(np.linspace(-m.T1, m.T1, 2001))))
    return m


def _first_bessel_zero(v):
    # bracket by scanning; J_v has its first positive zero above v
    x = np.linspace(v, v + 10.0, 2001)
    y = special.jv(v, x)
    i = int(np.argmax(np.sign(y[1:]) != np.sign(y[:-1])))
    return optimize.brentq(lambda z: special.jv(v, z), x[i], x[i + 1])


def chi_hbar(spec, hbar, t):
    """``(1/hbar) chi_1(t/hbar)``."""
    return spec.chi_hbar(hbar, t)


class SmoothedG:
    """``g^(hbar)(t) = int g(t - hbar v) chi_1(v) dv``.

    The v-integral runs over ``|v| <= R`` with ``R`` from the envelope of
    ``chi_1``; panels start at ``v = t / hbar`` where ``g`` has its kink.
    """

    def __init__(self, g, spec, hbar, tol=1e-12, tail=1e-14):
        self.g, self.spec, self.hbar, self.tol = g, spec, float(hbar), tol
        self.R = spec.tail_radius(tail)
        self.breakpoints = tuple(getattr(g, "breakpoints", (0.0,)))

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        g, h, chi = self.g, self.hbar, self.spec.chi1

        class _F:
            count = len(t)

            def __call__(self, idx, z):
                return g(t[idx, None] - h * z) * chi(z)

        bps = [np.array([(t[i] - b) / h for b in self.breakpoints]) for i in range(len(t))]
        R = self.R
        return batch_adaptive_gl(_F(), -R, R, tol=self.tol, n=12, init_panels=max(8, int(R)),
                                 breakpoints=bps)


def smooth_g(g, spec, hbar, tol=1e-12):
    """Return the callable ``g^(hbar)``."""
    return SmoothedG(g, spec, hbar, tol)


def _weights(spec_data, phi):
    pts = spec_data.operator.grid.points()
    vals = np.asarray(phi.value(pts) if hasattr(phi, "value") else phi(pts), dtype=float)
    return vals


def tauberian_gap(spec_data, g, f, phi, mollifier, hbar, t_grid=None, f_support=None):
    """``||B^* (g - g^(hbar))(H) B||_1`` and ``sup_t ||B^* chi_hbar(H - t) B||_1``.

    ``B = f(H) phi``; both quantities are evaluated in the eigenbasis.  Since
    ``chi_hbar >= 0`` the second operator is positive and its trace norm is
    its trace.

    Parameters
    ----------
    f : callable
        Window function; must vanish above the computed band.
    f_support : tuple, optional
        ``(lo, hi)`` containing ``supp f``; defaults to ``f.support``.
    """
    lo, hi = f_support if f_support is not None else getattr(f, "support")
    if hi > spec_data.Lambda:
        raise BandIncompleteError("window extends past the computed band", window=(spec_data.Lambda, hi))
    lam = spec_data.eigenvalues
    fl = np.asarray(f(lam), dtype=float)
    on = fl != 0
    if not np.any(on):
        return {"gap_trace_norm": 0.0, "z_bound": 0.0, "ratio": np.nan}
    lam, fl = lam[on], fl[on]
    vals = _weights(spec_data, phi)
    rows = np.nonzero(vals != 0)[0]
    A = vals[rows, None] * spec_data.eigenvectors[np.ix_(rows, np.nonzero(on)[0])]
    gh = smooth_g(g, mollifier, hbar)
    diff = np.asarray(g(lam), dtype=float) - gh(lam)
    M = (A * (fl**2 * diff)) @ A.conj().T
    gap = float(np.sum(np.linalg.svd(M, compute_uv=False))) if M.size else 0.0
    if t_grid is None:
        t_grid = np.arange(lo, hi + 0.125 * hbar, 0.125 * hbar)
    w2 = np.sum(np.abs(A) ** 2, axis=0)
    z = max(float(np.sum(fl**2 * mollifier.chi_hbar(hbar, lam - t) * w2)) for t in t_grid)
    return {"gap_trace_norm": gap, "z_bound": z, "ratio": gap / z if z > 0 else np.nan}
