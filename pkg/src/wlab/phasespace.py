"""Leading phase-space term and the phase-space comparison bound.

The Weyl term is ``(2 pi hbar)^-d * int int g_gamma(p^2 + V(x)) phi(x) dx dp``.
Integrating out ``p`` gives ``hbar^-d * L(gamma, d) * int V_-^(d/2 + gamma) phi``;
:func:`weyl_term_closed` uses that identity and :func:`weyl_term_quadrature`
integrates over ``p`` numerically instead.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import DomainError
from .quadrature import nested_quadrature
from .specfun import _check_gamma, sphere_area, weyl_constant


def _evaluate(f, x):
    return np.asarray(f.value(x) if hasattr(f, "value") else f(x), dtype=float)


def _kinks(*fields):
    """Per-axis kink coordinates from models that list singular points."""
    pts = [np.atleast_1d(c) for f in fields for c in getattr(f, "singular_points", [])]
    pts += [np.atleast_1d(c) for f in fields for c in getattr(getattr(f, "base", None), "singular_points", [])]
    if not pts:
        return None
    return [np.unique([p[i] for p in pts]) for i in range(len(pts[0]))]


def _default_rtol(d):
    # iterated panels in 3-D get slow well before 1e-10
    return {1: 1e-11, 2: 1e-9}.get(d, 1e-8)


@dataclass
class WeylTermRequest:
    """Inputs of a Weyl-term evaluation.

    Attributes
    ----------
    V : field or callable
        Potential on points of shape ``(n, d)``.
    phi : field
        Localization function; its ``support_box()`` bounds the x-quadrature
        unless ``region`` is given.
    region : tuple of ndarray, optional
        ``(lo, hi)`` box containing ``supp phi``.
    """

    V: object
    phi: object
    gamma: float
    hbar: float
    d: int
    region: Optional[tuple] = None
    rtol: Optional[float] = None

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not self.hbar > 0:
            raise DomainError("hbar must be positive")

    def box(self):
        if self.region is not None:
            lo, hi = self.region
        else:
            lo, hi = self.phi.support_box()
        lo, hi = np.broadcast_to(np.asarray(lo, float), (self.d,)), np.broadcast_to(np.asarray(hi, float), (self.d,))
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise DomainError("localization function needs a bounded support box")
        return lo, hi

    @property
    def tolerance(self):
        return self.rtol if self.rtol is not None else _default_rtol(self.d)


def weyl_term_closed(req):
    """``hbar^-d * L(gamma, d) * int V_-^(d/2 + gamma) phi dx``."""
    s = req.d / 2.0 + req.gamma
    lo, hi = req.box()

    def f(x):
        return np.maximum(-_evaluate(req.V, x), 0.0) ** s * _evaluate(req.phi, x)

    integral = nested_quadrature(f, lo, hi, rtol=req.tolerance, breaks=_kinks(req.V))
    return req.hbar ** (-req.d) * weyl_constant(req.gamma, req.d) * integral


class RadialMomentumRule:
    """``int_{|p| < R} g_gamma(p^2 - R^2) dp`` from a Gauss-Jacobi rule.

    With ``p = R u`` the integral is
    ``|S^{d-1}| R^(d + 2 gamma) int_0^1 (1 - u)^gamma (1 + u)^gamma u^(d-1) du``;
    the ``(1 - u)^gamma`` factor is the Jacobi weight, the rest is smooth.
    """

    def __init__(self, gamma, d, n=40):
        _check_gamma(gamma)
        t, w = special.roots_jacobi(n, gamma, 0.0)
        u = 0.5 * (t + 1.0)
        w = w * 0.5 ** (gamma + 1.0)
        self.gamma, self.d = gamma, d
        self.unit = sphere_area(d) * float(np.sum(w * (1.0 + u) ** gamma * u ** (d - 1)))

    def __call__(self, R):
        return self.unit * np.asarray(R, dtype=float) ** (self.d + 2.0 * self.gamma)


class ShiftedLineRule:
    """1-D p-integral of ``g_gamma((p - w)^2 - R^2)`` over ``[-P, P]``.

    The interval ``[w - R, w + R]`` carries a Gauss-Jacobi rule with weight
    ``(1 - s)^gamma (1 + s)^gamma``; nothing is assumed about translation
    invariance, so a shift that pushes the ball past ``P`` is visible.
    """

    def __init__(self, gamma, n=40):
        t, w = special.roots_jacobi(n, gamma, gamma)
        self.t, self.w, self.gamma = t, w, gamma

    def __call__(self, R, shift, P):
        R, shift = np.asarray(R, float), np.asarray(shift, float)
        lo = np.maximum(shift - R, -P)
        hi = np.minimum(shift + R, P)
        # map s in [-1, 1] onto [w - R, w + R]; clip nodes to [-P, P]
        p = shift[:, None] + R[:, None] * self.t[None]
        inside = (p >= lo[:, None]) & (p <= hi[:, None])
        vals = (R[:, None] ** 2) ** self.gamma * inside
        return R * (vals @ self.w)


def weyl_term_quadrature(req, p_cutoff, shift: Optional[Callable] = None, samples=20_000, seed=0):
    """``(2 pi hbar)^-d int int g_gamma(p^2 + V) phi dx dp`` with an explicit p-integral.

    Parameters
    ----------
    p_cutoff : float
        Momentum-space radius of the p-integral; must satisfy
        ``p_cutoff^2 >= sup V_-`` (checked on random samples of the box).
    shift : callable, optional
        ``x -> w(x)`` replacing ``p^2`` by ``(p - w(x))^2``, e.g. ``mu a(x)``.
        In d = 1 the shifted interval is integrated directly; in d > 1 the
        shifted ball must lie inside the cutoff.
    """
    d = req.d
    lo, hi = req.box()
    rng = np.random.default_rng(seed)
    probe = lo + (hi - lo) * rng.uniform(size=(samples, d))
    probe = np.vstack([probe, 0.5 * (lo + hi)])
    vmax = float(np.max(np.maximum(-_evaluate(req.V, probe), 0.0)))
    if p_cutoff**2 < vmax:
        raise DomainError(f"p_cutoff^2 = {p_cutoff**2:.6g} below sup V_- = {vmax:.6g}")
    radial = RadialMomentumRule(req.gamma, d)
    line = ShiftedLineRule(req.gamma) if d == 1 else None

    def f(x):
        R = np.sqrt(np.maximum(-_evaluate(req.V, x), 0.0))
        if shift is None:
            pint = radial(R)
        else:
            w = np.asarray(shift(x), dtype=float).reshape(len(x), d)
            if d == 1:
                pint = line(R, w[:, 0], p_cutoff)
            else:
                if np.any(np.linalg.norm(w, axis=1) + R > p_cutoff * (1 + 1e-12)):
                    raise DomainError("shifted momentum ball leaves the cutoff")
                pint = radial(R)
        return pint * _evaluate(req.phi, x)

    integral = nested_quadrature(f, lo, hi, rtol=req.tolerance, breaks=_kinks(req.V))
    return integral / (2.0 * np.pi * req.hbar) ** d


@dataclass
class ComparisonReport:
    """Phase-space difference and its modulus-of-continuity bound.

    ``bound = constant * sup_diff ** exponent`` where the exponent is 1 when
    ``r -> r^(d/2 + gamma)`` is Lipschitz (``d/2 + gamma >= 1``) and
    ``d/2 + gamma`` otherwise (Hölder case, only d = 1 with gamma < 1/2).
    """

    value: float
    bound: float
    sup_diff: float
    constant: float
    exponent: float
    holds: bool


def phase_space_compare(V, V_eps, phi, gamma, d, region=None, rtol=None, spacing=None):
    """``|(2 pi)^-d int int [g(p^2 + V_eps) - g(p^2 + V)] phi dx dp|`` and its bound."""
    _check_gamma(gamma)
    req = WeylTermRequest(V, phi, gamma, 1.0, d, region, rtol)
    lo, hi = req.box()
    s = d / 2.0 + gamma
    L = weyl_constant(gamma, d)

    def f(x):
        a = np.maximum(-_evaluate(V_eps, x), 0.0) ** s
        b = np.maximum(-_evaluate(V, x), 0.0) ** s
        return (a - b) * _evaluate(phi, x)

    # the difference is small, so the absolute floor comes from the magnitude of the terms
    scale = nested_quadrature(lambda x: np.maximum(-_evaluate(V, x), 0.0) ** s * np.abs(_evaluate(phi, x)),
                              lo, hi, rtol=1e-6)
    value = abs(L * nested_quadrature(f, lo, hi, rtol=req.tolerance, atol=1e-13 * max(scale, 1e-300),
                                    breaks=_kinks(V, V_eps)))
    if spacing is None:
        spacing = float(np.max(hi - lo)) / (400 if d == 1 else 60 if d == 2 else 20)
    axes = [np.arange(l, h + 0.5 * spacing, spacing) for l, h in zip(lo, hi)]
    x = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    vm, vem = np.maximum(-_evaluate(V, x), 0.0), np.maximum(-_evaluate(V_eps, x), 0.0)
    on = np.abs(_evaluate(phi, x)) > 0
    sup_diff = float(np.max(np.abs(vm - vem)[on])) if np.any(on) else 0.0
    M = float(max(np.max(vm[on]), np.max(vem[on]))) if np.any(on) else 0.0
    phi_l1 = nested_quadrature(lambda y: np.abs(_evaluate(phi, y)), lo, hi, rtol=1e-6)
    if s >= 1.0:
        exponent, lip = 1.0, s * M ** (s - 1.0)
    else:
        exponent, lip = s, 1.0
    constant = L * lip * phi_l1
    bound = constant * sup_diff**exponent
    # the sampled sup can miss the true sup slightly, hence the small slack
    return ComparisonReport(value, bound, sup_diff, constant, exponent, bool(value <= 1.05 * bound + 1e-14))
