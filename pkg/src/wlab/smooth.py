"""Smooth compactly supported building blocks with derivatives of any order.

The basic object is the bump ``b(u) = exp(-1/(1 - u^2))`` on ``(-1, 1)``.
Its derivatives have the form ``R_n(u) (1 - u^2)^(-2n) b(u)`` with
polynomials obeying

    R_{n+1} = R_n' (1 - u^2)^2 + (4 n u (1 - u^2) - 2 u) R_n,

which gives exact derivative oracles without symbolic algebra.
"""
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import Polynomial

_ONE_MINUS_U2 = Polynomial([1.0, 0.0, -1.0])
_U = Polynomial([0.0, 1.0])


@lru_cache(maxsize=None)
def _bump_poly(n):
    if n == 0:
        return Polynomial([1.0])
    r = _bump_poly(n - 1)
    m = n - 1
    return r.deriv() * _ONE_MINUS_U2**2 + (4 * m * _U * _ONE_MINUS_U2 - 2 * _U) * r


def bump(u, n=0):
    """n-th derivative of ``exp(-1/(1-u^2))``, zero outside ``(-1, 1)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    if np.any(inside):
        ui = u[inside]
        s = 1.0 - ui * ui
        # combine the pole and the exponential in log space to avoid overflow
        out[inside] = _bump_poly(n)(ui) * np.exp(-1.0 / s - 2 * n * np.log(s))
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_PANELS = 4


def _bump_integral(s):
    """Integral of the bump from -1 to s.

    Quintic Hermite interpolation of a tabulated antiderivative, using the
    exact first and second derivatives (the bump and its derivative).
    """
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, BUMP_MASS, 0.0)
    inner = np.abs(s) < 1.0
    if np.any(inner):
        si = s[inner]
        pos = (si + 1.0) / _TAB_H
        j = np.minimum(pos.astype(int), len(_TAB_S) - 2)
        t = pos - j
        h = _TAB_H
        y0, y1 = _TAB_I[j], _TAB_I[j + 1]
        d0, d1 = _TAB_D1[j] * h, _TAB_D1[j + 1] * h
        c0, c1 = _TAB_D2[j] * h * h, _TAB_D2[j + 1] * h * h
        t2, t3 = t * t, t * t * t
        t4, t5 = t3 * t, t3 * t * t
        out[inner] = (
            y0 * (1 - 10 * t3 + 15 * t4 - 6 * t5)
            + d0 * (t - 6 * t3 + 8 * t4 - 3 * t5)
            + c0 * 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
            + y1 * (10 * t3 - 15 * t4 + 6 * t5)
            + d1 * (-4 * t3 + 7 * t4 - 3 * t5)
            + c1 * 0.5 * (t3 - 2 * t4 + t5)
        )
    return out


def _bump_integral_raw(s):
    s = np.clip(s, -1.0, 1.0)
    total = np.zeros_like(s)
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        a = -1.0 + (s + 1.0) * lo
        b = -1.0 + (s + 1.0) * hi
        half = 0.5 * (b - a)
        x = half[..., None] * _GL_NODES + 0.5 * (a + b)[..., None]
        total += half * np.sum(_GL_WEIGHTS * bump(x), axis=-1)
    return total


BUMP_MASS = float(_bump_integral_raw(np.array(1.0)))
_TAB_H = 1.0 / 1024
_TAB_S = np.linspace(-1.0, 1.0, 2049)
_TAB_I = _bump_integral_raw(_TAB_S)
_TAB_D1 = bump(_TAB_S)
_TAB_D2 = bump(_TAB_S, 1)


def smooth_step(u, n=0):
    """Smooth step equal to 0 for u <= 0 and 1 for u >= 1, and its derivatives."""
    u = np.asarray(u, dtype=float)
    if n == 0:
        return _bump_integral(2.0 * u - 1.0) / BUMP_MASS
    return 2.0**n * bump(2.0 * u - 1.0, n - 1) / BUMP_MASS


def plateau(r, n=0):
    """Radial cutoff profile: 1 on [0, 1/2], 0 on [1, inf), smooth between."""
    # 1 - S(2r - 1)
    r = np.asarray(r, dtype=float)
    if n == 0:
        return 1.0 - smooth_step(2.0 * r - 1.0)
    return -(2.0**n) * smooth_step(2.0 * r - 1.0, n)


class BumpFunction:
    """Scaled bump ``amp * P(t) * b((t - center)/halfwidth)`` on the real line.

    Parameters
    ----------
    center, halfwidth : float
        Support is ``[center - halfwidth, center + halfwidth]``.
    amp : float
        Overall amplitude.
    poly : sequence of float, optional
        Coefficients of a polynomial factor in ``t - center`` (lowest first).
    normalize_peak : bool
        When true the plain bump is rescaled so that it equals ``amp`` at the center.
    """

    def __init__(self, center=0.0, halfwidth=1.0, amp=1.0, poly=None, normalize_peak=True):
        self.center = float(center)
        self.halfwidth = float(halfwidth)
        self.amp = float(amp) * (np.e if normalize_peak else 1.0)
        self.poly = Polynomial(poly if poly is not None else [1.0])
        self.support = (self.center - self.halfwidth, self.center + self.halfwidth)

    def derivative(self, t, n=0):
        t = np.asarray(t, dtype=float)
        u = (t - self.center) / self.halfwidth
        s = t - self.center
        out = np.zeros_like(t)
        # Leibniz rule between the polynomial factor and the scaled bump
        for k in range(n + 1):
            pk = self.poly.deriv(k) if k else self.poly
            if pk.degree() == 0 and pk.coef[0] == 0.0:
                break
            out += factorial(n) / (factorial(k) * factorial(n - k)) * pk(s) * bump(u, n - k) / self.halfwidth ** (n - k)
        return self.amp * out

    def __call__(self, t):
        return self.derivative(t, 0)


class Plateau1D:
    """Smooth window equal to 1 on ``[lo, hi]`` and 0 outside ``[lo - ramp, hi + ramp]``."""

    def __init__(self, lo, hi, ramp):
        if hi < lo or ramp <= 0:
            raise ValueError("need lo <= hi and ramp > 0")
        self.lo, self.hi, self.ramp = float(lo), float(hi), float(ramp)
        self.support = (self.lo - self.ramp, self.hi + self.ramp)

    def derivative(self, t, n=0):
        t = np.asarray(t, dtype=float)
        left = (t - (self.lo - self.ramp)) / self.ramp
        right = ((self.hi + self.ramp) - t) / self.ramp
        if n == 0:
            return smooth_step(left) * smooth_step(right)
        out = np.zeros_like(t)
        for k in range(n + 1):
            c = factorial(n) / (factorial(k) * factorial(n - k))
            out += c * smooth_step(left, k) * smooth_step(right, n - k) * (-1.0) ** (n - k)
        return out / self.ramp**n

    def __call__(self, t):
        return self.derivative(t, 0)
