"""Riesz-mean functions, the classical phase-space constant and test functions.

``g_gamma`` is the indicator of ``(-inf, 0]`` for ``gamma = 0`` and
``t -> max(0, -t)**gamma`` otherwise.  The classical constant is normalized
so that ``(2 pi)^-d * int g_gamma(p^2 + v) dp = L(gamma, d) * (v)_-^(gamma + d/2)``.
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate, special

from .errors import DomainError
from .smooth import smooth_step


def _check_gamma(gamma):
    if not (0.0 <= gamma <= 1.0) or not np.isfinite(gamma):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")


def eval_g_gamma(gamma, t):
    """Evaluate ``g_gamma`` elementwise.

    ``g_0(0) = 1``: the indicator is taken of the closed half-line.

    Parameters
    ----------
    gamma : float
        Riesz exponent in [0, 1].
    t : float or ndarray

    Returns
    -------
    float or ndarray
    """
    _check_gamma(gamma)
    t_arr = np.asarray(t, dtype=float)
    if gamma == 0.0:
        out = (t_arr <= 0.0).astype(float)
    else:
        out = np.maximum(-t_arr, 0.0) ** gamma
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class GammaFunctional:
    """The function ``g_gamma`` as a value object."""

    gamma: float

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def kind(self):
        return "indicator" if self.gamma == 0.0 else "riesz"

    def __call__(self, t):
        return eval_g_gamma(self.gamma, t)

    @property
    def breakpoints(self):
        return (0.0,)


def weyl_constant(gamma, d):
    """``Gamma(gamma+1) / ((4 pi)^(d/2) Gamma(gamma + d/2 + 1))``."""
    _check_gamma(gamma)
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")
    return float(special.gamma(gamma + 1.0) / ((4.0 * np.pi) ** (d / 2.0) * special.gamma(gamma + d / 2.0 + 1.0)))


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return float(2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0))


def momentum_integral(gamma, v, d):
    """``(2 pi)^-d * int_{R^d} g_gamma(p^2 + v) dp`` by radial quadrature.

    Independent of :func:`weyl_constant`: the radial integral
    ``int_0^R (R^2 - r^2)^gamma r^(d-1) dr`` with ``R = sqrt(-v)`` is done by
    adaptive quadrature with an algebraic endpoint weight.
    """
    _check_gamma(gamma)
    if v >= 0.0:
        return 0.0
    R = np.sqrt(-v)
    # (R - r)^gamma is carried by the weight, the rest is smooth on [0, R]
    val, _ = integrate.quad(lambda r: (R + r) ** gamma * r ** (d - 1), 0.0, R,
                            weight="alg", wvar=(0.0, gamma), epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(d) * val / (2.0 * np.pi) ** d


@dataclass
class TestGFunction:
    """A member of the compactly supported class with singular profile at 0.

    ``g(t) = (-t)^gamma * c(t)`` for ``t < 0`` and ``g = 0`` for ``t >= 0``,
    where ``c`` is a smooth step equal to 1 on ``[left/2, 0]`` and 0 at ``left``.

    Attributes
    ----------
    gamma : float
    left : float
        Left end of the support (negative).
    C : float
        Support bound: ``g`` vanishes outside ``[-C, C]``.
    constants : dict
        Measured ``C_m`` for ``m = 1..4``.
    """

    gamma: float
    left: float
    C: float = 0.0
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not self.left < 0.0:
            raise DomainError("support must extend to the left of 0")
        self.C = max(self.C, abs(self.left))

    @property
    def breakpoints(self):
        return (0.0,)

    @property
    def support(self):
        return (self.left, 0.0)

    def _cutoff(self, t, k):
        w = 0.5 * abs(self.left)
        return smooth_step((t - self.left) / w, k) / w**k

    def derivative(self, t, m=0):
        """m-th derivative on ``t != 0`` (the value at 0 follows ``g_gamma``)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        neg = t < 0.0
        tn = t[neg]
        g = self.gamma
        acc = np.zeros_like(tn)
        for k in range(m + 1):
            j = m - k
            # d^j/dt^j (-t)^g = (-1)^j g (g-1)...(g-j+1) (-t)^(g-j)
            fall = np.prod([g - i for i in range(j)]) if j else 1.0
            if fall == 0.0:
                continue
            acc += comb(m, k) * (-1.0) ** j * fall * (-tn) ** (g - j) * self._cutoff(tn, k)
        out[neg] = acc
        if m == 0 and g == 0.0:
            out[t == 0.0] = 1.0
        return out

    def __call__(self, t):
        return self.derivative(t, 0)

    def measure_constants(self, orders=(1, 2, 3, 4), samples=4000):
        """Sup of ``|g^(m)(t)| |t|^(m - gamma)`` (or of ``|g^(m)|`` for gamma = 1)."""
        t = -np.concatenate([np.logspace(-8, np.log10(self.C), samples)])
        out = {}
        for m in orders:
            vals = np.abs(self.derivative(t, m))
            if 0.0 < self.gamma < 1.0 or self.gamma == 0.0:
                vals = vals * np.abs(t) ** (m - self.gamma)
            out[m] = float(np.max(vals))
        return out


def make_test_g(gamma, support):
    """Build a :class:`TestGFunction` with measured class constants.

    Parameters
    ----------
    gamma : float
    support : tuple of float
        ``(left, right)`` with ``left < 0``; only ``left`` shapes the function,
        since every member vanishes on ``t > 0``.
    """
    left, right = support
    g = TestGFunction(gamma, float(left), C=max(abs(left), abs(right)))
    g.constants = g.measure_constants()
    return g
