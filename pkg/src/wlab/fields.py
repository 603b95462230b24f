"""Scalar fields on R^d with value, gradient and Hessian oracles.

All oracles accept points of shape ``(n, d)`` (a single point of shape
``(d,)`` is promoted) and return arrays of shape ``(n,)``, ``(n, d)`` and
``(n, d, d)``.  Fields compose with ``+``, ``*`` and scalar multiplication.
"""
import numpy as np

from . import smooth


def as_points(x, d):
    """Return ``x`` as a float array of shape ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if d == 1 else x.reshape(1, d)
    if x.shape[-1] != d:
        raise ValueError(f"expected points with last axis {d}, got shape {x.shape}")
    return x.reshape(-1, d)


class Field:
    """Base class; subclasses implement ``_value``, ``_gradient``, ``_hessian``."""

    d = 1
    support_radius = np.inf

    def value(self, x):
        return self._value(as_points(x, self.d))

    def gradient(self, x):
        return self._gradient(as_points(x, self.d))

    def hessian(self, x):
        return self._hessian(as_points(x, self.d))

    def __call__(self, x):
        return self.value(x)

    def support_box(self):
        """Axis-aligned box ``(lo, hi)`` containing the support."""
        R = self.support_radius
        return -np.full(self.d, R), np.full(self.d, R)

    def __add__(self, other):
        return SumField(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return ScaledField(self, float(other))
        return ProductField(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledField(self, -1.0)

    def __sub__(self, other):
        return SumField(self, ScaledField(other, -1.0))


class SumField(Field):
    def __init__(self, a, b):
        if a.d != b.d:
            raise ValueError("dimension mismatch")
        self.a, self.b, self.d = a, b, a.d
        self.support_radius = max(a.support_radius, b.support_radius)

    def support_box(self):
        (la, ha), (lb, hb) = self.a.support_box(), self.b.support_box()
        return np.minimum(la, lb), np.maximum(ha, hb)

    def _value(self, x):
        return self.a._value(x) + self.b._value(x)

    def _gradient(self, x):
        return self.a._gradient(x) + self.b._gradient(x)

    def _hessian(self, x):
        return self.a._hessian(x) + self.b._hessian(x)


class ScaledField(Field):
    def __init__(self, a, c):
        self.a, self.c, self.d = a, c, a.d
        self.support_radius = a.support_radius

    def support_box(self):
        return self.a.support_box()

    def _value(self, x):
        return self.c * self.a._value(x)

    def _gradient(self, x):
        return self.c * self.a._gradient(x)

    def _hessian(self, x):
        return self.c * self.a._hessian(x)


class ProductField(Field):
    def __init__(self, a, b):
        if a.d != b.d:
            raise ValueError("dimension mismatch")
        self.a, self.b, self.d = a, b, a.d
        self.support_radius = min(a.support_radius, b.support_radius)

    def support_box(self):
        (la, ha), (lb, hb) = self.a.support_box(), self.b.support_box()
        return np.maximum(la, lb), np.minimum(ha, hb)

    def _value(self, x):
        return self.a._value(x) * self.b._value(x)

    def _gradient(self, x):
        return (self.a._gradient(x) * self.b._value(x)[:, None]
                + self.a._value(x)[:, None] * self.b._gradient(x))

    def _hessian(self, x):
        ga, gb = self.a._gradient(x), self.b._gradient(x)
        cross = ga[:, :, None] * gb[:, None, :]
        return (self.a._hessian(x) * self.b._value(x)[:, None, None]
                + self.a._value(x)[:, None, None] * self.b._hessian(x)
                + cross + np.swapaxes(cross, 1, 2))


class ConstantField(Field):
    def __init__(self, d, c):
        self.d, self.c = d, float(c)

    def _value(self, x):
        return np.full(len(x), self.c)

    def _gradient(self, x):
        return np.zeros_like(x)

    def _hessian(self, x):
        return np.zeros((len(x), self.d, self.d))


class LinearField(Field):
    """``x -> <k, x> + c``."""

    def __init__(self, k, c=0.0):
        self.k = np.atleast_1d(np.asarray(k, dtype=float))
        self.d, self.c = len(self.k), float(c)

    def _value(self, x):
        return x @ self.k + self.c

    def _gradient(self, x):
        return np.broadcast_to(self.k, x.shape).copy()

    def _hessian(self, x):
        return np.zeros((len(x), self.d, self.d))


class RadialField(Field):
    """``x -> profile(|x - center| / scale)`` for an even profile.

    ``profile(r, n)`` must return the n-th derivative for n = 0, 1, 2 and be
    even in r, so that the field is smooth through the center.
    """

    def __init__(self, profile, center, scale=1.0, support=np.inf):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.d = len(self.center)
        self.profile, self.scale = profile, float(scale)
        self.local_radius = float(support) * self.scale
        self.support_radius = self.local_radius + float(np.linalg.norm(self.center))

    def support_box(self):
        return self.center - self.local_radius, self.center + self.local_radius

    def _radial(self, x):
        y = (x - self.center) / self.scale
        r = np.linalg.norm(y, axis=1)
        return y, r

    def _value(self, x):
        _, r = self._radial(x)
        return self.profile(r, 0)

    def _gradient(self, x):
        y, r = self._radial(x)
        f1 = self.profile(r, 1)
        safe = np.where(r > 0, r, 1.0)
        return (np.where(r > 0, f1 / safe, 0.0)[:, None] * y) / self.scale

    def _hessian(self, x):
        y, r = self._radial(x)
        f1, f2 = self.profile(r, 1), self.profile(r, 2)
        small = r < 1e-8
        safe = np.where(small, 1.0, r)
        # f'(r)/r -> f''(0) at the center for even profiles
        a = np.where(small, f2, f1 / safe)
        b = np.where(small, 0.0, (f2 - f1 / safe) / safe**2)
        eye = np.eye(self.d)[None]
        return (a[:, None, None] * eye + b[:, None, None] * y[:, :, None] * y[:, None, :]) / self.scale**2


def gaussian_profile(r, n):
    e = np.exp(-0.5 * r * r)
    if n == 0:
        return e
    if n == 1:
        return -r * e
    if n == 2:
        return (r * r - 1.0) * e
    raise ValueError("order > 2 not available")


def bump_profile(r, n):
    """Radial bump equal to 1 at the center and 0 for r >= 1."""
    return np.e * smooth.bump(r, n)


class RadialCutoff(RadialField):
    """Smooth cutoff: 1 for |x - c| <= R/2, 0 for |x - c| >= R."""

    def __init__(self, center, radius):
        super().__init__(smooth.plateau, center, radius, support=1.0)


class RadialBump(RadialField):
    """``e * exp(-1/(1 - r^2/R^2))`` around a center, normalized to 1 there."""

    def __init__(self, center, radius, amp=1.0):
        super().__init__(lambda r, n: amp * bump_profile(r, n), center, radius, support=1.0)
        self.amp = float(amp)
        self.radius = float(radius)


class SeparablePowerField(Field):
    """``x -> sum_i |x_i - c_i|^p`` with p in (2, 3]; C^{2, p-2} at the center."""

    def __init__(self, center, power):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.d, self.p = len(self.center), float(power)

    def _value(self, x):
        return np.sum(np.abs(x - self.center) ** self.p, axis=1)

    def _gradient(self, x):
        y = x - self.center
        return self.p * np.sign(y) * np.abs(y) ** (self.p - 1)

    def _hessian(self, x):
        y = x - self.center
        diag = self.p * (self.p - 1) * np.abs(y) ** (self.p - 2)
        out = np.zeros((len(x), self.d, self.d))
        idx = np.arange(self.d)
        out[:, idx, idx] = diag
        return out


class QuarticField(Field):
    """Double-well polynomial ``(x_1^2/s^2 - 1)^2 - c + sum_{j>1} x_j^2/s^2``."""

    def __init__(self, d, s, c):
        self.d, self.s, self.c = d, float(s), float(c)

    def _value(self, x):
        y = x / self.s
        return (y[:, 0] ** 2 - 1.0) ** 2 - self.c + np.sum(y[:, 1:] ** 2, axis=1)

    def _gradient(self, x):
        y = x / self.s
        g = 2.0 * y.copy()
        g[:, 0] = 4.0 * y[:, 0] * (y[:, 0] ** 2 - 1.0)
        return g / self.s

    def _hessian(self, x):
        y = x / self.s
        out = np.zeros((len(x), self.d, self.d))
        idx = np.arange(1, self.d)
        out[:, idx, idx] = 2.0
        out[:, 0, 0] = 12.0 * y[:, 0] ** 2 - 4.0
        return out / self.s**2


class CallableField(Field):
    """Wrap plain callables (value required, derivatives optional)."""

    def __init__(self, d, value, gradient=None, hessian=None, support_radius=np.inf):
        self.d = d
        self._v, self._g, self._h = value, gradient, hessian
        self.support_radius = support_radius

    def _value(self, x):
        return np.asarray(self._v(x), dtype=float)

    def _gradient(self, x):
        if self._g is None:
            raise NotImplementedError("no gradient oracle")
        return np.asarray(self._g(x), dtype=float)

    def _hessian(self, x):
        if self._h is None:
            raise NotImplementedError("no Hessian oracle")
        return np.asarray(self._h(x), dtype=float)
