"""Bounded regions (boxes and balls) with sampling helpers."""
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DomainError


def _grid(lo, hi, spacing):
    axes = []
    for a, b in zip(lo, hi):
        n = max(2, int(np.ceil((b - a) / spacing)) + 1)
        axes.append(np.linspace(a, b, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.atleast_1d(self.lo), np.atleast_1d(self.hi)
        if len(lo) != len(hi):
            raise DomainError("box corners have different dimensions")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    @property
    def d(self):
        return len(self.lo)

    @property
    def bounds(self):
        return np.array(self.lo), np.array(self.hi)

    @property
    def empty(self):
        return any(b <= a for a, b in zip(self.lo, self.hi))

    @property
    def measure(self):
        return 0.0 if self.empty else float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def diameter(self):
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def center(self):
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=1)

    def distance(self, x):
        """Euclidean distance to the box (0 inside)."""
        x = np.atleast_2d(x)
        gap = np.maximum(np.array(self.lo) - x, 0.0) + np.maximum(x - np.array(self.hi), 0.0)
        return np.linalg.norm(gap, axis=1)

    def dilate(self, r):
        return Box(tuple(a - r for a in self.lo), tuple(b + r for b in self.hi))

    def grid(self, spacing):
        if self.empty:
            raise DomainError("empty region")
        return _grid(self.lo, self.hi, spacing)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def d(self):
        return len(self.center)

    @property
    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    @property
    def empty(self):
        return self.radius <= 0

    @property
    def measure(self):
        from scipy.special import gamma
        return float(np.pi ** (self.d / 2) / gamma(self.d / 2 + 1) * self.radius**self.d)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x - np.array(self.center), axis=1) <= self.radius

    def distance(self, x):
        x = np.atleast_2d(x)
        return np.maximum(np.linalg.norm(x - np.array(self.center), axis=1) - self.radius, 0.0)

    def dilate(self, r):
        return Ball(self.center, self.radius + r)

    def grid(self, spacing):
        if self.empty:
            raise DomainError("empty region")
        lo, hi = self.bounds
        pts = _grid(lo, hi, spacing)
        return pts[self.contains(pts)]


def region_from_dict(spec):
    """Build a region from ``{"box": [lo, hi]}`` or ``{"ball": [center, radius]}``."""
    if "box" in spec:
        lo, hi = spec["box"]
        return Box(tuple(lo), tuple(hi))
    if "ball" in spec:
        c, r = spec["ball"]
        return Ball(tuple(c), r)
    raise DomainError(f"unknown region descriptor {spec!r}")


def cube_corners(d):
    return np.array(list(product((-1.0, 1.0), repeat=d)))
