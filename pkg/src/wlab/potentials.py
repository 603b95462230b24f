"""Electric and magnetic potentials, mollification and gauge transforms.

Potentials are :class:`~wlab.fields.Field` objects wrapped in
:class:`PotentialModel`, which adds the Hölder exponent of the Hessian and an
empirically certified Hölder constant.  :func:`mollify` convolves with a
signed tensor kernel whose moments of order 0, 1, 2 are (1, 0, 0).
"""
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from . import fields as F
from . import smooth
from .errors import DomainError, QuadratureError
from .quadrature import _integrate_axes, batch_adaptive_gl, gauss_legendre


# ---------------------------------------------------------------------------
# potential models


@dataclass
class PotentialModel:
    """A compactly supported C^{2,kappa} potential.

    Attributes
    ----------
    field : Field
        Value, gradient and Hessian oracles.
    kappa : float
        Hölder exponent of the Hessian, in (0, 1].
    holder_constant : float
        Empirical sup of ``|D^2 V(x) - D^2 V(y)| / |x - y|^kappa`` (max entry).
    support_radius : float
        ``V`` vanishes outside the ball of this radius about the origin.
    singular_points : list of ndarray
        Known points where the Hessian is only Hölder continuous.
    """

    name: str
    field: F.Field
    kappa: float
    support_radius: float
    params: dict = field(default_factory=dict)
    holder_constant: float = float("nan")
    holder_samples: int = 0
    holder_seed: int = 0
    singular_points: list = field(default_factory=list)

    @property
    def d(self):
        return self.field.d

    def value(self, x):
        x = F.as_points(x, self.d)
        out = self.field._value(x)
        out[np.linalg.norm(x, axis=1) > self.support_radius] = 0.0
        return out

    def gradient(self, x):
        x = F.as_points(x, self.d)
        out = self.field._gradient(x)
        out[np.linalg.norm(x, axis=1) > self.support_radius] = 0.0
        return out

    def hessian(self, x):
        x = F.as_points(x, self.d)
        out = self.field._hessian(x)
        out[np.linalg.norm(x, axis=1) > self.support_radius] = 0.0
        return out

    def derivative(self, x, alpha):
        """Partial derivative ``d^alpha V`` for ``|alpha| <= 2``."""
        alpha = tuple(int(a) for a in alpha)
        order = sum(alpha)
        if order == 0:
            return self.value(x)
        if order == 1:
            return self.gradient(x)[:, alpha.index(1)]
        if order == 2:
            idx = [i for i, a in enumerate(alpha) for _ in range(a)]
            return self.hessian(x)[:, idx[0], idx[1]]
        raise DomainError("a C^{2,kappa} model only has derivatives up to order 2")

    def __call__(self, x):
        return self.value(x)


def hessian_holder_ratios(V, pairs_x, pairs_y, kappa):
    """``max_entry |D^2V(x) - D^2V(y)| / |x - y|^kappa`` for each pair."""
    dist = np.linalg.norm(pairs_x - pairs_y, axis=1)
    diff = np.abs(V.hessian(pairs_x) - V.hessian(pairs_y)).reshape(len(dist), -1).max(axis=1)
    ok = dist > 0
    return diff[ok] / dist[ok] ** kappa


def certify_holder(V, n_pairs=20_000, seed=0):
    """Estimate the Hessian Hölder constant by sampling pairs.

    Half the pairs are uniform in the support ball; the other half put one
    point near a known singular point (or a uniform point if there is none)
    and the partner at a log-uniform distance.
    """
    rng = np.random.default_rng(seed)
    d, R = V.d, V.support_radius
    half = n_pairs // 2

    def uniform_ball(n):
        u = rng.normal(size=(n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * R * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)

    x1, y1 = uniform_ball(half), uniform_ball(half)
    if V.singular_points:
        anchors = np.array(V.singular_points)[rng.integers(len(V.singular_points), size=n_pairs - half)]
    else:
        anchors = uniform_ball(n_pairs - half)
    offs = rng.normal(size=anchors.shape)
    offs /= np.linalg.norm(offs, axis=1, keepdims=True)
    x2 = anchors + offs * 10.0 ** rng.uniform(-6, -1, size=(len(anchors), 1))
    dirs = rng.normal(size=anchors.shape)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y2 = anchors + dirs * 10.0 ** rng.uniform(-3, np.log10(R), size=(len(anchors), 1))
    ratios = hessian_holder_ratios(V, np.vstack([x1, x2]), np.vstack([y1, y2]), V.kappa)
    V.holder_constant = float(np.max(ratios))
    V.holder_samples = int(n_pairs)
    V.holder_seed = int(seed)
    return V.holder_constant


def _require(cond, msg):
    if not cond:
        raise DomainError(msg)


def make_library_potential(name, params=None, d=None):
    """Construct a corpus potential.

    Parameters
    ----------
    name : {"gaussian_well", "holder_well", "double_well", "flat_well"}
    params : dict
        gaussian_well: depth, width, radius.
        holder_well: kappa, center, depth, width, amp, envelope, radius.
        double_well: depth, s, c, radius.
        flat_well: depth, radius (equals ``-depth`` on the half radius).
    d : int, optional
        Dimension; may also be given as ``params["d"]``.
    """
    p = dict(params or {})
    d = int(p.pop("d", d if d is not None else 1))
    _require(d >= 1, "dimension must be positive")
    origin = np.zeros(d)
    if name == "gaussian_well":
        depth, width = float(p.get("depth", 1.0)), float(p.get("width", 1.0))
        radius = float(p.get("radius", 8.0 * width))
        _require(depth > 0 and width > 0 and radius > 0, "gaussian_well needs positive depth, width, radius")
        fld = -depth * (F.RadialField(F.gaussian_profile, origin, width) * F.RadialCutoff(origin, radius))
        model = PotentialModel(name, fld, 1.0, radius, dict(depth=depth, width=width, radius=radius))
    elif name == "holder_well":
        kappa = float(p.get("kappa", 0.5))
        _require(0.0 < kappa <= 1.0, "kappa must lie in (0, 1]")
        center = np.broadcast_to(np.asarray(p.get("center", 0.0), dtype=float), (d,)).copy()
        depth, width = float(p.get("depth", 1.0)), float(p.get("width", 2.0))
        amp, env = float(p.get("amp", 1.0)), float(p.get("envelope", 2.0))
        radius = float(p.get("radius", 8.0 * max(width, env) + np.linalg.norm(center)))
        _require(depth >= 0 and width > 0 and env > 0 and amp > 0, "holder_well parameters out of range")
        well = -depth * F.RadialField(F.gaussian_profile, origin, width)
        cusp = amp * (F.SeparablePowerField(center, 2.0 + kappa) * F.RadialField(F.gaussian_profile, center, env))
        fld = (well + cusp) * F.RadialCutoff(origin, radius)
        model = PotentialModel(name, fld, kappa, radius,
                               dict(kappa=kappa, center=center.tolist(), depth=depth, width=width,
                                    amp=amp, envelope=env, radius=radius),
                               singular_points=[center])
    elif name == "double_well":
        depth, s, c = float(p.get("depth", 1.0)), float(p.get("s", 1.0)), float(p.get("c", 0.5))
        radius = float(p.get("radius", 4.0 * s))
        _require(depth > 0 and s > 0 and radius > 0, "double_well parameters out of range")
        fld = depth * (F.QuarticField(d, s, c) * F.RadialCutoff(origin, radius))
        model = PotentialModel(name, fld, 1.0, radius, dict(depth=depth, s=s, c=c, radius=radius))
    elif name == "flat_well":
        depth, radius = float(p.get("depth", 1.0)), float(p.get("radius", 4.0))
        _require(radius > 0, "flat_well needs a positive radius")
        fld = -depth * F.RadialCutoff(origin, radius)
        model = PotentialModel(name, fld, 1.0, radius, dict(depth=depth, radius=radius))
    else:
        raise DomainError(f"unknown potential {name!r}")
    model.params["d"] = d
    certify_holder(model, n_pairs=int(p.get("holder_pairs", 20_000)), seed=int(p.get("seed", 0)))
    return model


# ---------------------------------------------------------------------------
# vector potentials


class VectorPotential:
    """Smooth compactly supported vector potential ``a = (a_1, ..., a_d)``."""

    d = 1
    support_radius = np.inf

    def value(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        """``J[n, j, k] = d a_j / d x_k``."""
        raise NotImplementedError

    def line_integral(self, x0, x1, n=8):
        """``int a . dl`` along straight segments from rows of x0 to rows of x1."""
        x0, x1 = np.atleast_2d(x0), np.atleast_2d(x1)
        t, w = gauss_legendre(n)
        t, w = 0.5 * (t + 1.0), 0.5 * w
        seg = x1 - x0
        total = np.zeros(len(x0))
        for tk, wk in zip(t, w):
            total += wk * np.sum(self.value(x0 + tk * seg) * seg, axis=1)
        return total

    def sup_norms(self, samples=4096, seed=0):
        """Sampled sup of |a| and |Da| over the support ball."""
        rng = np.random.default_rng(seed)
        R = self.support_radius if np.isfinite(self.support_radius) else 4.0
        x = rng.uniform(-R, R, size=(samples, self.d))
        return {"a": float(np.abs(self.value(x)).max()), "da": float(np.abs(self.jacobian(x)).max())}


class ZeroVectorPotential(VectorPotential):
    def __init__(self, d):
        self.d = d
        self.support_radius = 0.0

    def value(self, x):
        return np.zeros_like(F.as_points(x, self.d))

    def jacobian(self, x):
        x = F.as_points(x, self.d)
        return np.zeros((len(x), self.d, self.d))

    def line_integral(self, x0, x1, n=8):
        return np.zeros(len(np.atleast_2d(x0)))


class SwirlVectorPotential(VectorPotential):
    """``a = (B/2) (-x_2, x_1, 0, ...) * cutoff(|x|/R)``: constant field B near 0."""

    def __init__(self, d, B=1.0, radius=2.0):
        if d < 2:
            raise DomainError("a swirl needs d >= 2")
        self.d, self.B, self.radius = d, float(B), float(radius)
        self.support_radius = self.radius
        self._cut = F.RadialCutoff(np.zeros(d), radius)

    def _rot(self, x):
        r = np.zeros_like(x)
        r[:, 0], r[:, 1] = -x[:, 1], x[:, 0]
        return 0.5 * self.B * r

    def value(self, x):
        x = F.as_points(x, self.d)
        return self._rot(x) * self._cut._value(x)[:, None]

    def jacobian(self, x):
        x = F.as_points(x, self.d)
        c, gc = self._cut._value(x), self._cut._gradient(x)
        M = np.zeros((self.d, self.d))
        M[0, 1], M[1, 0] = -0.5 * self.B, 0.5 * self.B
        return c[:, None, None] * M[None] + self._rot(x)[:, :, None] * gc[:, None, :]


class FieldVectorPotential(VectorPotential):
    """Componentwise fields ``a_j``."""

    def __init__(self, components):
        self.components = list(components)
        self.d = self.components[0].d
        if len(self.components) != self.d:
            raise DomainError("need one component per dimension")
        self.support_radius = max(c.support_radius for c in self.components)

    def value(self, x):
        x = F.as_points(x, self.d)
        return np.stack([c._value(x) for c in self.components], axis=1)

    def jacobian(self, x):
        x = F.as_points(x, self.d)
        return np.stack([c._gradient(x) for c in self.components], axis=1)


class GaugeTransformed(VectorPotential):
    """``a + grad chi``; edge integrals of ``grad chi`` are taken exactly."""

    def __init__(self, base, chi):
        if base.d != chi.d:
            raise DomainError("dimension mismatch")
        self.base, self.chi, self.d = base, chi, base.d
        self.support_radius = max(base.support_radius, chi.support_radius)

    def value(self, x):
        return self.base.value(x) + self.chi.gradient(x)

    def jacobian(self, x):
        return self.base.jacobian(x) + self.chi.hessian(x)

    def line_integral(self, x0, x1, n=8):
        return self.base.line_integral(x0, x1, n) + self.chi.value(x1) - self.chi.value(x0)


def gauge_transform(a, chi):
    """Return the vector potential ``a + grad chi``."""
    return GaugeTransformed(a, chi)


def make_vector_potential(name, params=None, d=1):
    """Library of vector potentials: ``none``, ``swirl``, ``bump``."""
    p = dict(params or {})
    d = int(p.pop("d", d))
    if name in (None, "none", "zero"):
        return ZeroVectorPotential(d)
    if name == "swirl":
        return SwirlVectorPotential(d, float(p.get("B", 1.0)), float(p.get("radius", 2.0)))
    if name == "bump":
        amp = np.broadcast_to(np.asarray(p.get("amp", 1.0), dtype=float), (d,))
        radius = float(p.get("radius", 1.0))
        center = np.broadcast_to(np.asarray(p.get("center", 0.0), dtype=float), (d,))
        return FieldVectorPotential([F.RadialBump(center, radius, amp=a) for a in amp])
    raise DomainError(f"unknown vector potential {name!r}")


# ---------------------------------------------------------------------------
# mollification


def _kernel_rule(panels=16, n=20):
    """Composite Gauss-Legendre rule on [-1, 1]; the bump is flat at the ends."""
    t, w = gauss_legendre(n)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    h = 0.5 * (edges[1:] - edges[:-1])[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + h * t).ravel(), (h * w).ravel()


@dataclass
class MollifierKernel:
    """1-D profile ``psi(t) = (c0 + c2 t^2) b(t)`` on [-1, 1], tensorized.

    ``(c0, c2)`` solve for moments (1, 0, 0) of orders 0, 1, 2.
    """

    c0: float
    c2: float
    moments: dict

    @classmethod
    def standard(cls):
        t, w = _kernel_rule()
        b = smooth.bump(t)
        m = {k: float(np.sum(w * t**k * b)) for k in (0, 2, 4)}
        A = np.array([[m[0], m[2]], [m[2], m[4]]])
        c0, c2 = np.linalg.solve(A, [1.0, 0.0])
        kern = cls(float(c0), float(c2), {})
        kern.moments = kern.moment_table()
        return kern

    def derivative(self, t, n=0):
        t = np.asarray(t, dtype=float)
        poly = [self.c0 + self.c2 * t * t, 2.0 * self.c2 * t, np.full_like(t, 2.0 * self.c2)]
        out = np.zeros_like(t)
        for k in range(min(n, 2) + 1):
            out += comb(n, k) * poly[k] * smooth.bump(t, n - k)
        return out

    def __call__(self, t):
        return self.derivative(t, 0)

    def moment_table(self, orders=(0, 1, 2, 3, 4)):
        t, w = _kernel_rule()
        v = self(t)
        return {j: float(np.sum(w * t**j * v)) for j in orders}


_KERNEL = None


def standard_kernel():
    global _KERNEL
    if _KERNEL is None:
        _KERNEL = MollifierKernel.standard()
    return _KERNEL


class _ConvIntegrand:
    def __init__(self, V, x, eps, beta, kernel, k):
        self.V, self.x, self.eps, self.beta = V, x, eps, beta
        self.kernel, self.k = kernel, k
        self.count = len(x)

    def __call__(self, idx, z):
        pts = (self.x[idx][:, None, 0] - self.eps * z).reshape(-1, 1)
        vals = self.V.derivative(pts, self.beta).reshape(z.shape)
        return vals * self.kernel.derivative(z, self.k)


@dataclass
class MollifiedPotential:
    """``V_eps = V * psi_eps`` with derivative oracles up to order 4.

    Attributes
    ----------
    base : PotentialModel
    epsilon : float
    delta : float or None
        Exponent with ``epsilon = hbar^(1 - delta)`` when built by the harness.
    tol : float
        Absolute quadrature tolerance.
    """

    base: PotentialModel
    epsilon: float
    kernel: MollifierKernel
    delta: Optional[float] = None
    tol: float = 1e-9

    @property
    def d(self):
        return self.base.d

    @property
    def support_radius(self):
        return self.base.support_radius + self.epsilon * np.sqrt(self.d)

    def _split(self, alpha):
        """Put up to two derivatives on V and the rest on the kernel."""
        alpha = list(alpha)
        beta = [0] * len(alpha)
        left = 2
        for i, a in enumerate(alpha):
            take = min(a, left)
            beta[i] = take
            left -= take
        return tuple(beta), tuple(a - b for a, b in zip(alpha, beta))

    def derivative(self, x, alpha):
        x = F.as_points(x, self.d)
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.d or sum(alpha) > 4:
            raise DomainError("derivative multi-index must have length d and order <= 4")
        beta, k = self._split(alpha)
        out = np.zeros(len(x))
        far = np.linalg.norm(x, axis=1) > self.support_radius
        xi = x[~far]
        if len(xi) == 0:
            return out
        scale = self.epsilon ** (-sum(k))
        if self.d == 1:
            integrand = _ConvIntegrand(self.base, xi, self.epsilon, beta, self.kernel, k[0])
            out[~far] = scale * batch_adaptive_gl(integrand, -1.0, 1.0, tol=self.tol, n=10, init_panels=8)
            return out
        if self.base.singular_points:
            out[~far] = scale * self._nested(xi, beta, k)
        else:
            out[~far] = scale * self._tensor(xi, beta, k)
        return out

    def _nested(self, x, beta, k):
        """Iterated adaptive panels; the evaluation point rides along as a prefix."""
        d, eps = self.d, self.epsilon

        def f(pts):
            xs, z = pts[:, :d], pts[:, d:]
            val = self.base.derivative(xs - eps * z, beta)
            for i in range(d):
                val = val * self.kernel.derivative(z[:, i], k[i])
            return val

        lo, hi = -np.ones(d), np.ones(d)
        return _integrate_axes(f, x, lo, hi, 0, self.tol / 2**d, 10)

    def _tensor(self, x, beta, k):
        """Global tensor Gauss-Legendre; successive node counts must agree.

        A single high-order rule clusters nodes where the bump flattens out
        and beats composite panels for the kernel derivatives.
        """
        prev = None
        err = np.inf
        for m in (60, 100, 140, 180):
            cur, mass = self._tensor_rule(x, beta, k, m)
            if prev is not None:
                # signed kernels cancel, so roundoff scales with the absolute mass
                err = float(np.max(np.abs(cur - prev)))
                if err <= max(self.tol, 1e-12 * float(np.max(mass))):
                    return cur
            prev = cur
        raise QuadratureError("tensor mollification did not converge", err, self.tol)

    def _tensor_rule(self, x, beta, k, m):
        z, wz = gauss_legendre(m)
        d = self.d
        Z = np.stack([g.ravel() for g in np.meshgrid(*([z] * d), indexing="ij")], axis=1)
        W = np.ones(len(Z))
        for i in range(d):
            W = W * np.stack(np.meshgrid(*([wz] * d), indexing="ij"), axis=-1).reshape(-1, d)[:, i]
            W = W * self.kernel.derivative(Z[:, i], k[i])
        out = np.empty(len(x))
        mass = np.empty(len(x))
        chunk = max(1, 400_000 // len(Z))
        for s in range(0, len(x), chunk):
            pts = x[s:s + chunk, None, :] - self.epsilon * Z[None]
            vals = self.base.derivative(pts.reshape(-1, d), beta).reshape(len(pts), -1)
            out[s:s + chunk] = vals @ W
            mass[s:s + chunk] = np.abs(vals) @ np.abs(W)
        return out, mass

    def value(self, x):
        return self.derivative(x, (0,) * self.d)

    def gradient(self, x):
        eye = np.eye(self.d, dtype=int)
        return np.stack([self.derivative(x, tuple(e)) for e in eye], axis=1)

    def hessian(self, x):
        x = F.as_points(x, self.d)
        H = np.zeros((len(x), self.d, self.d))
        for i in range(self.d):
            for j in range(i, self.d):
                a = [0] * self.d
                a[i] += 1
                a[j] += 1
                H[:, i, j] = H[:, j, i] = self.derivative(x, tuple(a))
        return H

    def __call__(self, x):
        return self.value(x)


def mollify(V, epsilon, kernel=None, delta=None, tol=1e-9):
    """Convolve ``V`` with the scaled kernel ``psi_eps``.

    Parameters
    ----------
    V : PotentialModel
    epsilon : float
        Kernel scale, ``> 0``.
    kernel : MollifierKernel, optional
        Defaults to the standard (c0 + c2 t^2) bump kernel.
    delta : float, optional
        Recorded exponent of the ``epsilon = hbar^(1-delta)`` coupling.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return MollifiedPotential(V, float(epsilon), kernel or standard_kernel(), delta, tol)


def rate_samples(V, eps, spacing=None, window=6.0, fine=64):
    """Sample points for sup-norm rate measurements.

    A global grid over the support plus dense grids of width ``window*eps``
    around each known singular point (1-D models).
    """
    if V.d != 1:
        raise DomainError("rate sampling is implemented for d = 1")
    R = V.support_radius
    spacing = spacing or 0.02
    pts = [np.arange(-R, R + spacing, spacing)]
    for c in V.singular_points:
        pts.append(np.linspace(c[0] - window * eps, c[0] + window * eps, 2 * fine + 1))
    return np.unique(np.concatenate(pts)).reshape(-1, 1)


def mollification_rates(V, eps_list, spacing=None):
    """Sup norms of ``d^a (V - V_eps)`` for a = 0, 1, 2 and of ``d^3 V_eps``.

    Returns
    -------
    dict with keys ``eps``, ``sup`` (``{order: array}``) and ``slope``
    (least-squares slopes in log-log coordinates).
    """
    eps_list = np.asarray(eps_list, dtype=float)
    sups = {0: [], 1: [], 2: [], 3: []}
    for eps in eps_list:
        Ve = mollify(V, eps)
        x = rate_samples(V, eps, spacing)
        for a in (0, 1, 2):
            sups[a].append(float(np.max(np.abs(V.derivative(x, (a,)) - Ve.derivative(x, (a,))))))
        sups[3].append(float(np.max(np.abs(Ve.derivative(x, (3,))))))
    out = {"eps": eps_list, "sup": {k: np.array(v) for k, v in sups.items()}}
    out["slope"] = {k: float(np.polyfit(np.log(eps_list), np.log(v), 1)[0]) for k, v in out["sup"].items()}
    return out


# ---------------------------------------------------------------------------
# non-critical condition


@dataclass
class NoncriticalReport:
    holds: bool
    measured_min: float
    samples: int


def check_noncritical(V, region, hbar, c, spacing=None):
    """Check ``|V(x)| + hbar^(2/3) >= c`` on a sampling grid of the region.

    Parameters
    ----------
    V : callable or field
        Potential evaluated on points ``(n, d)``.
    region : Box or Ball
    spacing : float, optional
        Grid spacing; defaults to ``diameter / 200`` (``/ 40`` in d = 3).
    """
    if region.empty:
        raise DomainError("empty region")
    if spacing is None:
        spacing = region.diameter / (200.0 if region.d <= 2 else 40.0)
    pts = region.grid(spacing)
    if len(pts) == 0:
        raise DomainError("region contains no sample points")
    vals = np.asarray(V(pts) if callable(V) else V.value(pts), dtype=float)
    m = float(np.min(np.abs(vals))) + hbar ** (2.0 / 3.0)
    return NoncriticalReport(bool(m >= c), m, len(pts))
