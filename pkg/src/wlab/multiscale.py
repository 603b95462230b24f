"""Slowly varying length scales, ball coverings and partitions of unity.

A scale function ``l`` with ``|grad l| <= rho < 1/8`` yields a covering by
balls ``B(x_k, l(x_k))``, a subordinate partition of unity with
``|d^a phi_k| <= C_a l_k^-|a|``, and per-ball rescalings

    hbar_k = hbar / (l_k f_k),  mu_k = mu l_k / f_k,
    V~(y) = f_k^-2 V(l_k y + x_k),  a~(y) = a(l_k y + x_k) / l_k.
"""
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError, PreconditionError
from .quadrature import nested_quadrature
from .regions import Ball, Box
from .smooth import plateau

RHO_MAX = 1.0 / 8.0


def _values(V, x):
    return np.asarray(V.value(x) if hasattr(V, "value") else V(x), dtype=float)


def _gradients(V, x):
    if hasattr(V, "gradient"):
        return np.asarray(V.gradient(x), dtype=float).reshape(len(x), -1)
    # central differences for plain callables
    h = 1e-6
    d = x.shape[1]
    out = np.empty((len(x), d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out[:, i] = (_values(V, x + e) - _values(V, x - e)) / (2 * h)
    return out


@dataclass
class ScaleFunction:
    """Length scale ``l`` and amplitude scale ``f`` on a working region.

    Attributes
    ----------
    l, grad_l, f : callable
        Functions of points ``(n, d)``.
    rho : float
        Measured ``sup |grad l|`` on the region.
    A : float
        Calibration constant (``noncritical`` mode); ``None`` in ``large_mu`` mode.
    mode : {"noncritical", "large_mu"}
    """

    l: Callable
    grad_l: Callable
    f: Callable
    rho: float
    A: Optional[float]
    mode: str
    epsilon_buffer: float
    hbar: Optional[float] = None
    l_max: float = 1.0

    def __call__(self, x):
        return self.l(x)


def _noncritical_scale(V, hbar, A):
    h43 = hbar ** (4.0 / 3.0)

    def l(x):
        return np.sqrt(_values(V, x) ** 2 + h43) / A

    def grad_l(x):
        v = _values(V, x)
        return (v / np.sqrt(v**2 + h43))[:, None] * _gradients(V, x) / A

    def f(x):
        return np.sqrt(l(x))

    return l, grad_l, f


def _samples(region, n, seed):
    rng = np.random.default_rng(seed)
    lo, hi = region.bounds
    pts = lo + (hi - lo) * rng.uniform(size=(4 * n, len(lo)))
    pts = pts[region.contains(pts)][:n]
    return pts


def calibrate_scale(V, hbar, target_region, epsilon_buffer, samples=10_000, seed=0, A0=2.0**-10):
    """Smallest ``A`` in a doubling sequence with ``sup |grad l| < 1/8`` and
    ``sup l <= min(epsilon_buffer / 11, 1)`` on the region.

    ``l(x) = A^-1 sqrt(V(x)^2 + hbar^(4/3))``; both quantities scale like
    ``A^-1`` so the search always terminates.
    """
    if not epsilon_buffer > 0:
        raise DomainError("epsilon_buffer must be positive")
    pts = _samples(target_region, samples, seed)
    if hasattr(target_region, "center"):
        pts = np.vstack([pts, np.asarray(target_region.center, float)[None, :]])
    cap = min(epsilon_buffer / 11.0, 1.0)
    v = _values(V, pts)
    base_l = np.sqrt(v**2 + hbar ** (4.0 / 3.0))
    g = np.linalg.norm((v / base_l)[:, None] * _gradients(V, pts), axis=1)
    A = A0
    while not (np.max(g) / A < RHO_MAX and np.max(base_l) / A <= cap):
        A *= 2.0
    l, grad_l, f = _noncritical_scale(V, hbar, A)
    return ScaleFunction(l, grad_l, f, float(np.max(g) / A), A, "noncritical", float(epsilon_buffer), hbar,
                         float(np.max(base_l) / A))


def large_mu_scale(mu, mu0, epsilon_buffer, d=None):
    """Constant scale ``l = min(1, epsilon_buffer/11) mu0 / mu`` with ``f = 1``."""
    if not (0 < mu0 < 1):
        raise DomainError("mu0 must lie in (0, 1)")
    if mu < mu0:
        raise DomainError(f"mu = {mu} below mu0 = {mu0}")
    lv = min(1.0, epsilon_buffer / 11.0) * mu0 / mu

    def l(x):
        return np.full(len(np.atleast_2d(x)), lv)

    def grad_l(x):
        return np.zeros_like(np.atleast_2d(x), dtype=float)

    def f(x):
        return np.ones(len(np.atleast_2d(x)))

    return ScaleFunction(l, grad_l, f, 0.0, None, "large_mu", float(epsilon_buffer), None, lv)


def overlap_bound(rho, d):
    """Multiplicity bound for the greedy cover.

    Greedy centers are pairwise at least ``l(x)/(2(1 + rho))`` apart after the
    repair pass, and every ball through ``x`` has its center within
    ``l(x)/(1 - rho)``; packing half-distance balls gives
    ``(4 (1 + rho)/(1 - rho) + 1)^d``, below ``2 * 6^d`` for ``rho < 1/8``.
    """
    if not 0 <= rho < 1:
        raise DomainError("rho must lie in [0, 1)")
    return int(np.floor((4.0 * (1 + rho) / (1 - rho) + 1.0) ** d))


def _psi(r, n=0):
    # equals 1 on the half ball, vanishes outside the unit ball
    return plateau(r, n)


def admissibility_grid(region, l, factor=8.0, max_points=5_000_000):
    """Cell centers of an adaptive grid whose local spacing is at most ``l(x)/factor``.

    The bounding box is bisected until every cell edge is below the scale at
    its center divided by ``factor``; with ``|grad l| < 1/8`` this bounds the
    spacing by ``l/factor`` up to a factor ``1 + rho``.
    """
    lo, hi = region.bounds
    d = len(lo)
    width = hi - lo
    n0 = np.maximum(1, np.ceil(width / np.min(width)).astype(int))
    axes = [lo[i] + width[i] * (np.arange(n0[i]) + 0.5) / n0[i] for i in range(d)]
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    size = np.tile(width / n0, (len(centers), 1))
    leaves, leaf_size = [], []
    while len(centers):
        need = np.max(size, axis=1) > l(centers) / factor
        leaves.append(centers[~need])
        leaf_size.append(size[~need])
        centers, size = centers[need], size[need]
        if len(centers) == 0:
            break
        offs = np.array(np.meshgrid(*([[-0.25, 0.25]] * d), indexing="ij")).reshape(d, -1).T
        centers = (centers[:, None, :] + offs[None, :, :] * size[:, None, :]).reshape(-1, d)
        size = np.repeat(size / 2, 2**d, axis=0)
        if sum(len(c) for c in leaves) + len(centers) > max_points:
            raise ConfigurationError("admissibility grid exceeds the point budget")
    pts = np.vstack(leaves)
    pts = pts[region.contains(pts)]
    order = np.lexsort(pts.T[::-1])
    return pts[order]


@dataclass
class ScaleCover:
    """Balls ``B(x_k, l_k)`` covering a region, with optional partition of unity."""

    centers: np.ndarray
    scales: np.ndarray
    amplitudes: np.ndarray
    scale: ScaleFunction
    region: object
    grid: np.ndarray = field(repr=False, default=None)
    overlap: int = 0
    overlap_bound: int = 0
    per_point_overlap: np.ndarray = field(repr=False, default=None)
    constants: dict = field(default_factory=dict)
    has_partition: bool = False

    @property
    def size(self):
        return len(self.centers)

    def _tree(self):
        if not hasattr(self, "_kd"):
            self._kd = cKDTree(self.centers)
        return self._kd

    def psi_matrix(self, x, n=0):
        """Sparse-ish evaluation: returns (point index, ball index, psi value) arrays."""
        x = np.atleast_2d(x)
        tree = self._tree()
        rmax = float(np.max(self.scales))
        pi, bi = [], []
        for i, nb in enumerate(tree.query_ball_point(x, rmax)):
            pi.extend([i] * len(nb))
            bi.extend(nb)
        pi, bi = np.array(pi, dtype=int), np.array(bi, dtype=int)
        if len(pi) == 0:
            return pi, bi, np.zeros(0)
        r = np.linalg.norm(x[pi] - self.centers[bi], axis=1) / self.scales[bi]
        return pi, bi, _psi(r)

    def psi_sum(self, x):
        pi, bi, v = self.psi_matrix(x)
        out = np.zeros(len(np.atleast_2d(x)))
        np.add.at(out, pi, v)
        return out

    def phi(self, k, x):
        """Partition function ``phi_k`` at points ``x``."""
        x = np.atleast_2d(x)
        r = np.linalg.norm(x - self.centers[k], axis=1) / self.scales[k]
        num = _psi(r)
        den = self.psi_sum(x)
        out = np.zeros(len(x))
        on = num > 0
        if np.any(on & (den <= 0)):
            raise AssertionError("partition denominator vanishes inside a ball")
        out[on] = num[on] / den[on]
        return out

    def phi_all(self, x):
        """Dense matrix ``phi_k(x_i)`` of shape (n_points, n_balls)."""
        x = np.atleast_2d(x)
        pi, bi, v = self.psi_matrix(x)
        den = np.zeros(len(x))
        np.add.at(den, pi, v)
        M = np.zeros((len(x), self.size))
        ok = den[pi] > 0
        M[pi[ok], bi[ok]] = v[ok] / den[pi[ok]]
        return M

    def multiplicity(self, x):
        x = np.atleast_2d(x)
        counts = np.zeros(len(x), dtype=int)
        tree = self._tree()
        rmax = float(np.max(self.scales))
        for i, nb in enumerate(tree.query_ball_point(x, rmax)):
            if nb:
                nb = np.array(nb)
                counts[i] = int(np.sum(np.linalg.norm(x[i] - self.centers[nb], axis=1) < self.scales[nb]))
        return counts

    def to_json(self, hbar=None, mu=0.0):
        """Cover dump: list of ``{k, x_k, l_k, f_k, hbar_k, mu_k, overlap}``."""
        counts = self.multiplicity(self.centers)
        rows = []
        for k in range(self.size):
            lk, fk = float(self.scales[k]), float(self.amplitudes[k])
            rows.append({"k": k, "x_k": [float(v) for v in self.centers[k]], "l_k": lk, "f_k": fk,
                         "hbar_k": None if hbar is None else float(hbar / (lk * fk)),
                         "mu_k": float(mu * lk / fk), "overlap": int(counts[k])})
        return json.dumps(rows, indent=1)


def greedy_cover(region, l, factor=8.0, repair=0.5):
    """Greedy covering on an admissibility grid.

    Grid points are swept in lexicographic order; each point not yet inside a
    chosen ball becomes a new center.  A repair sweep then adds centers at
    grid points where ``sum_k psi((x - x_k)/l_k) < repair``, so the partition
    denominators stay bounded below.

    Parameters
    ----------
    region : Box or Ball
    l : ScaleFunction
    """
    if l.rho >= RHO_MAX:
        raise PreconditionError(f"scale function has rho = {l.rho:.3g} >= 1/8")
    if region.empty:
        raise DomainError("empty region")
    pts = admissibility_grid(region, l.l, factor)
    if len(pts) == 0:
        raise DomainError("admissibility grid is empty; region too small for the scale")
    lv = l.l(pts)
    tree = cKDTree(pts)
    covered = np.zeros(len(pts), bool)
    psum = np.zeros(len(pts))
    chosen = []

    def add(i):
        chosen.append(i)
        nb = np.array(tree.query_ball_point(pts[i], lv[i]), dtype=int)
        if len(nb):
            r = np.linalg.norm(pts[nb] - pts[i], axis=1) / lv[i]
            inside = r < 1.0
            covered[nb[inside]] = True
            psum[nb] += _psi(r)

    for i in range(len(pts)):
        if not covered[i]:
            add(i)
    for i in range(len(pts)):
        if psum[i] < repair:
            add(i)
    centers = pts[chosen]
    scales = lv[chosen]
    amps = l.f(centers)
    cover = ScaleCover(centers, scales, amps, l, region, grid=pts)
    counts = cover.multiplicity(pts)
    cover.per_point_overlap = counts
    cover.overlap = int(counts.max())
    cover.overlap_bound = overlap_bound(l.rho, pts.shape[1])
    if counts.min() < 1:
        raise DomainError("uncovered admissibility points remain")
    if cover.overlap > cover.overlap_bound:
        raise AssertionError(f"overlap {cover.overlap} exceeds bound {cover.overlap_bound}")
    return cover


def _fd_derivative(fun, x, direction, order, h):
    """Centered finite-difference directional derivative of order 1..3."""
    e = direction * h
    if order == 1:
        return (fun(x + e) - fun(x - e)) / (2 * h)
    if order == 2:
        return (fun(x + e) - 2 * fun(x) + fun(x - e)) / h**2
    return (fun(x + 2 * e) - 2 * fun(x + e) + 2 * fun(x - e) - fun(x - 2 * e)) / (2 * h**3)


def _interior(region, x, margin):
    return region.dilate(-margin).contains(x) if hasattr(region, "dilate") else np.ones(len(x), bool)


def partition_of_unity(cover, samples=10_000, seed=0, derivative_samples=16):
    """Attach ``phi_k = psi_k / sum_j psi_j`` and audit the partition invariants.

    Records in ``cover.constants``: ``sum_dev`` (max ``|sum phi_k - 1|``),
    ``support_ok`` and ``C1..C3`` (max over sampled k, x of
    ``|d^a phi_k| l_k^|a|`` along coordinate axes).
    """
    pts = _samples(cover.region, samples, seed)
    den = cover.psi_sum(pts)
    if np.any(den <= 0):
        raise AssertionError("partition denominator vanishes inside the region")
    M = cover.phi_all(pts)
    sum_dev = float(np.max(np.abs(M.sum(axis=1) - 1.0)))
    # supports: phi_k > 0 only inside B(x_k, l_k)
    nz = np.nonzero(M > 0)
    dist = np.linalg.norm(pts[nz[0]] - cover.centers[nz[1]], axis=1)
    support_ok = bool(np.all(dist < cover.scales[nz[1]]))
    rng = np.random.default_rng(seed + 1)
    d = pts.shape[1]
    consts = {1: 0.0, 2: 0.0, 3: 0.0}
    ks = rng.choice(cover.size, size=min(cover.size, 64), replace=False)
    for k in ks:
        lk = cover.scales[k]
        u = rng.normal(size=(derivative_samples, d))
        u /= np.linalg.norm(u, axis=1)[:, None]
        x = cover.centers[k] + lk * rng.uniform(0, 1, (derivative_samples, 1)) * u
        # the partition lives on the region; outside it the denominator is uncontrolled
        x = x[_interior(cover.region, x, 4e-3 * lk)]
        if len(x) == 0:
            continue
        for axis in range(d):
            e = np.zeros(d)
            e[axis] = 1.0
            for order in (1, 2, 3):
                val = _fd_derivative(lambda y: cover.phi(k, y), x, e, order, 2e-3 * lk)
                consts[order] = max(consts[order], float(np.max(np.abs(val))) * lk**order)
    cover.constants = {"sum_dev": sum_dev, "support_ok": support_ok, "C1": consts[1], "C2": consts[2],
                       "C3": consts[3], "samples": len(pts)}
    cover.has_partition = True
    return cover


def slow_variation_audit(cover, samples_per_ball=32, seed=0):
    """Worst ratio ``l(x)/l_k`` over sampled ``x`` in ``B(x_k, 8 l_k)`` within the region."""
    rng = np.random.default_rng(seed)
    d = cover.centers.shape[1]
    lo, hi = np.inf, 0.0
    for k in range(cover.size):
        u = rng.normal(size=(samples_per_ball, d))
        u /= np.linalg.norm(u, axis=1)[:, None]
        x = cover.centers[k] + 8 * cover.scales[k] * rng.uniform(0, 1, (samples_per_ball, 1)) ** (1 / d) * u
        x = x[cover.region.contains(x)]
        if len(x) == 0:
            continue
        r = cover.scale.l(x) / cover.scales[k]
        lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
    rho = cover.scale.rho
    return {"min_ratio": lo, "max_ratio": hi, "lower": 1 - 8 * rho, "upper": 1 + 8 * rho,
            "holds": bool(lo >= 1 - 8 * rho - 1e-12 and hi <= 1 + 8 * rho + 1e-12)}


@dataclass
class RescaledProblem:
    """Fields of one ball moved to unit scale."""

    hbar_k: float
    mu_k: float
    V: Callable
    a: Optional[Callable]
    phi: Optional[Callable]
    center: np.ndarray
    l_k: float
    f_k: float
    norms: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)


def _ball_samples(d, radius, n, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=1)[:, None]
    return radius * rng.uniform(0, 1, (n, 1)) ** (1 / d) * u


def rescale(V, a, phi, x_k, l_k, f_k, hbar, mu, scale=None, mu0=None, samples=4000, seed=0):
    """Rescale ``V``, ``a`` and a localizer to the unit ball around ``x_k``.

    Checks (sampled on ``B(0, 8)``), each recorded in ``checks``:

    - ``hbar_k <= A^(3/2)`` (noncritical mode, needs ``scale``);
    - ``mu_k <= mu0`` when ``mu0`` is given;
    - ``|V~| + hbar_k^(2/3) >= (1 - 8 rho) A``;
    - ``|V~| <= (1 + 8 rho) A`` on ``B(0, 8)`` (exactly ``<= A`` at the center scale);
    - ``||d V~|| <= ||d V||``, ``||d^2 V~|| <= ||d^2 V||`` and ``||d a~|| <= ||d a||``.

    Raises
    ------
    PreconditionError
        Naming the first failing bound.
    """
    x_k = np.atleast_1d(np.asarray(x_k, dtype=float))
    d = len(x_k)
    l_k, f_k = float(l_k), float(f_k)
    hbar_k = hbar / (l_k * f_k)
    mu_k = mu * l_k / f_k

    def Vt(y):
        return _values(V, l_k * np.atleast_2d(y) + x_k) / f_k**2

    At = None
    if a is not None:
        def At(y):
            return np.asarray(a(l_k * np.atleast_2d(y) + x_k), dtype=float) / l_k

    Pt = None
    if phi is not None:
        def Pt(y):
            return _values(phi, l_k * np.atleast_2d(y) + x_k)

    y = _ball_samples(d, 8.0, samples, seed)
    x = l_k * y + x_k
    vt = Vt(y)
    norms = {"V": float(np.max(np.abs(_values(V, x)))), "V~": float(np.max(np.abs(vt)))}
    if hasattr(V, "gradient"):
        norms["dV"] = float(np.max(np.abs(V.gradient(x))))
        norms["dV~"] = float(np.max(np.abs(l_k / f_k**2 * V.gradient(x))))
    if hasattr(V, "hessian"):
        norms["d2V"] = float(np.max(np.abs(V.hessian(x))))
        norms["d2V~"] = float(np.max(np.abs(l_k**2 / f_k**2 * V.hessian(x))))
    if a is not None and hasattr(a, "jacobian"):
        J = np.asarray(a.jacobian(x))
        norms["da"] = float(np.max(np.abs(J)))
        norms["da~"] = float(np.max(np.abs(J)))  # l_k^-1 * l_k
    checks = {}
    slack = 1e-12
    if "dV" in norms:
        checks["dV~ <= dV"] = norms["dV~"] <= norms["dV"] * (1 + slack) + slack
    if "d2V" in norms:
        checks["d2V~ <= d2V"] = norms["d2V~"] <= norms["d2V"] * (1 + slack) + slack
    if "da" in norms:
        checks["da~ <= da"] = norms["da~"] <= norms["da"] * (1 + slack) + slack
    if scale is not None and scale.mode == "noncritical":
        A, rho = scale.A, scale.rho
        checks["hbar_k <= A^1.5"] = hbar_k <= A**1.5 * (1 + slack)
        low = float(np.min(np.abs(vt) + hbar_k ** (2.0 / 3.0)))
        norms["noncritical_min"] = low
        checks["noncritical transfer"] = low >= (1 - 8 * rho) * A * (1 - slack)
        checks["|V~| <= (1+8rho)A"] = norms["V~"] <= (1 + 8 * rho) * A * (1 + slack)
        centre = abs(float(Vt(np.zeros((1, d)))[0]))
        checks["|V~(0)| <= A"] = centre <= A * (1 + slack)
    if mu0 is not None:
        checks["mu_k <= mu0"] = mu_k <= mu0 * (1 + slack)
    prob = RescaledProblem(hbar_k, mu_k, Vt, At, Pt, x_k, l_k, f_k, norms, checks)
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise PreconditionError(f"rescaled bound fails: {failed[0]}")
    return prob


def error_budget(cover, hbar, gamma, d, rtol=1e-6):
    """``sum_k hbar_k^(1+gamma-d) f_k^(2 gamma)`` against its integral form.

    Returns ``sum``, ``integral_bound = hbar^(1+gamma-d) int l^((d-3-gamma)/2)``
    and ``ratio = sum / hbar^(1+gamma-d)``.
    """
    l = cover.scales
    f = cover.amplitudes
    hk = hbar / (l * f)
    e = 1.0 + gamma - d
    total = float(np.sum(hk**e * f ** (2 * gamma)))
    lo, hi = cover.region.bounds
    region = cover.region
    s = (d - 3.0 - gamma) / 2.0

    def integrand(x):
        return cover.scale.l(x) ** s * region.contains(x)

    integral = nested_quadrature(integrand, lo, hi, rtol=rtol) if isinstance(region, Ball) \
        else nested_quadrature(lambda x: cover.scale.l(x) ** s, lo, hi, rtol=rtol)
    return {"sum": total, "integral_bound": hbar**e * integral, "ratio": total / hbar**e, "balls": cover.size}
