"""Vectorized adaptive Gauss-Legendre quadrature.

Two routines are provided: a tensor-product cubature over boxes in R^d that
bisects cells where the children disagree with their parent, and a batched
1-D rule integrating many independent integrands on panels at once.  Both
sum contributions in a fixed order so results do not depend on scheduling.
"""
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _tensor_rule(n, d):
    x, w = gauss_legendre(n)
    nodes = np.array(list(product(x, repeat=d)))
    weights = np.prod(np.array(list(product(w, repeat=d))), axis=1)
    return nodes, weights


def _cell_integrals(f, lo, hi, n, chunk=250_000):
    """Tensor Gauss-Legendre estimate on each cell; lo, hi have shape (m, d)."""
    m, d = lo.shape
    nodes, weights = _tensor_rule(n, d)
    per = max(1, chunk // len(nodes))
    out = np.empty(m)
    for s in range(0, m, per):
        half = 0.5 * (hi[s:s + per] - lo[s:s + per])
        mid = 0.5 * (hi[s:s + per] + lo[s:s + per])
        pts = mid[:, None, :] + half[:, None, :] * nodes[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(len(half), -1)
        out[s:s + per] = np.prod(half, axis=1) * (vals @ weights)
    return out


def _split(lo, hi):
    m, d = lo.shape
    mid = 0.5 * (lo + hi)
    corners = np.array(list(product((0, 1), repeat=d)))
    clo = np.where(corners[None, :, :] == 0, lo[:, None, :], mid[:, None, :])
    chi = np.where(corners[None, :, :] == 0, mid[:, None, :], hi[:, None, :])
    return clo.reshape(-1, d), chi.reshape(-1, d)


def adaptive_cubature(f, lo, hi, rtol=1e-10, atol=1e-14, order=6, initial=2,
                      max_level=40, max_cells=100_000):
    """Integrate ``f`` over the box ``[lo, hi]``.

    Cells are bisected along every axis.  At each pass the cells with the
    smallest parent/children discrepancy are accepted while their summed
    discrepancy stays below half of the unspent error budget; the rest are
    refined.

    Parameters
    ----------
    f : callable
        Maps points of shape ``(n, d)`` to values of shape ``(n,)``.
    lo, hi : array_like
        Box corners.
    rtol, atol : float
        Global budget ``max(atol, rtol * |I|)``.
    order : int
        Gauss-Legendre points per axis in each cell.
    initial : int
        Initial subdivisions per axis.

    Returns
    -------
    value : float
    error : float
        Sum of accepted discrepancy estimates.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = len(lo)
    if np.any(hi <= lo):
        return 0.0, 0.0
    edges = [np.linspace(lo[i], hi[i], initial + 1) for i in range(d)]
    idx = np.array(list(product(range(initial), repeat=d)))
    clo = np.stack([edges[i][idx[:, i]] for i in range(d)], axis=1)
    chi = np.stack([edges[i][idx[:, i] + 1] for i in range(d)], axis=1)
    parent = _cell_integrals(f, clo, chi, order)
    value, error = 0.0, 0.0
    nk = 2**d
    budget = np.inf
    for _ in range(max_level):
        klo, khi = _split(clo, chi)
        kids = _cell_integrals(f, klo, khi, order).reshape(len(clo), nk)
        fine = kids.sum(axis=1)
        err = np.abs(fine - parent)
        budget = max(atol, rtol * abs(value + float(np.sum(fine))))
        if error + float(np.sum(err)) <= budget:
            return value + float(np.sum(fine)), error + float(np.sum(err))
        order_idx = np.argsort(err, kind="stable")
        csum = np.cumsum(err[order_idx])
        n_ok = int(np.searchsorted(csum, 0.5 * (budget - error), side="right"))
        done = np.zeros(len(err), dtype=bool)
        done[order_idx[:n_ok]] = True
        value += float(np.sum(fine[done]))
        error += float(np.sum(err[done]))
        keep = ~done
        clo = klo.reshape(-1, nk, d)[keep].reshape(-1, d)
        chi = khi.reshape(-1, nk, d)[keep].reshape(-1, d)
        parent = kids[keep].reshape(-1)
        if len(clo) > max_cells:
            break
    raise QuadratureError("adaptive cubature did not converge", error + float(np.sum(err[~done])), budget)


def batch_adaptive_gl(F, a, b, tol=1e-9, n=10, init_panels=8, max_depth=40, breakpoints=None):
    """Integrate many 1-D integrands ``F(idx, z)`` over ``[a, b]``.

    Parameters
    ----------
    F : callable
        ``F(idx, z)`` receives integer indices of shape ``(m,)`` and nodes of
        shape ``(m, n)`` and returns values of shape ``(m, n)``.
    a, b : float
        Common integration interval.
    tol : float
        Absolute tolerance per unit length of the interval.
    breakpoints : array_like, optional
        Per-integrand interior points where panels should start (e.g. kinks).

    Returns
    -------
    ndarray of shape ``(count,)`` where ``count`` is inferred from ``breakpoints``
    or must be given via ``F.count``.
    """
    x, w = gauss_legendre(n)
    count = F.count if breakpoints is None else len(breakpoints)
    base = np.linspace(a, b, init_panels + 1)
    pidx, plo, phi = [], [], []
    for i in range(count):
        e = base
        if breakpoints is not None:
            bp = np.atleast_1d(breakpoints[i])
            bp = bp[(bp > a) & (bp < b)]
            if len(bp):
                e = np.unique(np.concatenate([base, bp]))
        pidx.append(np.full(len(e) - 1, i))
        plo.append(e[:-1])
        phi.append(e[1:])
    pidx = np.concatenate(pidx)
    plo = np.concatenate(plo)
    phi = np.concatenate(phi)

    def rule(idx, lo, hi):
        half = 0.5 * (hi - lo)
        z = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
        return half * (np.asarray(F(idx, z)) @ w)

    whole = rule(pidx, plo, phi)
    out = np.zeros(count)
    worst = 0.0
    scale = tol / (b - a)
    for depth in range(max_depth):
        mid = 0.5 * (plo + phi)
        left = rule(pidx, plo, mid)
        right = rule(pidx, mid, phi)
        fine = left + right
        err = np.abs(fine - whole)
        # panels around an isolated singularity shrink geometrically, so an
        # absolute floor stops them once their contribution is negligible
        ok = (err <= scale * (phi - plo)) | (err <= 1e-4 * tol)
        done = ok | (depth == max_depth - 1)
        if depth == max_depth - 1 and not np.all(ok):
            worst = float(np.max(err[~ok]))
        np.add.at(out, pidx[done], fine[done])
        keep = ~done
        if not np.any(keep):
            break
        pidx = np.concatenate([pidx[keep], pidx[keep]])
        plo, phi = np.concatenate([plo[keep], mid[keep]]), np.concatenate([mid[keep], phi[keep]])
        whole = np.concatenate([left[keep], right[keep]])
    if worst > 0:
        raise QuadratureError("panel quadrature hit maximal depth", worst, tol)
    return out


class _AxisIntegrand:
    """Integrand over one axis for a batch of fixed prefix coordinates."""

    def __init__(self, f, prefix, lo, hi, k, tol_density, n, breaks=None):
        self.f, self.prefix, self.lo, self.hi = f, prefix, lo, hi
        self.k, self.tol_density, self.n = k, tol_density, n
        self.breaks = breaks
        self.count = len(prefix)

    def __call__(self, idx, z):
        m, q = z.shape
        pts = np.concatenate([np.repeat(self.prefix[idx], q, axis=0), z.reshape(-1, 1)], axis=1)
        d = len(self.lo)
        if self.k == d - 1:
            return np.asarray(self.f(pts), dtype=float).reshape(m, q)
        return _integrate_axes(self.f, pts, self.lo, self.hi, self.k + 1,
                               self.tol_density, self.n, self.breaks).reshape(m, q)


def _integrate_axes(f, prefix, lo, hi, k, tol_density, n, breaks=None):
    inner_measure = float(np.prod(hi[k:] - lo[k:]))
    F = _AxisIntegrand(f, prefix, lo, hi, k, tol_density, n, breaks)
    bp = None
    if breaks is not None and len(breaks[k]):
        bp = [breaks[k]] * len(prefix)
    return batch_adaptive_gl(F, lo[k], hi[k], tol=tol_density * inner_measure, n=n, init_panels=4,
                             breakpoints=bp)


def nested_quadrature(f, lo, hi, rtol=1e-10, atol=1e-15, n=10, breaks=None):
    """Iterated adaptive Gauss-Legendre over the box ``[lo, hi]``.

    Each axis is integrated with batched adaptive panels, so a kink across
    a hypersurface only forces refinement of the innermost 1-D rules; the
    outer integrands inherit extra smoothness from the inner integration.

    Parameters
    ----------
    f : callable
        Maps points ``(n, d)`` to values ``(n,)``.
    rtol, atol : float
        Target accuracy ``max(atol, rtol * |I|)``; the scale of ``I`` is
        taken from a coarse pre-pass.
    breaks : sequence of array_like, optional
        Per-axis coordinates where the integrand has kinks; panels start there.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = len(lo)
    if np.any(hi <= lo):
        return 0.0
    vol = float(np.prod(hi - lo))
    nodes, weights = _tensor_rule(8, d)
    pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
    rough = abs(float(np.asarray(f(pts)) @ weights)) * vol / 2**d
    tol_density = max(atol, rtol * rough) / vol
    # smooth integrands settle with one tensor rule; two orders must agree closely
    if d >= 2 and breaks is None:
        vals = []
        for m in (24, 36):
            nodes, weights = _tensor_rule(m, d)
            pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
            vals.append(float(np.asarray(f(pts)) @ weights) * vol / 2**d)
        if abs(vals[1] - vals[0]) <= 0.01 * tol_density * vol:
            return vals[1]
    empty = np.zeros((1, 0))
    if breaks is not None:
        breaks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in breaks]
    return float(_integrate_axes(f, empty, lo, hi, 0, tol_density, n, breaks)[0])
