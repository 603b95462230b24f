"""Discrete Weyl quantization on a periodic phase-space grid.

Positions ``x_j = -L + j h`` with ``h = 2L/N`` and momenta ``p_k = hbar pi k / L``
for ``k = -N/2, ..., N/2 - 1``.  The matrix of ``Op(a)`` is

    A[j, l] = N^-d * sum_k exp(i (x_j - x_l) p_k / hbar) a((x_j + x_l)/2, p_k),

with offsets ``j - l`` reduced to the torus.  Midpoints live on the half grid
``-L + m h/2``; antipodal offsets and the Nyquist momentum are averaged over
their two representatives; a real symbol then gives a Hermitian matrix.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DomainError, PreconditionError


# ---------------------------------------------------------------------------
# grids and symbols


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic position grid on ``[-L, L)^d`` and its dual momentum grid."""

    L: float
    N: int
    d: int = 1

    def __post_init__(self):
        if self.N < 2 or self.N & (self.N - 1):
            raise ConfigurationError("N must be a power of two")
        if self.d not in (1, 2):
            raise ConfigurationError("quantized matrices are limited to d <= 2")
        if not self.L > 0:
            raise ConfigurationError("L must be positive")

    @property
    def h(self):
        return 2.0 * self.L / self.N

    @property
    def x(self):
        return -self.L + self.h * np.arange(self.N)

    def momenta(self, hbar):
        k = np.fft.fftfreq(self.N) * self.N
        return hbar * np.pi / self.L * k

    def p_max(self, hbar):
        return hbar * np.pi / self.h

    def points(self):
        """Grid points, shape ``(N^d, d)``, row-major over axes."""
        g = np.meshgrid(*([self.x] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)


class RoughSymbol:
    """Phase-space function with derivative oracles.

    Parameters
    ----------
    d : int
    value : callable
        ``value(x, p)`` for arrays of shape ``(n, d)``; may be complex.
    derivative : callable, optional
        ``derivative(x, p, alpha, beta)`` returning ``d_x^alpha d_p^beta a``.
        Falls back to central differences.
    p_extent : float
        Momenta beyond which the symbol is negligible; used for the
        no-aliasing check.
    support : tuple, optional
        ``(xlo, xhi, plo, phi)`` box containing the support.
    tau, epsilon : regularity order and mollification scale.
    weight : callable, optional
        Tempered weight ``m(x, p)``; defaults to 1.
    """

    def __init__(self, d, value, derivative=None, p_extent=np.inf, support=None,
                 tau=np.inf, epsilon=1.0, weight=None, constants=None, name=""):
        self.d = d
        self._value = value
        self._derivative = derivative
        self.p_extent = float(p_extent)
        self.support = support
        self.tau, self.epsilon = tau, epsilon
        self.weight = weight
        self.constants = dict(constants or {})
        self.name = name

    def __call__(self, x, p):
        return self._value(np.asarray(x, float), np.asarray(p, float))

    def derivative(self, x, p, alpha, beta):
        alpha, beta = tuple(alpha), tuple(beta)
        if sum(alpha) + sum(beta) == 0:
            return self(x, p)
        if self._derivative is not None:
            return self._derivative(np.asarray(x, float), np.asarray(p, float), alpha, beta)
        return _central_difference(self, np.asarray(x, float), np.asarray(p, float), alpha, beta)

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        return _combine(self, other, lambda u, v: u + v, "sum")

    def __mul__(self, other):
        if np.isscalar(other):
            c = other
            return RoughSymbol(self.d, lambda x, p: c * self(x, p),
                               lambda x, p, a, b: c * self.derivative(x, p, a, b),
                               self.p_extent, self.support, self.tau, self.epsilon, self.weight)
        return _combine(self, other, lambda u, v: u * v, "product")

    __rmul__ = __mul__


def _combine(a, b, op, kind):
    ext = max(a.p_extent, b.p_extent) if kind == "sum" else min(a.p_extent, b.p_extent)
    return RoughSymbol(a.d, lambda x, p: op(a(x, p), b(x, p)), None, ext)


def _central_difference(sym, x, p, alpha, beta, step=1e-3):
    """Sixth-order central differences, one axis at a time."""
    coeffs = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    second = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0
    orders = list(alpha) + list(beta)
    if max(orders) > 2:
        raise DomainError("finite-difference fallback supports orders <= 2 per axis")
    d = sym.d
    # find the first axis with a nonzero order and recurse
    for i, o in enumerate(orders):
        if o:
            break
    rest_a, rest_b = list(alpha), list(beta)
    if i < d:
        rest_a[i] -= o
    else:
        rest_b[i - d] -= o
    stencil = coeffs if o == 1 else second
    total = 0.0
    for s, c in zip(range(-3, 4), stencil):
        if c == 0.0:
            continue
        xs, ps = x.copy(), p.copy()
        if i < d:
            xs[:, i] += s * step
        else:
            ps[:, i - d] += s * step
        total = total + c * sym.derivative(xs, ps, rest_a, rest_b)
    return total / step**o


def gaussian_symbol(d=1, x0=0.0, p0=0.0, sx=0.5, sp=0.5, amp=1.0, tail=9.0):
    """``amp * exp(-|x - x0|^2 / 2 sx^2 - |p - p0|^2 / 2 sp^2)`` with exact derivatives.

    ``tail`` (in standard deviations) sets the reported support and momentum extent.
    """
    x0 = np.broadcast_to(np.asarray(x0, float), (d,))
    p0 = np.broadcast_to(np.asarray(p0, float), (d,))

    def value(x, p):
        return amp * np.exp(-np.sum((x - x0) ** 2, axis=1) / (2 * sx**2)
                            - np.sum((p - p0) ** 2, axis=1) / (2 * sp**2))

    def hermite(u, n, s):
        # d^n/du^n exp(-u^2 / 2 s^2) / exp(-u^2 / 2 s^2)
        if n == 0:
            return np.ones_like(u)
        if n == 1:
            return -u / s**2
        if n == 2:
            return (u * u - s * s) / s**4
        if n == 3:
            return -(u**3 - 3 * s * s * u) / s**6
        if n == 4:
            return (u**4 - 6 * s * s * u * u + 3 * s**4) / s**8
        raise DomainError("Gaussian symbol derivatives are provided up to order 4")

    def derivative(x, p, alpha, beta):
        out = value(x, p)
        for i in range(d):
            out = out * hermite(x[:, i] - x0[i], alpha[i], sx) * hermite(p[:, i] - p0[i], beta[i], sp)
        return out

    ext = float(np.max(np.abs(p0))) + tail * sp
    sup = (x0 - tail * sx, x0 + tail * sx, p0 - tail * sp, p0 + tail * sp)
    return RoughSymbol(d, value, derivative, ext, sup, name="gaussian")


def polynomial_symbol(kind, d=1, axis=0):
    """Monomials ``1``, ``x_i``, ``p_i``, ``x_i p_i``, ``p^2`` with exact derivatives.

    Polynomials in p are sampled exactly at the grid momenta, so they carry
    no aliasing extent; what the grid cannot represent is their growth
    beyond ``p_max``, which is the caller's concern.
    """

    def zero(x):
        return np.zeros(len(x))

    if kind == "one":
        def value(x, p):
            return np.ones(len(x))

        def deriv(x, p, a, b):
            return zero(x)
        ext = 0.0
    elif kind == "x":
        def value(x, p):
            return x[:, axis].copy()

        def deriv(x, p, a, b):
            one = sum(a) == 1 and a[axis] == 1 and sum(b) == 0
            return np.ones(len(x)) if one else zero(x)
        ext = 0.0
    elif kind == "p":
        def value(x, p):
            return p[:, axis].copy()

        def deriv(x, p, a, b):
            one = sum(b) == 1 and b[axis] == 1 and sum(a) == 0
            return np.ones(len(x)) if one else zero(x)
        ext = 0.0
    elif kind == "xp":
        def value(x, p):
            return x[:, axis] * p[:, axis]

        def deriv(x, p, a, b):
            if sum(a) + sum(b) == 1:
                return p[:, axis].copy() if a[axis] == 1 else x[:, axis].copy() if b[axis] == 1 else zero(x)
            if sum(a) == 1 and sum(b) == 1 and a[axis] == 1 and b[axis] == 1:
                return np.ones(len(x))
            return zero(x)
        ext = 0.0
    elif kind == "p2":
        def value(x, p):
            return np.sum(p * p, axis=1)

        def deriv(x, p, a, b):
            if sum(a):
                return zero(x)
            if sum(b) == 1:
                return 2 * p[:, b.index(1)]
            if sum(b) == 2 and max(b) == 2:
                return np.full(len(x), 2.0)
            return zero(x)
        ext = 0.0
    else:
        raise DomainError(f"unknown polynomial symbol {kind!r}")
    return RoughSymbol(d, value, deriv, ext, name=kind)


def field_symbol(V, tau=np.inf, epsilon=1.0, max_order=4):
    """A function of x alone, e.g. a (mollified) potential, as a symbol."""
    d = V.d

    def value(x, p):
        return np.asarray(V.value(x) if hasattr(V, "value") else V(x), dtype=float)

    def deriv(x, p, alpha, beta):
        if sum(beta):
            return np.zeros(len(x))
        if sum(alpha) > max_order:
            raise DomainError("derivative order beyond the field oracle")
        if hasattr(V, "derivative"):
            return V.derivative(x, alpha)
        if sum(alpha) == 1:
            return V.gradient(x)[:, alpha.index(1)]
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        return V.hessian(x)[:, idx[0], idx[1]]

    return RoughSymbol(d, value, deriv, 0.0, tau=tau, epsilon=epsilon, name="field")


def bump_symbol(d=1, x0=0.0, p0=0.0, rx=1.0, rp=1.0):
    """Product of radial bumps in x and in p (compact support in phase space)."""
    from .smooth import bump

    x0 = np.broadcast_to(np.asarray(x0, float), (d,))
    p0 = np.broadcast_to(np.asarray(p0, float), (d,))

    def value(x, p):
        ux = np.sqrt(np.sum((x - x0) ** 2, axis=1)) / rx
        up = np.sqrt(np.sum((p - p0) ** 2, axis=1)) / rp
        return np.e**2 * bump(ux) * bump(up)

    sup = (x0 - rx, x0 + rx, p0 - rp, p0 + rp)
    return RoughSymbol(d, value, None, float(np.max(np.abs(p0))) + rp, sup, name="bump")


# ---------------------------------------------------------------------------
# quantization


@dataclass
class QuantizedOperator:
    matrix: np.ndarray
    hbar: float
    grid: PhaseGrid

    @property
    def is_hermitian(self):
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12, rtol=0))

    def __matmul__(self, other):
        return self.matrix @ (other.matrix if isinstance(other, QuantizedOperator) else other)


def _offset_table(N):
    """Torus offsets ``j - l`` in ``[-N/2, N/2)`` and midpoint half-grid indices."""
    j = np.arange(N)[:, None]
    l = np.arange(N)[None, :]
    delta = (j - l + N // 2) % N - N // 2
    mid = (2 * l + delta) % (2 * N)
    # the antipodal offset has a second representative, half a box away
    anti = delta == -(N // 2)
    mid_alt = np.where(anti, (mid + N) % (2 * N), mid)
    return delta % N, mid, mid_alt


def symbol_transform(a, grid, hbar):
    """``t[m, r] = N^-d sum_k exp(2 pi i r.k / N) a(y_m, p_k)`` on the half grid.

    Returns an array of shape ``(2N,)*d + (N,)*d``.
    """
    N, d = grid.N, grid.d
    y = -grid.L + 0.5 * grid.h * np.arange(2 * N)
    pk = grid.momenta(hbar)
    ny = (2 * N) ** d
    nk = N**d
    Y = np.stack([g.ravel() for g in np.meshgrid(*([y] * d), indexing="ij")], axis=1)
    P = np.stack([g.ravel() for g in np.meshgrid(*([pk] * d), indexing="ij")], axis=1)
    # the Nyquist momentum stands for both +p and -p, so average the two
    nyq = P == grid.momenta(hbar)[N // 2]
    P_flip = np.where(nyq, -P, P)
    has_nyq = np.any(nyq, axis=1)
    vals = np.empty((ny, nk), dtype=complex)
    chunk = max(1, 2_000_000 // nk)
    for s in range(0, ny, chunk):
        ys = Y[s:s + chunk]
        xs = np.repeat(ys, nk, axis=0)
        v = np.asarray(a(xs, np.tile(P, (len(ys), 1))), dtype=complex).reshape(len(ys), nk)
        xs_n = np.repeat(ys, int(has_nyq.sum()), axis=0)
        v2 = np.asarray(a(xs_n, np.tile(P_flip[has_nyq], (len(ys), 1))), dtype=complex)
        v[:, has_nyq] = 0.5 * (v[:, has_nyq] + v2.reshape(len(ys), -1))
        vals[s:s + chunk] = v
    vals = vals.reshape((2 * N,) * d + (N,) * d)
    return np.fft.ifftn(vals, axes=tuple(range(d, 2 * d)))


def weyl_quantize(a, grid, hbar):
    """Matrix of ``Op(a)`` on the grid.

    Raises
    ------
    ConfigurationError
        If the symbol extends past the momentum grid (aliasing).
    """
    if a.p_extent > grid.p_max(hbar) * (1 + 1e-12):
        raise ConfigurationError(
            f"symbol momentum extent {a.p_extent:.4g} exceeds grid p_max {grid.p_max(hbar):.4g}")
    N, d = grid.N, grid.d
    t = symbol_transform(a, grid, hbar)
    r, m, m2 = _offset_table(N)
    if d == 1:
        A = 0.5 * (t[m, r] + t[m2, r])
    else:
        # average over the representatives of each antipodal axis
        J = np.arange(N**2)
        j1, j2 = np.divmod(J, N)
        R1, M1, M1b = r[j1[:, None], j1[None, :]], m[j1[:, None], j1[None, :]], m2[j1[:, None], j1[None, :]]
        R2, M2, M2b = r[j2[:, None], j2[None, :]], m[j2[:, None], j2[None, :]], m2[j2[:, None], j2[None, :]]
        A = 0.25 * (t[M1, M2, R1, R2] + t[M1b, M2, R1, R2] + t[M1, M2b, R1, R2] + t[M1b, M2b, R1, R2])
    return QuantizedOperator(A, float(hbar), grid)


# ---------------------------------------------------------------------------
# checks


def phase_integral(a, grid, hbar):
    """``(2 pi hbar)^-d int int a`` by the trapezoid rule on a refined phase grid."""
    d = grid.d
    x = -grid.L + (grid.h / 2) * np.arange(2 * grid.N)
    pmax = grid.p_max(hbar)
    p = np.linspace(-pmax, pmax, 4 * grid.N, endpoint=False)
    dx, dp = x[1] - x[0], p[1] - p[0]
    if d == 1:
        X, P = np.meshgrid(x, p, indexing="ij")
        vals = a(X.reshape(-1, 1), P.reshape(-1, 1))
        total = np.sum(vals) * dx * dp
    else:
        total = 0.0
        P = np.stack([g.ravel() for g in np.meshgrid(p, p, indexing="ij")], axis=1)
        for x1 in x:
            for x2 in x:
                xs = np.broadcast_to([x1, x2], P.shape)
                total += np.sum(a(xs, P))
        total *= (dx * dp) ** 2
    return complex(total) / (2 * np.pi * hbar) ** d


def trace_check(a, grid, hbar):
    """Matrix trace against the phase-space integral."""
    op = weyl_quantize(a, grid, hbar)
    tr = complex(np.trace(op.matrix))
    integral = phase_integral(a, grid, hbar)
    scale = max(abs(integral), abs(tr))
    rel = abs(tr - integral) / scale if scale > 0 else 0.0
    return {"matrix_trace": tr.real if abs(tr.imag) < 1e-12 * max(1, abs(tr)) else tr,
            "integral": integral.real if abs(integral.imag) < 1e-12 * max(1, abs(integral)) else integral,
            "rel_err": float(rel)}


def op_norm(M):
    """Largest singular value."""
    return float(linalg.svdvals(M)[0]) if M.size else 0.0


def trace_norm(M):
    return float(np.sum(linalg.svdvals(M)))


def poisson_term(a, b):
    """``c1 = (-i/2)(d_p a . d_x b - d_x a . d_p b)``."""
    d = a.d

    def value(x, p):
        total = 0.0
        for i in range(d):
            e = tuple(int(j == i) for j in range(d))
            z = (0,) * d
            total = total + (a.derivative(x, p, z, e) * b.derivative(x, p, e, z)
                             - a.derivative(x, p, e, z) * b.derivative(x, p, z, e))
        return -0.5j * total

    return RoughSymbol(d, value, None, min(a.p_extent, b.p_extent), name="c1")


def compose_residuals(a, b, grid, hbar):
    """Operator norms of the order-0 and order-1 composition remainders."""
    A = weyl_quantize(a, grid, hbar).matrix
    B = weyl_quantize(b, grid, hbar).matrix
    AB = weyl_quantize(a * b, grid, hbar).matrix
    C1 = weyl_quantize(poisson_term(a, b), grid, hbar).matrix
    R0 = A @ B - AB
    return {"r0": op_norm(R0), "r1": op_norm(R0 - hbar * C1)}


def _support_distance(s1, s2):
    """Euclidean distance between two phase-space boxes."""
    lo1 = np.concatenate([np.atleast_1d(s1[0]), np.atleast_1d(s1[2])])
    hi1 = np.concatenate([np.atleast_1d(s1[1]), np.atleast_1d(s1[3])])
    lo2 = np.concatenate([np.atleast_1d(s2[0]), np.atleast_1d(s2[2])])
    hi2 = np.concatenate([np.atleast_1d(s2[1]), np.atleast_1d(s2[3])])
    gap = np.maximum(0.0, np.maximum(lo1 - hi2, lo2 - hi1))
    return float(np.linalg.norm(gap))


@dataclass
class DecayReport:
    hbars: np.ndarray
    op_norms: np.ndarray
    trace_norms: np.ndarray
    separation: float
    slope_op: float = float("nan")
    slope_trace: float = float("nan")


def fit_slope(x, y, floor=0.0):
    """Least-squares slope of ``log y`` against ``log x`` over entries above ``floor``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = y > floor
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def disjoint_support_norms(theta1, theta2, grid, hbar_sweep, floor=1e-13):
    """Norms of ``Op(theta1) Op(theta2)`` for separated supports.

    A zero symbol (``support=None`` and ``name == "zero"``) is allowed and
    yields zero norms.  The fitted slopes use entries above ``floor``.
    """
    if theta1.support is not None and theta2.support is not None:
        c = _support_distance(theta1.support, theta2.support)
        if c <= 0:
            raise PreconditionError("symbol supports are not separated")
    else:
        c = float("inf")
    ops, trs = [], []
    for hb in hbar_sweep:
        M = weyl_quantize(theta1, grid, hb).matrix @ weyl_quantize(theta2, grid, hb).matrix
        s = linalg.svdvals(M)
        ops.append(float(s[0]))
        trs.append(float(np.sum(s)))
    rep = DecayReport(np.asarray(hbar_sweep, float), np.array(ops), np.array(trs), c)
    rep.slope_op = fit_slope(rep.hbars, rep.op_norms, floor)
    rep.slope_trace = fit_slope(rep.hbars, rep.trace_norms, floor)
    return rep


def zero_symbol(d=1):
    return RoughSymbol(d, lambda x, p: np.zeros(len(x)), lambda x, p, a, b: np.zeros(len(x)), 0.0,
                       name="zero")


def effective_window(f, lo, hi, rel=1e-13, samples=20_001):
    """Smallest interval outside which ``|f| <= rel * max |f|`` on ``[lo, hi]``."""
    E = np.linspace(lo, hi, samples)
    v = np.abs(np.asarray(f(E), float))
    big = np.nonzero(v > rel * v.max())[0] if v.max() > 0 else np.array([0])
    return float(E[max(big[0] - 1, 0)]), float(E[min(big[-1] + 1, samples - 1)])


def functional_symbol_principal(f, V_eps, a=None, mu=0.0, energy_window=None, v_min=None, a_sup=0.0):
    """Principal symbol ``f((p - mu a(x))^2 + V_eps(x))``.

    Parameters
    ----------
    f : callable
        Smooth function of energy.
    energy_window : (float, float), optional
        Interval outside which ``f`` is negligible; together with ``v_min``
        (the minimum of ``V_eps``) and ``a_sup`` (sup of ``|a|``) it bounds
        the momentum extent used by the aliasing check.
    """
    d = V_eps.d

    def value(x, p):
        shift = mu * a.value(x) if (a is not None and mu) else 0.0
        E = np.sum((p - shift) ** 2, axis=1) + np.asarray(V_eps(x), float)
        return np.asarray(f(E), dtype=float)

    ext = np.inf
    if energy_window is not None and v_min is not None:
        ext = np.sqrt(max(energy_window[1] - v_min, 0.0)) + abs(mu) * a_sup
    return RoughSymbol(d, value, None, ext, name="functional")


def symbol_class_audit(a, orders, points, weight=None):
    """Sampled ``sup |d_x^alpha d_p^beta a| / (eps^min(0, tau - |alpha|) m)`` per order.

    Parameters
    ----------
    orders : list of (alpha, beta)
    points : tuple of arrays
        ``(x, p)`` sample points of shape ``(n, d)``.

    Returns
    -------
    list of dict with keys ``alpha``, ``beta``, ``ratio``, ``constant``, ``passes``.
    """
    x, p = points
    m = np.ones(len(x)) if weight is None else np.asarray(weight(x, p), float)
    rows = []
    for alpha, beta in orders:
        alpha, beta = tuple(alpha), tuple(beta)
        val = np.abs(a.derivative(x, p, alpha, beta))
        scale = a.epsilon ** min(0.0, a.tau - sum(alpha))
        ratio = float(np.max(val / (scale * m)))
        C = a.constants.get((alpha, beta))
        rows.append({"alpha": alpha, "beta": beta, "ratio": ratio, "constant": C,
                     "passes": None if C is None else bool(ratio <= C)})
    return rows


def fourier_norm_bound(a, grid, hbar, oversample=2):
    """``(2 pi)^-2d ||a^||_1``: an upper bound for ``||Op(a)||``.

    Each Fourier mode of the symbol quantizes to a unitary phase-space
    translation, so the operator norm is at most the L^1 norm of the
    symplectic Fourier coefficients.  Computed from samples on a periodic
    phase-space box (d = 1).
    """
    if grid.d != 1:
        raise DomainError("Fourier norm bound implemented for d = 1")
    n = oversample * grid.N
    x = -grid.L + 2 * grid.L * np.arange(n) / n
    P = max(grid.p_max(hbar), 1e-300)
    p = -P + 2 * P * np.arange(n) / n
    X, Pm = np.meshgrid(x, p, indexing="ij")
    vals = np.asarray(a(X.reshape(-1, 1), Pm.reshape(-1, 1)), dtype=complex).reshape(n, n)
    coeffs = np.fft.fft2(vals) / n**2
    return float(np.sum(np.abs(coeffs)))
