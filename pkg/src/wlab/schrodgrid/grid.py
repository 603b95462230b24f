"""Grids and the discretized magnetic Schrödinger operator.

``H = sum_j Q_j^* Q_j + diag(V)`` where ``Q_j`` is the forward covariant
difference along axis j:

    (Q_j psi)(x) = (-i hbar / h) (U(x, x + h e_j) psi(x + h e_j) - psi(x)),
    U(x, y) = exp(-i (mu / hbar) int_x^y a . dl).

With ``mu = 0`` this is ``-hbar^2`` times the standard second difference.  The
link phases make the scheme exactly gauge covariant: replacing ``a`` by
``a + grad chi`` gives ``G H G^*`` with ``G = diag(exp(i mu chi / hbar))``.
"""
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigurationError, PreconditionError
from ..potentials import ZeroVectorPotential

MATRIX_MAGIC = b"WLAB"
_HEADER = struct.Struct("<4siidd4x")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[-L, L]^d``.

    Periodic grids use the nodes ``-L + j h`` for ``j = 0..N-1``; Dirichlet
    grids use the interior nodes ``j = 1..N-1`` (the wavefunction vanishes on
    the boundary).
    """

    d: int
    L: float
    N: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.boundary not in ("dirichlet", "periodic"):
            raise ConfigurationError(f"unknown boundary {self.boundary!r}")
        if self.d < 1 or self.N < 3 or not self.L > 0:
            raise ConfigurationError("grid needs d >= 1, N >= 3, L > 0")

    @property
    def h(self):
        return 2.0 * self.L / self.N

    @property
    def axis(self):
        j = np.arange(self.N) if self.boundary == "periodic" else np.arange(1, self.N)
        return -self.L + self.h * j

    @property
    def n_axis(self):
        return len(self.axis)

    @property
    def size(self):
        return self.n_axis**self.d

    @property
    def cell_volume(self):
        return self.h**self.d

    def points(self):
        g = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def max_momentum(self, hbar):
        """Largest momentum the grid resolves at the required 4 points per wavelength."""
        return hbar / (4.0 * self.h)

    def check_resolution(self, hbar, Lambda, v_min):
        """``h <= hbar / (4 p_max)`` with ``p_max = sqrt(max(Lambda - min V, 0))``."""
        p_max = np.sqrt(max(Lambda - v_min, 0.0))
        if p_max > 0 and self.h > hbar / (4.0 * p_max) * (1 + 1e-12):
            raise ConfigurationError(
                f"grid spacing {self.h:.4g} does not resolve p_max = {p_max:.4g} at hbar = {hbar:.4g} "
                f"(need h <= {hbar / (4 * p_max):.4g})")
        return p_max


@dataclass
class GridOperator:
    """Hermitian matrix on a grid together with its construction data."""

    matrix: object
    hbar: float
    mu: float
    grid: GridSpec
    potential: np.ndarray
    provenance: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.matrix)

    def dense(self):
        M = self.matrix
        return M.toarray() if sp.issparse(M) else np.asarray(M)

    def hermitian_defect(self):
        M = self.matrix
        D = M - M.conj().T
        return float(abs(D).max()) if sp.issparse(D) else float(np.max(np.abs(D)))

    def dump(self, path):
        """Write the dense matrix: 32-byte header then row-major little-endian complex128."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MATRIX_MAGIC, self.grid.d, self.grid.N, float(self.hbar), float(self.mu)))
            fh.write(np.ascontiguousarray(self.dense(), dtype="<c16").tobytes())


def load_matrix(path):
    """Read a matrix written by :meth:`GridOperator.dump`; returns ``(header, matrix)``."""
    with open(path, "rb") as fh:
        magic, d, N, hbar, mu = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MATRIX_MAGIC:
            raise ConfigurationError("not a matrix dump")
        data = np.frombuffer(fh.read(), dtype="<c16")
    n = int(round(np.sqrt(data.size)))
    return {"d": d, "N": N, "hbar": hbar, "mu": mu}, data.reshape(n, n)


def _edges(grid, axis):
    """Edge start points and the node indices at both ends (-1 for a wall).

    Along ``axis`` edge k runs from ``-L + k h`` to ``-L + (k + 1) h`` for
    ``k = 0..N-1``; the other coordinates are node coordinates.
    """
    n1, N, d = grid.n_axis, grid.N, grid.d
    eshape = [n1] * d
    eshape[axis] = N
    multi = np.indices(eshape).reshape(d, -1)
    k = multi[axis]
    coords = grid.axis[np.minimum(multi, n1 - 1)]
    coords[axis] = -grid.L + grid.h * k
    strides = n1 ** np.arange(d - 1, -1, -1)
    if grid.boundary == "periodic":
        left_pos, right_pos = k, (k + 1) % N
        valid_l = valid_r = np.ones(len(k), bool)
    else:
        # interior node i sits at position i + 1
        left_pos, right_pos = k - 1, k
        valid_l, valid_r = k >= 1, k <= N - 2
    others = multi.copy()
    others[axis] = 0
    base = strides @ others
    left = np.where(valid_l, base + strides[axis] * left_pos, -1)
    right = np.where(valid_r, base + strides[axis] * right_pos, -1)
    return coords.T, left, right


def _forward_difference(grid, axis, a=None, mu=0.0, hbar=1.0):
    """Sparse edge-by-node matrix of ``U psi(right) - psi(left)``."""
    start, left, right = _edges(grid, axis)
    n_edges = len(start)
    phases = None
    if a is not None and mu != 0 and not isinstance(a, ZeroVectorPotential):
        step = np.zeros(grid.d)
        step[axis] = grid.h
        phases = np.exp(-1j * (mu / hbar) * a.line_integral(start, start + step))
    u = np.ones(n_edges) if phases is None else phases
    e = np.arange(n_edges)
    ml, mr = left >= 0, right >= 0
    data = np.concatenate([-np.ones(int(ml.sum())), u[mr]])
    rows = np.concatenate([e[ml], e[mr]])
    cols = np.concatenate([left[ml], right[mr]])
    return sp.csr_matrix((data, (rows, cols)), shape=(n_edges, grid.size)), phases is not None


def _evaluate(V, x):
    return np.asarray(V.value(x) if hasattr(V, "value") else V(x), dtype=float)


def discretize(V, a=None, mu=0.0, hbar=1.0, grid=None, Lambda=0.0, check=True, potential_values=None):
    """Assemble ``H = sum_j Q_j^* Q_j + diag(V)`` on the grid.

    Parameters
    ----------
    V : field or callable
        Potential; sampled at the grid nodes unless ``potential_values`` is given.
    a : VectorPotential, optional
    Lambda : float
        Spectral cutoff used by the resolution check.
    check : bool
        Enforce ``h <= hbar / (4 p_max)``.
    """
    if grid is None:
        raise ConfigurationError("a grid is required")
    pts = grid.points()
    vals = _evaluate(V, pts) if potential_values is None else np.asarray(potential_values, float)
    if check:
        grid.check_resolution(hbar, Lambda, float(vals.min()))
    scale = (hbar / grid.h) ** 2
    H = sp.diags(vals.astype(float))
    complex_ = False
    for j in range(grid.d):
        D, cplx = _forward_difference(grid, j, a, mu, hbar)
        complex_ |= cplx
        H = H + scale * (D.conj().T @ D)
    H = sp.csr_matrix(H)
    if not complex_:
        H = H.real.astype(float)
    prov = {"scheme": "covariant-forward-difference", "boundary": grid.boundary,
            "a": type(a).__name__ if a is not None else "none"}
    return GridOperator(H, float(hbar), float(mu), grid, vals, prov, {"V": V, "a": a})


@dataclass
class LocalPairing:
    """A model operator ``H`` and a variant ``H_mod`` that differs only outside ``omega``."""

    H: GridOperator
    H_mod: GridOperator
    omega: object
    nodes: np.ndarray

    def rows_agree(self, atol=0.0):
        A = self.H.matrix[self.nodes]
        B = self.H_mod.matrix[self.nodes]
        D = abs(A - B)
        return bool((D.max() if D.nnz else 0.0) <= atol)


def make_local_pair(V, a, mu, hbar, grid, omega, tamper=None, Lambda=0.0, check=True):
    """Pair ``H`` with a copy modified outside a buffer around ``omega``.

    Parameters
    ----------
    omega : Box or Ball
        Agreement region.
    tamper : dict, optional
        ``{"shift": float, "keep": region}`` adds ``shift`` to V at nodes
        outside ``keep``; ``keep`` must contain ``omega`` dilated by one grid
        step, otherwise the rows over ``omega`` would change.
    """
    H = discretize(V, a, mu, hbar, grid, Lambda, check)
    pts = grid.points()
    nodes = np.nonzero(omega.contains(pts))[0]
    if not tamper:
        return LocalPairing(H, H, omega, nodes)
    keep = tamper.get("keep", omega.dilate(float(tamper.get("buffer", grid.h))))
    buffer = omega.dilate(grid.h * np.sqrt(grid.d) * 1.0001)
    probe = buffer.grid(grid.h / 2) if not buffer.empty else np.zeros((0, grid.d))
    if len(probe) and not np.all(keep.contains(probe)):
        raise PreconditionError("tamper region reaches into the agreement region")
    vals = H.potential.copy()
    vals[~keep.contains(pts)] += float(tamper.get("shift", 0.0))
    H_mod = discretize(V, a, mu, hbar, grid, Lambda, False, potential_values=vals)
    H_mod.provenance["tamper"] = dict(shift=float(tamper.get("shift", 0.0)))
    return LocalPairing(H, H_mod, omega, nodes)
