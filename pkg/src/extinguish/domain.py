"""Uniform Dirichlet boxes, grid functions, the discrete Laplacian and norms.

Fields are plain complex ``numpy`` arrays of shape ``grid.shape`` holding the
interior nodal values; the boundary values are implicitly zero.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, Unsupported

_HEADER = struct.Struct("<qqd")


@dataclass(frozen=True)
class Grid:
    dim: int
    nodes_per_axis: int
    spacing: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim={self.dim} must be 1, 2 or 3")
        if self.nodes_per_axis < 1:
            raise DomainError("need at least one interior node per axis")
        if not self.spacing > 0.0:
            raise DomainError("spacing must be positive")

    @classmethod
    def box(cls, dim: int, nodes: int, extent: float = 1.0) -> "Grid":
        """Grid with ``nodes`` interior nodes per axis on [0, extent]^dim."""
        return cls(dim, nodes, extent / (nodes + 1))

    @property
    def extent(self) -> float:
        return (self.nodes_per_axis + 1) * self.spacing

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def coordinates(self) -> list[np.ndarray]:
        """Meshgrid of interior node coordinates (``indexing='ij'``)."""
        x = self.spacing * np.arange(1, self.nodes_per_axis + 1)
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse 2nd-order Dirichlet Laplacian as a Kronecker sum, C-order unknowns."""
        n = self.nodes_per_axis
        h2 = self.spacing**2
        d1 = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr") / h2
        eye = sp.identity(n, format="csr")
        total = sp.csr_matrix((self.size, self.size))
        for axis in range(self.dim):
            mats = [eye] * self.dim
            mats[axis] = d1
            term = mats[0]
            for mat in mats[1:]:
                term = sp.kron(term, mat, format="csr")
            total = total + term
        return total.tocsr()


def laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Central-difference Laplacian with zero padding (homogeneous Dirichlet)."""
    u = np.asarray(u)
    h2 = grid.spacing**2
    out = -2.0 * grid.dim * u
    for axis in range(grid.dim):
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        out[tuple(sl_lo)] += u[tuple(sl_hi)]
        out[tuple(sl_hi)] += u[tuple(sl_lo)]
    return out / h2


def gradient_faces(u: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Forward differences on every face, including the two boundary faces per line."""
    out = []
    for axis in range(grid.dim):
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        out.append(np.diff(np.pad(u, pad), axis=axis) / grid.spacing)
    return out


def inner(u: np.ndarray, v: np.ndarray, grid: Grid) -> float:
    """Real L2 pairing Re sum u conj(v) h^dim."""
    return float(np.real(np.vdot(v, u)) * grid.cell_volume)


def _scaled_l2(u) -> float:
    """sqrt(sum |u|^2) without underflow for tiny fields."""
    top = float(np.abs(u).max()) if u.size else 0.0
    if top == 0.0 or not math.isfinite(top):
        return top
    # exact power-of-two rescaling; complex division by a subnormal overflows
    k = -math.frexp(top)[1]
    wr = np.ldexp(np.real(u), k)
    wi = np.ldexp(np.imag(u), k)
    return math.ldexp(math.sqrt(float(np.sum(wr * wr + wi * wi))), -k)


def norm(u: np.ndarray, grid: Grid, kind: str = "L2", p: float | None = None, m: float | None = None) -> float:
    """Grid-weighted norms.

    ``kind`` is one of ``"L2"``, ``"Lp"`` (needs ``p > 0``), ``"Linf"``,
    ``"H1_semi"``, ``"H1"`` or ``"quasi_m"`` (needs ``0 < m < 1``).  The
    quasi-norm is ``||u||_H1 + ||u||_{L^{2m}} + ||Laplacian u||_L2``.
    """
    u = np.asarray(u)
    vol = grid.cell_volume
    if kind == "L2":
        return _scaled_l2(u) * math.sqrt(vol)
    if kind == "Lp":
        if p is None or not p > 0.0:
            raise DomainError(f"Lp norm needs p > 0, got {p}")
        a = np.abs(u)
        top = float(a.max()) if a.size else 0.0
        if top == 0.0:
            return 0.0
        # scaled to avoid overflow for large p
        return top * (float(np.sum((a / top) ** p)) * vol) ** (1.0 / p)
    if kind == "Linf":
        return float(np.abs(u).max()) if u.size else 0.0
    if kind == "H1_semi":
        return math.hypot(*(_scaled_l2(g) for g in gradient_faces(u, grid))) * math.sqrt(vol)
    if kind == "H1":
        return math.hypot(norm(u, grid, "L2"), norm(u, grid, "H1_semi"))
    if kind == "quasi_m":
        if m is None or not (0.0 < m < 1.0):
            raise DomainError("quasi_m norm needs 0 < m < 1")
        return norm(u, grid, "H1") + norm(u, grid, "Lp", p=2 * m) + norm(laplacian(u, grid), grid, "L2")
    raise DomainError(f"unknown norm kind {kind!r}")


def lp_power(u: np.ndarray, grid: Grid, p: float) -> float:
    """sum |u|^p h^dim, i.e. ||u||_p^p."""
    return float(np.sum(np.abs(u) ** p)) * grid.cell_volume


@dataclass(frozen=True)
class Potential:
    """Real potential V = v1 + v2 (bounded part plus integrable part).

    ``v1``/``v2`` are arrays of the grid shape or scalars; ``beta`` enters the
    integrability exponent in two dimensions.
    """

    v1: np.ndarray | float = 0.0
    v2: np.ndarray | float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("v1", "v2"):
            v = np.asarray(getattr(self, name))
            if np.iscomplexobj(v) and np.any(v.imag != 0):
                raise DomainError(f"{name} must be real-valued")
            object.__setattr__(self, name, np.real(v).astype(float))

    @classmethod
    def zero(cls) -> "Potential":
        return cls()

    @classmethod
    def constant(cls, c: float) -> "Potential":
        return cls(v1=float(c))

    def p_V(self, dim: int) -> float:
        if dim == 1:
            return 2.0
        if dim == 2:
            return 2.0 + self.beta
        return float(dim)

    def values(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(self.v1 + self.v2, grid.shape).astype(float)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.v1) and not np.any(self.v2)

    @property
    def is_constant(self) -> bool:
        v = np.asarray(self.v1 + self.v2)
        return v.ndim == 0 or bool(np.all(v == v.flat[0]))


def apply_potential(u: np.ndarray, V: Potential, grid: Grid | None = None) -> np.ndarray:
    u = np.asarray(u)
    v = np.asarray(V.v1 + V.v2)
    if v.ndim and v.shape != u.shape:
        raise DomainError(f"potential shape {v.shape} does not match field shape {u.shape}")
    return v * u


def check_bounded_potential_bound(u: np.ndarray, V: Potential, grid: Grid) -> tuple[float, float]:
    """(||V1 u||, max|V1| ||u||); only the constant-free bound is checkable."""
    if np.any(V.v2):
        raise Unsupported("the integrable-part bound carries an unspecified constant")
    v1 = np.broadcast_to(V.v1, grid.shape)
    lhs = norm(v1 * u, grid)
    rhs = float(np.abs(v1).max()) * norm(u, grid)
    return lhs, rhs


def to_bytes(u: np.ndarray, grid: Grid) -> bytes:
    """Binary record: <int64 dim, int64 nodes, float64 spacing> then re/im pairs (LE float64)."""
    u = np.asarray(u, dtype=complex)
    if u.shape != grid.shape:
        raise DomainError(f"field shape {u.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(u)):
        raise DomainError("field contains non-finite values")
    body = np.ascontiguousarray(u).view(np.float64).astype("<f8", copy=False)
    return _HEADER.pack(grid.dim, grid.nodes_per_axis, grid.spacing) + body.tobytes()


def from_bytes(buf: bytes) -> tuple[np.ndarray, Grid]:
    if len(buf) < _HEADER.size:
        raise DomainError("buffer shorter than the field header")
    dim, nodes, spacing = _HEADER.unpack_from(buf)
    grid = Grid(int(dim), int(nodes), float(spacing))
    body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * grid.size:
        raise DomainError(f"expected {2 * grid.size} floats, found {body.size}")
    u = body.astype(np.float64).view(complex).reshape(grid.shape).copy()
    return u, grid


def save_field(path, u: np.ndarray, grid: Grid) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(u, grid))


def load_field(path) -> tuple[np.ndarray, Grid]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
