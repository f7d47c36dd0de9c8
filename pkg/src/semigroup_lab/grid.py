"""Uniform box grids, grid functions and finite-difference stencils."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .coeffs import CoefficientField


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Nodes of ``[-L, L]^d`` with ``n`` points per axis (``n`` odd, so 0 is a node)."""

    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise GridError(f"d must be 1 or 2, got {self.d}")
        if self.n < 9 or self.n % 2 == 0:
            raise GridError(f"n_per_axis must be odd and >= 9, got {self.n}")
        if not self.L > 0:
            raise GridError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (d,)``."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def points(self) -> np.ndarray:
        """Node coordinates flattened in row-major order, shape (size, d)."""
        return self.coords().reshape(-1, self.d)

    def node(self, flat_index: int) -> np.ndarray:
        idx = np.unravel_index(int(flat_index), self.shape)
        return -self.L + self.h * np.asarray(idx, dtype=float)

    def index_of(self, x: Sequence[float]) -> int:
        idx = np.rint((np.asarray(x, dtype=float) + self.L) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n):
            raise GridError(f"point {x} outside the grid")
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def fingerprint(self) -> dict:
        return {"d": self.d, "L": float(self.L), "n_per_axis": self.n}


def make_grid(d: int, L: float, n_per_axis: int) -> Grid:
    return Grid(d=d, L=float(L), n=int(n_per_axis))


@dataclass(frozen=True)
class Field:
    """``m`` scalar values per node; ``values`` has shape ``(m,) + grid.shape``."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != self.grid.d + 1 or v.shape[1:] != self.grid.shape:
            raise GridError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v.reshape(v.shape[0], -1)).any(axis=0))[0])
            raise GridError(f"non-finite value at node {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def with_values(self, values: np.ndarray, **meta) -> "Field":
        return Field(self.grid, values, dict(meta))

    def __add__(self, other: "Field") -> "Field":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return self.with_values(c * self.values)

    __rmul__ = __mul__

    def modulus(self) -> np.ndarray:
        """Euclidean norm over components at each node."""
        return np.sqrt(np.sum(self.values**2, axis=0))

    def sup(self) -> float:
        return float(self.modulus().max()) if self.values.size else 0.0


def zeros(grid: Grid, m: int) -> Field:
    return Field(grid, np.zeros((m,) + grid.shape))


def sample(grid: Grid, f: Callable[[np.ndarray], np.ndarray], m: int) -> Field:
    """Evaluate ``f`` at the nodes. ``f`` maps points (N, d) to (N, m) or (N,)."""
    pts = grid.points()
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (pts.shape[0], m):
        raise GridError(f"sampled function returned shape {vals.shape}, expected {(pts.shape[0], m)}")
    bad = ~np.isfinite(vals).all(axis=1)
    if bad.any():
        raise GridError(f"non-finite sample at node {int(np.flatnonzero(bad)[0])}")
    return Field(grid, vals.T.reshape((m,) + grid.shape))


# ---------------------------------------------------------------------------
# derivatives


def _second_along(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second derivative along ``axis``: centred inside, 4-point one-sided at the ends."""
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h**2
    out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def _diff(a: np.ndarray, h: float, axis_counts: Sequence[int]) -> np.ndarray:
    """Apply the stencil composition for a multi-index to component arrays ``a``.

    Pure second derivatives use the three-point stencil; everything else is
    composed from ``np.gradient`` (centred inside, second order one-sided at
    the boundary). Third derivatives differentiate a second-derivative field.
    """
    counts = list(axis_counts)
    out = a
    # take a pure second derivative first when available
    for ax, c in enumerate(counts):
        if c >= 2:
            out = _second_along(out, h, ax + 1)
            counts[ax] -= 2
            break
    for ax, c in enumerate(counts):
        for _ in range(c):
            out = np.gradient(out, h, axis=ax + 1, edge_order=2)
    return out


def derivative(fld: Field, beta: Sequence[int]) -> Field:
    """``D^beta`` of every component, second-order accurate.

    The two outermost layers use one-sided stencils; ``meta["one_sided_band"]``
    records the width of that band.
    """
    beta = tuple(int(b) for b in beta)
    if len(beta) != fld.grid.d:
        raise GridError("multi-index length must equal d")
    order = sum(beta)
    if order > 3:
        raise GridError(f"derivative order {order} > 3")
    if order == 0:
        return fld
    if fld.grid.n < 2 * order + 5:
        raise GridError("grid too small for the stencil")
    vals = _diff(fld.values, fld.grid.h, beta)
    return Field(fld.grid, vals, {"one_sided_band": 2})


def _ordered_tuples(d: int, order: int) -> list[tuple[int, ...]]:
    import itertools

    return list(itertools.product(range(d), repeat=order))


def derivative_stack(fld: Field, order: int) -> np.ndarray:
    """All ordered partial derivatives of a given order, shape ``(m * d^order,) + grid.shape``.

    The Euclidean norm over the first axis gives the pointwise ``|D^j u|``
    (Jacobian/Hessian Frobenius norms summed over components).
    """
    if order == 0:
        return np.asarray(fld.values)
    d = fld.grid.d
    cache: dict[tuple[int, ...], np.ndarray] = {}
    parts = []
    for tup in _ordered_tuples(d, order):
        beta = tuple(tup.count(ax) for ax in range(d))
        if beta not in cache:
            cache[beta] = derivative(fld, beta).values
        parts.append(cache[beta])
    return np.concatenate(parts, axis=0)


def derivative_modulus(fld: Field, order: int) -> np.ndarray:
    return np.sqrt(np.sum(derivative_stack(fld, order) ** 2, axis=0))


# ---------------------------------------------------------------------------
# discrete operator


def _coefficient_arrays(coeffs: CoefficientField, grid: Grid) -> dict:
    pts = grid.points()
    d, m = coeffs.d, coeffs.m
    shp = grid.shape
    Q = coeffs.Q(pts).reshape(shp + (d, d))
    b = coeffs.drift(pts).reshape(shp + (d,))
    Bh = coeffs.Bhat(pts).reshape(shp + (d, m, m))
    C = coeffs.C(pts).reshape(shp + (m, m))
    return {"Q": Q, "b": b, "Bhat": Bh, "C": C}


class DiscreteOperator:
    """The operator on one grid, split into a scalar transport part
    ``sum q_ij D_ij + sum b_j D_j`` (identical for every component) and the
    pointwise coupling ``sum Bhat_j D_j + C``.

    ``drift="central"`` uses centred first differences; ``"hybrid"`` switches
    to upwind differences at nodes whose cell Peclet number
    ``|b_j| h / (2 q_jj)`` exceeds 1 (keeps the implicit matrix an M-matrix
    when ``Q`` is diagonal).
    """

    def __init__(self, coeffs: CoefficientField, grid: Grid, drift: str = "central"):
        if coeffs.d != grid.d:
            raise GridError(f"coefficient dimension {coeffs.d} != grid dimension {grid.d}")
        if drift not in ("central", "hybrid"):
            raise GridError(f"unknown drift discretisation {drift!r}")
        self.coeffs = coeffs
        self.grid = grid
        self.drift = drift
        self.arrays = _coefficient_arrays(coeffs, grid)
        self._scalar_full: sp.csr_matrix | None = None

    @property
    def m(self) -> int:
        return self.coeffs.m

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        mask[(slice(1, -1),) * self.grid.d] = True
        return mask

    def _upwind_weights(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Weights on the forward and backward neighbours along axis ``j``."""
        h = self.grid.h
        b = self.arrays["b"][..., j]
        qjj = self.arrays["Q"][..., j, j]
        fwd = b / (2 * h)
        bwd = -b / (2 * h)
        if self.drift == "hybrid":
            with np.errstate(divide="ignore", invalid="ignore"):
                pe = np.abs(b) * h / (2 * np.maximum(qjj, 0.0))
            up = ~(pe <= 1.0)
            fwd = np.where(up, np.maximum(b, 0.0) / h, fwd)
            bwd = np.where(up, np.maximum(-b, 0.0) / h, bwd)
        return fwd, bwd

    def scalar_matrix(self) -> sp.csr_matrix:
        """Sparse matrix of the scalar transport part on all nodes.

        Rows of boundary nodes are zero; columns of boundary nodes carry the
        couplings to boundary values.
        """
        if self._scalar_full is not None:
            return self._scalar_full
        g = self.grid
        d, n, h = g.d, g.n, g.h
        idx = np.arange(g.size).reshape(g.shape)
        inner = (slice(1, -1),) * d
        rows_c = idx[inner].ravel()
        Q = self.arrays["Q"]
        rows, cols, vals = [], [], []

        def add(offset, weight):
            sl = tuple(slice(1 + o, n - 1 + o) for o in offset)
            rows.append(rows_c)
            cols.append(idx[sl].ravel())
            vals.append(np.broadcast_to(weight, g.shape)[inner].ravel())

        zero = (0,) * d
        diag = np.zeros(g.shape)
        for j in range(d):
            e = tuple(int(i == j) for i in range(d))
            em = tuple(-v for v in e)
            qjj = Q[..., j, j]
            fwd, bwd = self._upwind_weights(j)
            add(e, qjj / h**2 + fwd)
            add(em, qjj / h**2 + bwd)
            diag = diag - 2 * qjj / h**2 - fwd - bwd
        if d == 2:
            q12 = Q[..., 0, 1] + Q[..., 1, 0]
            w = q12 / (4 * h**2)
            add((1, 1), w)
            add((-1, -1), w)
            add((1, -1), -w)
            add((-1, 1), -w)
        add(zero, diag)
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.size, g.size)
        ).tocsr()
        A.sum_duplicates()
        self._scalar_full = A
        return A

    def scalar_part(self, u: np.ndarray) -> np.ndarray:
        """Scalar transport part on component arrays ``u`` of shape (m,) + grid.shape."""
        A = self.scalar_matrix()
        flat = u.reshape(u.shape[0], -1)
        return (A @ flat.T).T.reshape(u.shape)

    def coupling_part(self, u: np.ndarray) -> np.ndarray:
        """``sum_j Bhat_j D_j u + C u`` at interior nodes (zero on the boundary)."""
        g = self.grid
        h = g.h
        out = np.einsum("...ab,b...->a...", self.arrays["C"], u)
        Bh = self.arrays["Bhat"]
        for j in range(g.d):
            Bj = Bh[..., j, :, :]
            if not np.any(Bj):
                continue
            du = np.zeros_like(u)
            sl_c = [slice(None)] + [slice(None)] * g.d
            sl_p = list(sl_c)
            sl_m = list(sl_c)
            sl_c[j + 1] = slice(1, -1)
            sl_p[j + 1] = slice(2, None)
            sl_m[j + 1] = slice(None, -2)
            du[tuple(sl_c)] = (u[tuple(sl_p)] - u[tuple(sl_m)]) / (2 * h)
            out = out + np.einsum("...ab,b...->a...", Bj, du)
        mask = self.interior_mask()
        return out * mask

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.scalar_part(u) + self.coupling_part(u)


def apply_operator(coeffs: CoefficientField, u: Field, drift: str = "central") -> Field:
    """Nodal ``sum q_ij D_ij u + sum B_j D_j u + C u``; the boundary ring is set to 0."""
    if u.m != coeffs.m:
        raise GridError(f"field has {u.m} components, operator expects {coeffs.m}")
    op = DiscreteOperator(coeffs, u.grid, drift=drift)
    return Field(u.grid, op.apply(np.asarray(u.values)))


def inner_restriction(fld: Field, margin_cells: int) -> Field:
    """Sub-box obtained by dropping ``margin_cells`` nodes on every side."""
    g = fld.grid
    if margin_cells < 0 or 2 * margin_cells >= g.n - 8:
        raise GridError(f"margin {margin_cells} too large for n={g.n}")
    if margin_cells == 0:
        return fld
    sub = Grid(g.d, g.L - margin_cells * g.h, g.n - 2 * margin_cells)
    sl = (slice(None),) + (slice(margin_cells, g.n - margin_cells),) * g.d
    return Field(sub, np.asarray(fld.values)[sl], dict(fld.meta))


def restrict_array(a: np.ndarray, d: int, margin_cells: int) -> np.ndarray:
    """Restrict a raw nodal array (leading axes kept) by ``margin_cells`` per side."""
    if margin_cells == 0:
        return a
    lead = a.ndim - d
    sl = (slice(None),) * lead + (slice(margin_cells, -margin_cells),) * d
    return a[sl]


def default_margin(grid: Grid) -> int:
    """Ten percent of the nodes per axis."""
    return int(np.ceil(0.1 * grid.n))


# ---------------------------------------------------------------------------
# serialisation


def field_to_csv(fld: Field) -> str:
    g = fld.grid
    buf = io.StringIO()
    buf.write("d,m,L,n_per_axis\n")
    buf.write(f"{g.d},{fld.m},{g.L!r},{g.n}\n")
    pts = g.points()
    vals = np.asarray(fld.values).reshape(fld.m, -1).T
    data = np.hstack([pts, vals])
    np.savetxt(buf, data, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def field_from_csv(text: str) -> Field:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "d,m,L,n_per_axis":
        raise GridError("missing field CSV header")
    d_s, m_s, L_s, n_s = lines[1].split(",")
    grid = Grid(int(d_s), float(L_s), int(n_s))
    m = int(m_s)
    data = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
    if data.shape != (grid.size, grid.d + m):
        raise GridError(f"field CSV body has shape {data.shape}, expected {(grid.size, grid.d + m)}")
    return Field(grid, data[:, grid.d:].T.reshape((m,) + grid.shape))
