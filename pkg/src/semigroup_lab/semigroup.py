"""Time stepping of the Cauchy-Dirichlet problem on boxes, the scalar
comparison semigroup, domain exhaustion, the resolvent by Laplace quadrature
and the Duhamel (mild) solution.

The default ``imex`` scheme is backward Euler for the scalar transport part
``Tr(Q D^2) + <b, grad>`` (one sparse LU factorisation per step size, shared
by all components) and forward Euler for the coupling ``sum Bhat_j D_j`` and
the reaction ``C``. The drift uses hybrid upwinding, so the implicit matrix is
an M-matrix and the scalar scheme is positivity preserving.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeffs import CoefficientField, spectral_bounds
from .grid import DiscreteOperator, Field, Grid, GridError, default_margin, make_grid, restrict_array, sample

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


class NumericalAbort(RuntimeError):
    """Step-size violation or blow-up; ``step`` is the offending step index (or None)."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class CFLViolation(NumericalAbort):
    pass


class BlowUp(NumericalAbort):
    pass


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    t_final: float
    snapshots: tuple = ()
    scheme: str = "imex"
    safety: float = 0.9
    drift: str = "hybrid"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= 0:
            raise ValueError("t_final must be nonnegative")
        if self.scheme not in ("imex", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.safety <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        object.__setattr__(self, "snapshots", tuple(sorted(float(s) for s in self.snapshots)))

    def times(self) -> list[float]:
        ts = [0.0] + [s for s in self.snapshots if 0 < s < self.t_final] + [self.t_final]
        return sorted(set(ts))

    def to_json(self) -> dict:
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "snapshots": list(self.snapshots),
            "scheme": self.scheme,
            "safety": self.safety,
            "drift": self.drift,
        }


@dataclass
class Trajectory:
    times: list
    fields: list
    config: dict
    diagnostics: dict = field(default_factory=dict)

    def at(self, t: float) -> Field:
        for s, f in zip(self.times, self.fields):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return f
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> Field:
        return self.fields[-1]


class Stepper:
    """One-step maps for a fixed operator on a fixed grid.

    ``potential`` (scalar, nodal) is added to the implicit part; it is used for
    the comparison operator ``A_nu``. With ``scalar=True`` the coupling and the
    reaction ``C`` are dropped.
    """

    def __init__(self, coeffs: CoefficientField, grid: Grid, scheme: str = "imex", drift: str = "hybrid",
                 potential: Optional[np.ndarray] = None, scalar: bool = False):
        self.op = DiscreteOperator(coeffs, grid, drift=drift if scheme == "imex" else "central")
        self.grid = grid
        self.scheme = scheme
        self.scalar = scalar
        self.m = 1 if scalar else coeffs.m
        A = self.op.scalar_matrix()
        inner = self.op.interior_mask().ravel()
        if potential is not None:
            pot = np.where(inner, np.asarray(potential, dtype=float).ravel(), 0.0)
            A = (A + sp.diags(pot)).tocsr()
        self.A = A
        self.inner = inner
        self._lu: dict = {}
        self._coupled = not scalar and (np.any(self.op.arrays["Bhat"]) or np.any(self.op.arrays["C"]))

    # step-size restrictions -------------------------------------------------
    def max_dt(self) -> float:
        g = self.grid
        arr = self.op.arrays
        inner = (slice(1, -1),) * g.d
        bounds = [math.inf]
        if self._coupled:
            cmax = float(np.max(np.linalg.norm(arr["C"][inner], ord=2, axis=(-2, -1)))) if np.any(arr["C"]) else 0.0
            if cmax > 0:
                bounds.append(2.0 / cmax)
            bmax = float(np.max(np.abs(arr["Bhat"][inner]))) if np.any(arr["Bhat"]) else 0.0
            if bmax > 0:
                bounds.append(g.h / bmax)
        if self.scheme == "explicit":
            lam_max = float(np.max(np.linalg.eigvalsh(arr["Q"][inner])))
            if lam_max > 0:
                bounds.append(g.h**2 / (2 * g.d * lam_max))
            bnorm = float(np.max(np.abs(arr["b"][inner])))
            if bnorm > 0:
                bounds.append(g.h / bnorm)
            diag = -self.A.diagonal()[self.inner]
            if diag.size and diag.max() > 0:
                bounds.append(2.0 / diag.max())
        return min(bounds)

    def check_dt(self, dt: float, safety: float):
        lim = safety * self.max_dt()
        if dt > lim * (1 + 1e-12):
            raise CFLViolation(f"dt={dt:g} exceeds the stability bound {lim:g} ({self.scheme})", step=0)

    # single steps ---------------------------------------------------------
    def _solver(self, dt: float):
        key = round(dt, 15)
        if key not in self._lu:
            n = self.grid.size
            M = (sp.identity(n, format="csr") - dt * self.A).tocsc()
            self._lu[key] = spla.splu(M)
        return self._lu[key]

    def explicit_part(self, u: np.ndarray) -> np.ndarray:
        if not self._coupled:
            return np.zeros_like(u)
        return self.op.coupling_part(u)

    def step(self, u: np.ndarray, dt: float, source: Optional[np.ndarray] = None) -> np.ndarray:
        """Advance component arrays ``u`` (shape (m,) + grid.shape) by ``dt``."""
        rhs = u + dt * self.explicit_part(u)
        if source is not None:
            rhs = rhs + dt * source
        flat = rhs.reshape(self.m, -1)
        if self.scheme == "imex":
            flat = np.where(self.inner, flat, 0.0)
            out = self._solver(dt).solve(np.ascontiguousarray(flat.T)).T
        else:
            out = flat + dt * (self.A @ u.reshape(self.m, -1).T).T
            out = np.where(self.inner, out, 0.0)
        return out.reshape(u.shape)


def _march(stepper: Stepper, u0: np.ndarray, cfg: EvolveConfig, source: Optional[Callable] = None,
           f_norm: Optional[float] = None) -> tuple[list, list, dict]:
    """Step from 0 to ``cfg.t_final`` hitting every snapshot time exactly."""
    stepper.check_dt(cfg.dt, cfg.safety)
    times = cfg.times()
    u = np.array(u0, dtype=float)
    ref = f_norm if f_norm is not None else float(np.max(np.abs(u))) if u.size else 0.0
    limit = BLOWUP_FACTOR * max(ref, 1e-300)
    out_t, out_u = [0.0], [u.copy()]
    max_abs = []
    t, n = 0.0, 0
    for target in times[1:]:
        while t < target - 1e-12 * max(1.0, target):
            dt = min(cfg.dt, target - t)
            src = source(t + dt) if source is not None else None
            u = stepper.step(u, dt, src)
            t = target if dt < cfg.dt or abs(t + dt - target) <= 1e-12 * max(1.0, target) else t + dt
            n += 1
            mx = float(np.max(np.abs(u))) if u.size else 0.0
            max_abs.append(mx)
            if not np.isfinite(mx) or (ref > 0 and mx > limit):
                raise BlowUp(f"solution exceeded {BLOWUP_FACTOR:g} x |f| at step {n} (t={t:g})", step=n)
        out_t.append(target)
        out_u.append(u.copy())
    return out_t, out_u, {"steps": n, "max_abs": max_abs}


def _warn_unchecked(report):
    if report is None:
        log.warning("no hypothesis report attached to this evolution")
        return "absent"
    return getattr(report, "status", str(report))


def evolve(coeffs: CoefficientField, f: Field, cfg: EvolveConfig, hypothesis_report=None) -> Trajectory:
    """``T(t) f`` on the box of ``f.grid`` with zero Dirichlet data."""
    if f.m != coeffs.m:
        raise GridError(f"datum has {f.m} components, operator expects {coeffs.m}")
    stepper = Stepper(coeffs, f.grid, scheme=cfg.scheme, drift=cfg.drift)
    ts, us, diag = _march(stepper, f.values, cfg, f_norm=f.sup())
    diag["hypotheses"] = _warn_unchecked(hypothesis_report)
    diag["max_dt"] = stepper.max_dt()
    return Trajectory(ts, [Field(f.grid, u) for u in us], cfg.to_json(), diag)


def comparison_potential(coeffs: CoefficientField, grid: Grid, nu: float) -> np.ndarray:
    """Nodal values of ``nu * Lambda_C``."""
    if nu == 0:
        return np.zeros(grid.shape)
    lam_c = spectral_bounds(coeffs, grid.points(), order=0).Lambda_C
    return nu * lam_c.reshape(grid.shape)


def evolve_scalar_comparison(coeffs: CoefficientField, nu: float, f: Field, cfg: EvolveConfig) -> Trajectory:
    """``S_nu(t) f`` for the scalar operator ``Tr(Q D^2) + <b, grad> + nu Lambda_C``."""
    if f.m != 1:
        raise GridError("the comparison semigroup acts on scalar fields")
    pot = comparison_potential(coeffs, f.grid, nu)
    stepper = Stepper(coeffs, f.grid, scheme=cfg.scheme, drift=cfg.drift, potential=pot, scalar=True)
    ts, us, diag = _march(stepper, f.values, cfg, f_norm=f.sup())
    diag["nu"] = nu
    return Trajectory(ts, [Field(f.grid, u) for u in us], cfg.to_json(), diag)


# ---------------------------------------------------------------------------
# domain exhaustion


@dataclass
class TruncationRow:
    L: float
    sup_core: float
    deviation: float  # sup-norm distance to the previous box on the common core, nan for the first
    min_increment: float  # min over the core of (this box - previous box), nan for the first


def truncation_study(coeffs: CoefficientField, f: Callable, t: float, L_list: Sequence[float], h: float,
                     dt: float, nu: Optional[float] = None, m: Optional[int] = None,
                     core_margin: Optional[int] = None) -> list[TruncationRow]:
    """Solutions on boxes of growing half-width with a common spacing ``h``.

    ``f`` is a pointwise function. With ``nu`` given the scalar comparison
    semigroup is used instead of ``T``. Values are compared on the inner core
    of the smallest box.
    """
    L_list = [float(L) for L in L_list]
    if len(L_list) < 2:
        raise ValueError("need at least two box sizes")
    if any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ValueError("box sizes must increase")
    m = m if m is not None else (1 if nu is not None else coeffs.m)
    grids = []
    for L in L_list:
        n = 2 * L / h
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"L={L} is not a multiple of h={h}")
        grids.append(make_grid(coeffs.d, L, int(round(n)) + 1))
    core_margin = core_margin if core_margin is not None else default_margin(grids[0])
    core_n = grids[0].n - 2 * core_margin
    cfg = EvolveConfig(dt=dt, t_final=t)
    rows, prev = [], None
    for g in grids:
        u0 = sample(g, f, m)
        traj = evolve_scalar_comparison(coeffs, nu, u0, cfg) if nu is not None else evolve(coeffs, u0, cfg)
        cut = (g.n - core_n) // 2
        core = restrict_array(np.asarray(traj.final.values), g.d, cut)
        sup = float(np.max(np.abs(core)))
        if prev is None:
            rows.append(TruncationRow(g.L, sup, math.nan, math.nan))
        else:
            diff = core - prev
            rows.append(TruncationRow(g.L, sup, float(np.max(np.abs(diff))), float(np.min(diff))))
        prev = core
    return rows


# ---------------------------------------------------------------------------
# resolvent


@dataclass(frozen=True)
class QuadratureConfig:
    s_max: Optional[float] = None  # default: 30 / (lambda - H_nu)
    panels: int = 24
    nodes_per_panel: int = 6
    tail_tol: float = 1e-8

    def horizon(self, lam: float, H_nu: float) -> float:
        s = self.s_max if self.s_max is not None else 30.0 / (lam - H_nu)
        if not s > 0:
            raise ValueError("s_max must be positive")
        return s


def laplace_nodes(s_max: float, panels: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on panels ``s_j = s_max (j / J)^2``."""
    x, w = np.polynomial.legendre.leggauss(q)
    ends = s_max * (np.arange(panels + 1) / panels) ** 2
    nodes, weights = [], []
    for a, b in zip(ends[:-1], ends[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def resolvent(coeffs: CoefficientField, f: Field, lam: float, H_nu: float, qcfg: QuadratureConfig = QuadratureConfig(),
              dt: float = 1e-3, scheme: str = "imex") -> Field:
    """``u_lambda = int_0^inf e^{-lambda s} T(s) f ds`` by graded Gauss-Legendre quadrature.

    ``meta`` carries the tail bound ``e^{-(lambda - H_nu) s_max} |f| / (lambda - H_nu)``
    and a warning flag when it exceeds ``qcfg.tail_tol``.
    """
    if not lam > H_nu:
        raise ValueError(f"lambda={lam} must exceed H_nu={H_nu}")
    s_max = qcfg.horizon(lam, H_nu)
    nodes, weights = laplace_nodes(s_max, qcfg.panels, qcfg.nodes_per_panel)
    cfg = EvolveConfig(dt=dt, t_final=s_max, snapshots=tuple(nodes), scheme=scheme)
    traj = evolve(coeffs, f, cfg, hypothesis_report="caller")
    acc = np.zeros_like(np.asarray(f.values))
    lookup = dict(zip(traj.times, traj.fields))
    for s, w in zip(nodes, weights):
        acc += w * math.exp(-lam * s) * np.asarray(lookup[float(s)].values)
    tail = math.exp(-(lam - H_nu) * s_max) / (lam - H_nu) * f.sup()
    meta = {"lambda": lam, "s_max": s_max, "tail_bound": tail, "tail_warning": tail > qcfg.tail_tol,
            "nodes": int(nodes.size)}
    return Field(f.grid, acc, meta)


def resolvent_direct(coeffs: CoefficientField, f: Field, lam: float, drift: str = "hybrid") -> Field:
    """``(lambda - A_h)^{-1} f`` with a sparse direct solve of the full coupled system (reference)."""
    op = DiscreteOperator(coeffs, f.grid, drift=drift)
    N, m = f.grid.size, f.m
    A = op.scalar_matrix()
    inner = op.interior_mask().ravel()
    # assemble the coupling part column by column through unit vectors per component block
    blocks = [[None] * m for _ in range(m)]
    arr = op.arrays
    for a in range(m):
        for c in range(m):
            B = sp.diags(np.where(inner, arr["C"][..., a, c].ravel(), 0.0))
            for j in range(f.grid.d):
                coef = np.where(inner, arr["Bhat"][..., j, a, c].ravel(), 0.0)
                if np.any(coef):
                    B = B + sp.diags(coef) @ _central_first(f.grid, j)
            if a == c:
                B = B + A
            blocks[a][c] = B
    full = sp.bmat(blocks, format="csc")
    lhs = lam * sp.identity(N * m, format="csc") - full
    rhs = np.asarray(f.values).reshape(m, -1).copy()
    # zero Dirichlet data on the ring
    bnd = np.flatnonzero(~inner)
    lhs = lhs.tolil()
    for a in range(m):
        rows = bnd + a * N
        lhs[rows, :] = 0
        lhs[rows, rows] = 1.0
        rhs[a, bnd] = 0.0
    sol = spla.spsolve(lhs.tocsc(), rhs.ravel())
    return Field(f.grid, sol.reshape(f.values.shape), {"lambda": lam, "method": "direct"})


def _central_first(grid: Grid, axis: int) -> sp.csr_matrix:
    n = grid.n
    D1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n)) / (2 * grid.h)
    eye = sp.identity(n)
    if grid.d == 1:
        return D1.tocsr()
    return (sp.kron(D1, eye) if axis == 0 else sp.kron(eye, D1)).tocsr()


# ---------------------------------------------------------------------------
# mild solution


def mild_solution(coeffs: CoefficientField, f: Field, g: Callable[[float], np.ndarray], T: float, dt: float,
                  snapshots: Sequence[float] = (), duhamel_nodes: int = 21, scheme: str = "imex") -> Trajectory:
    """Solution of ``u' = A u + g``, ``u(0) = f`` computed two ways.

    (a) backward-Euler stepping with the source evaluated at the new time
    level; (b) ``T(t) f + int_0^t T(t - s) g(s) ds`` with composite Simpson
    quadrature over ``duhamel_nodes`` propagated sources. (a) is returned and
    the relative sup-norm gap on the inner box is ``diagnostics["duhamel_gap"]``.
    ``g(t)`` returns an array of shape ``(m,) + grid.shape``.
    """
    if duhamel_nodes < 3 or duhamel_nodes % 2 == 0:
        raise ValueError("duhamel_nodes must be odd and >= 3")
    shape = np.asarray(f.values).shape
    g0 = np.asarray(g(0.0), dtype=float)
    if g0.shape != shape:
        raise GridError(f"source has shape {g0.shape}, expected {shape}")
    cfg = EvolveConfig(dt=dt, t_final=T, snapshots=tuple(snapshots), scheme=scheme)
    stepper = Stepper(coeffs, f.grid, scheme=scheme, drift=cfg.drift)
    src_scale = max(f.sup(), float(np.max(np.abs(g0))) * max(T, 1.0), 1e-300)
    ts, us, diag = _march(stepper, f.values, cfg, source=lambda t: np.asarray(g(t), dtype=float), f_norm=src_scale)

    # (b) Duhamel quadrature at the final time
    s_nodes = np.linspace(0.0, T, duhamel_nodes)
    hs = T / (duhamel_nodes - 1)
    wts = np.ones(duhamel_nodes)
    wts[1:-1:2], wts[2:-1:2] = 4.0, 2.0
    wts *= hs / 3.0
    free = _march(stepper, f.values, EvolveConfig(dt=dt, t_final=T, scheme=scheme), f_norm=f.sup() or 1.0)[1][-1]
    acc = free.copy()
    for s, w in zip(s_nodes, wts):
        gs = np.asarray(g(float(s)), dtype=float)
        if T - s > 1e-14:
            prop = _march(stepper, gs, EvolveConfig(dt=dt, t_final=T - s, scheme=scheme),
                          f_norm=float(np.max(np.abs(gs))) or 1.0)[1][-1]
        else:
            prop = gs
        acc += w * prop
    margin = default_margin(f.grid)
    a_in = restrict_array(us[-1], f.grid.d, margin)
    b_in = restrict_array(acc, f.grid.d, margin)
    scale = max(float(np.max(np.abs(a_in))), 1e-300)
    diag["duhamel_gap"] = float(np.max(np.abs(a_in - b_in))) / scale
    diag["duhamel_nodes"] = duhamel_nodes
    return Trajectory(ts, [Field(f.grid, u) for u in us], cfg.to_json(), diag)
