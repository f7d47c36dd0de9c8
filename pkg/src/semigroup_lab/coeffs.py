"""Coefficient data for coupled elliptic systems with unbounded coefficients.

The operator acting on ``u: R^d -> R^m`` is

    A u = sum_ij q_ij D_ij u + sum_j (b_j I + Bhat_j) D_j u + C u

A :class:`CoefficientField` bundles vectorised evaluators for ``Q``, ``b``,
``Bhat`` and ``C`` together with their partial derivatives up to order 3.
Evaluators take points of shape ``(N, d)`` and a multi-index ``alpha``
(tuple of length ``d``); ``alpha = (0,) * d`` means the value itself.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

MAX_ORDER = 3


class CoefficientError(ValueError):
    """Invalid coefficient data."""


class UnsupportedFieldError(ValueError):
    """Operation needs radial metadata or a bounding certificate."""


def multi_indices(d: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``d`` with total order exactly ``order``."""
    return [a for a in itertools.product(range(order + 1), repeat=d) if sum(a) == order]


def _axes_of(alpha: Sequence[int]) -> list[int]:
    out: list[int] = []
    for axis, count in enumerate(alpha):
        out.extend([axis] * count)
    return out


def power_weight_derivative(x: np.ndarray, s: float, alpha: Sequence[int]) -> np.ndarray:
    """``D^alpha (1 + |x|^2)^s`` for ``|alpha| <= 3``; ``x`` has shape (N, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = 1.0 + np.sum(x * x, axis=1)
    idx = _axes_of(alpha)
    order = len(idx)
    if order == 0:
        return w**s
    if order == 1:
        (i,) = idx
        return s * w ** (s - 1) * 2.0 * x[:, i]
    if order == 2:
        i, j = idx
        out = s * (s - 1) * w ** (s - 2) * 4.0 * x[:, i] * x[:, j]
        if i == j:
            out = out + 2.0 * s * w ** (s - 1)
        return out
    if order == 3:
        i, j, k = idx
        out = s * (s - 1) * (s - 2) * w ** (s - 3) * 8.0 * x[:, i] * x[:, j] * x[:, k]
        cross = np.zeros_like(w)
        if i == j:
            cross = cross + x[:, k]
        if i == k:
            cross = cross + x[:, j]
        if j == k:
            cross = cross + x[:, i]
        return out + 4.0 * s * (s - 1) * w ** (s - 2) * cross
    raise CoefficientError(f"derivative order {order} > {MAX_ORDER}")


@dataclass(frozen=True)
class RadialInfo:
    """Closed-form tail data for fields whose growth functions depend on |x| only.

    ``h_tail(nu)`` returns ``(finite, limit)`` for the radial profile
    ``(2 - nu) Lambda_C + d * betahat0^2 / (2 lambda_Q)`` as ``|x| -> inf``;
    ``theta_tail()`` returns the limit of ``Lambda_C``.
    """

    h_tail: Callable[[float], tuple[bool, float]]
    theta_tail: Callable[[], float]
    exact_radial: bool = True


@dataclass(frozen=True)
class PolynomialFamilyParams:
    d: int
    m: int
    k: float
    p: float
    r: float
    gamma: float
    Q0: np.ndarray
    B0: tuple[np.ndarray, ...]
    C0: np.ndarray

    def __post_init__(self):
        Q0 = np.atleast_2d(np.asarray(self.Q0, dtype=float))
        C0 = np.atleast_2d(np.asarray(self.C0, dtype=float))
        B0 = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B0)
        object.__setattr__(self, "Q0", Q0)
        object.__setattr__(self, "C0", C0)
        object.__setattr__(self, "B0", B0)
        self.validate()

    def validate(self) -> None:
        d, m = self.d, self.m
        if d not in (1, 2):
            raise CoefficientError(f"d must be 1 or 2, got {d}")
        if m < 1:
            raise CoefficientError(f"m must be positive, got {m}")
        for name in ("k", "p", "r", "gamma"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise CoefficientError(f"exponent {name} must be nonnegative, got {val}")
        if self.Q0.shape != (d, d):
            raise CoefficientError(f"Q0 must be {d}x{d}")
        if not np.allclose(self.Q0, self.Q0.T, rtol=0, atol=1e-14):
            raise CoefficientError("Q0 must be symmetric")
        if np.linalg.eigvalsh(self.Q0).min() <= 0:
            raise CoefficientError("Q0 must be positive definite")
        if self.C0.shape != (m, m):
            raise CoefficientError(f"C0 must be {m}x{m}")
        if np.linalg.eigvalsh(0.5 * (self.C0 + self.C0.T)).min() <= 0:
            raise CoefficientError("C0 must be positive definite")
        if len(self.B0) != d:
            raise CoefficientError(f"B0 must hold {d} matrices")
        for i, b in enumerate(self.B0):
            if b.shape != (m, m):
                raise CoefficientError(f"B0[{i}] must be {m}x{m}")
            if np.any(np.diag(b) != 0):
                raise CoefficientError(f"B0[{i}] must have a zero diagonal")

    @property
    def exponents(self) -> tuple[float, float, float, float]:
        return (self.k, self.p, self.r, self.gamma)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "k": float(self.k),
            "p": float(self.p),
            "r": float(self.r),
            "gamma": float(self.gamma),
            "Q0": self.Q0.tolist(),
            "B0": [b.tolist() for b in self.B0],
            "C0": self.C0.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PolynomialFamilyParams":
        try:
            return cls(
                d=int(doc["d"]),
                m=int(doc["m"]),
                k=float(doc["k"]),
                p=float(doc["p"]),
                r=float(doc["r"]),
                gamma=float(doc["gamma"]),
                Q0=np.asarray(doc["Q0"], dtype=float),
                B0=tuple(np.asarray(b, dtype=float) for b in doc["B0"]),
                C0=np.asarray(doc["C0"], dtype=float),
            )
        except KeyError as exc:
            raise CoefficientError(f"missing key {exc.args[0]!r} in family document") from None


Evaluator = Callable[[np.ndarray, tuple], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """Coefficients of the operator with derivative evaluators.

    Each evaluator maps ``(x, alpha)`` to an array with leading axis ``N``:
    ``q`` -> (N, d, d), ``b`` -> (N, d), ``bhat`` -> (N, d, m, m),
    ``c`` -> (N, m, m).
    """

    d: int
    m: int
    q: Evaluator
    b: Evaluator
    bhat: Evaluator
    c: Evaluator
    max_order: int = MAX_ORDER
    radial: Optional[RadialInfo] = None
    name: str = "custom"
    description: dict = field(default_factory=dict)
    family: Optional[PolynomialFamilyParams] = None

    def _check(self, x, alpha) -> tuple[np.ndarray, tuple]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise CoefficientError(f"points must have {self.d} coordinates")
        alpha = tuple(int(a) for a in (alpha if alpha is not None else (0,) * self.d))
        if len(alpha) != self.d:
            raise CoefficientError("multi-index length must equal d")
        if sum(alpha) > self.max_order:
            raise CoefficientError(f"derivative order {sum(alpha)} exceeds {self.max_order}")
        return x, alpha

    def Q(self, x, alpha=None) -> np.ndarray:
        return self.q(*self._check(x, alpha))

    def drift(self, x, alpha=None) -> np.ndarray:
        return self.b(*self._check(x, alpha))

    def Bhat(self, x, alpha=None) -> np.ndarray:
        return self.bhat(*self._check(x, alpha))

    def C(self, x, alpha=None) -> np.ndarray:
        return self.c(*self._check(x, alpha))

    def B(self, x) -> np.ndarray:
        """Full first-order matrices ``B_j = b_j I + Bhat_j``, shape (N, d, m, m)."""
        bj = self.drift(x)
        eye = np.eye(self.m)
        return bj[:, :, None, None] * eye + self.Bhat(x)

    def fingerprint(self) -> str:
        doc = {"name": self.name, "d": self.d, "m": self.m, "description": self.description}
        raw = json.dumps(doc, sort_keys=True, default=float).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


def polynomial_family(params: PolynomialFamilyParams) -> CoefficientField:
    """Coefficients ``Q = w^k Q0``, ``b_i = -x_i w^p``, ``Bhat_i = w^r B0_i``,
    ``C = -w^gamma C0`` with ``w = 1 + |x|^2``."""
    params.validate()
    d, m = params.d, params.m
    k, p, r, gam = params.exponents
    Q0, C0 = params.Q0, params.C0
    B0 = np.stack(params.B0)

    def q(x, alpha):
        return power_weight_derivative(x, k, alpha)[:, None, None] * Q0

    def b(x, alpha):
        out = np.empty((x.shape[0], d))
        g = power_weight_derivative(x, p, alpha)
        for j in range(d):
            val = x[:, j] * g
            if alpha[j] > 0:
                lower = list(alpha)
                lower[j] -= 1
                val = val + alpha[j] * power_weight_derivative(x, p, lower)
            out[:, j] = -val
        return out

    def bhat(x, alpha):
        return power_weight_derivative(x, r, alpha)[:, None, None, None] * B0

    def c(x, alpha):
        return -power_weight_derivative(x, gam, alpha)[:, None, None] * C0

    lam_c0 = float(np.linalg.eigvalsh(0.5 * (C0 + C0.T)).min())
    lam_q0 = float(np.linalg.eigvalsh(Q0).min())
    bmax2 = float(max(np.sum(bi * bi) for bi in params.B0))

    def h_tail(nu: float) -> tuple[bool, float]:
        # profile = -(2 - nu) lam_c0 w^gamma + d bmax2 / (2 lam_q0) w^(2r - k)
        a = (2.0 - nu) * lam_c0
        c_pos = d * bmax2 / (2.0 * lam_q0)
        e = 2.0 * r - k
        if c_pos == 0.0 or e < 0:
            return True, (-math.inf if gam > 0 else -a)
        if e == 0:
            return True, (-math.inf if gam > 0 else c_pos - a)
        if gam > e or (gam == e and a > c_pos):
            return True, -math.inf
        if gam == e and a == c_pos:
            return True, 0.0
        return False, math.inf

    def theta_tail() -> float:
        return -math.inf if gam > 0 else -lam_c0

    return CoefficientField(
        d=d,
        m=m,
        q=q,
        b=b,
        bhat=bhat,
        c=c,
        radial=RadialInfo(h_tail=h_tail, theta_tail=theta_tail),
        name="polynomial-family",
        description=params.to_json(),
        family=params,
    )


def constant_field(
    Q,
    C=None,
    Bhat=None,
    drift_matrix=None,
    name: str = "constant",
) -> CoefficientField:
    """Constant ``Q``, ``Bhat``, ``C`` and a linear drift ``b(x) = drift_matrix @ x``.

    Covers the heat operator (zero drift) and Ornstein-Uhlenbeck (``-I`` drift).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    d = Q.shape[0]
    if not np.allclose(Q, Q.T):
        raise CoefficientError("Q must be symmetric")
    if C is None:
        C = np.zeros((1, 1))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m = C.shape[0]
    if Bhat is None:
        Bhat = np.zeros((d, m, m))
    Bhat = np.asarray(Bhat, dtype=float).reshape(d, m, m)
    for i in range(d):
        if np.any(np.diag(Bhat[i]) != 0):
            raise CoefficientError(f"Bhat[{i}] must have a zero diagonal")
    A = np.zeros((d, d)) if drift_matrix is None else np.atleast_2d(np.asarray(drift_matrix, float))

    def _zero_unless_value(alpha, value, shape_tail, n):
        if sum(alpha) == 0:
            return np.broadcast_to(value, (n,) + shape_tail).copy()
        return np.zeros((n,) + shape_tail)

    def q(x, alpha):
        return _zero_unless_value(alpha, Q, (d, d), x.shape[0])

    def b(x, alpha):
        order = sum(alpha)
        if order == 0:
            return x @ A.T
        if order == 1:
            j = alpha.index(1)
            return np.broadcast_to(A[:, j], (x.shape[0], d)).copy()
        return np.zeros((x.shape[0], d))

    def bhat(x, alpha):
        return _zero_unless_value(alpha, Bhat, (d, m, m), x.shape[0])

    def c(x, alpha):
        return _zero_unless_value(alpha, C, (m, m), x.shape[0])

    lam_c = float(np.linalg.eigvalsh(0.5 * (C + C.T)).max())
    lam_q = float(np.linalg.eigvalsh(Q).min())
    bmax2 = float(max(np.sum(Bhat[i] ** 2) for i in range(d)))

    def h_tail(nu: float) -> tuple[bool, float]:
        if lam_q <= 0:
            return False, math.inf
        return True, (2.0 - nu) * lam_c + d * bmax2 / (2.0 * lam_q)

    return CoefficientField(
        d=d,
        m=m,
        q=q,
        b=b,
        bhat=bhat,
        c=c,
        radial=RadialInfo(h_tail=h_tail, theta_tail=lambda: lam_c),
        name=name,
        description={"Q": Q.tolist(), "C": C.tolist(), "Bhat": Bhat.tolist(), "drift": A.tolist()},
    )


def heat_field(d: int = 1, m: int = 1) -> CoefficientField:
    return constant_field(np.eye(d), C=np.zeros((m, m)), name="heat")


def ornstein_uhlenbeck_field(d: int = 1, m: int = 1) -> CoefficientField:
    return constant_field(np.eye(d), C=np.zeros((m, m)), drift_matrix=-np.eye(d), name="ornstein-uhlenbeck")


def field_from_json(doc: dict) -> CoefficientField:
    """Build a field from a JSON document.

    Documents with ``Q0``/``C0``/``B0`` keys describe the polynomial family;
    ``{"kind": "constant", "Q": ..., "C": ..., "Bhat": ..., "drift": ...}``
    describes constant coefficients with linear drift; ``{"kind": "heat"}``
    and ``{"kind": "ou"}`` are shortcuts.
    """
    kind = doc.get("kind", "family" if "Q0" in doc else None)
    if kind == "family":
        return polynomial_family(PolynomialFamilyParams.from_json(doc))
    if kind == "constant":
        return constant_field(doc["Q"], C=doc.get("C"), Bhat=doc.get("Bhat"), drift_matrix=doc.get("drift"))
    if kind == "heat":
        return heat_field(int(doc.get("d", 1)), int(doc.get("m", 1)))
    if kind == "ou":
        return ornstein_uhlenbeck_field(int(doc.get("d", 1)), int(doc.get("m", 1)))
    raise CoefficientError(f"unknown coefficient kind {kind!r}")


# ---------------------------------------------------------------------------
# spectral and derivative bounds


@dataclass
class SpectralBounds:
    lambda_Q: np.ndarray
    Lambda_Q: np.ndarray
    Lambda_C: np.ndarray
    Lambda_D1b: np.ndarray
    beta0_hat: np.ndarray
    xi: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    betahat: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)


def _sym_max_eig(mats: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))[..., -1]


def _frob(a: np.ndarray, axes) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=axes))


def spectral_bounds(fld: CoefficientField, x, order: int = 3) -> SpectralBounds:
    """Eigenvalue extremes and derivative maxima at the points ``x``.

    Matrix-valued derivatives are measured in the Frobenius norm; maxima run
    over every multi-index of the exact order (and over ``j`` for ``b`` and
    ``Bhat``).  Scalars come back as arrays of length ``N``.
    """
    if order > MAX_ORDER or order > fld.max_order:
        raise CoefficientError(f"order {order} exceeds supported maximum")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = fld.d
    zero = (0,) * d
    Qx = fld.Q(x, zero)
    eq = np.linalg.eigvalsh(Qx)
    jac = np.stack([fld.drift(x, tuple(int(i == j) for i in range(d))) for j in range(d)], axis=-1)
    sb = SpectralBounds(
        lambda_Q=eq[:, 0],
        Lambda_Q=eq[:, -1],
        Lambda_C=_sym_max_eig(fld.C(x, zero)),
        Lambda_D1b=_sym_max_eig(jac),
        beta0_hat=_frob(fld.Bhat(x, zero), (2, 3)).max(axis=1),
    )
    for i in range(1, order + 1):
        idx = multi_indices(d, i)
        sb.xi[i] = np.max([_frob(fld.Q(x, a), (1, 2)) for a in idx], axis=0)
        sb.betahat[i] = np.max([_frob(fld.Bhat(x, a), (2, 3)).max(axis=1) for a in idx], axis=0)
        sb.gamma[i] = np.max([_frob(fld.C(x, a), (1, 2)) for a in idx], axis=0)
        if i >= 2:
            sb.beta[i] = np.max([np.abs(fld.drift(x, a)).max(axis=1) for a in idx], axis=0)
    return sb


# ---------------------------------------------------------------------------
# growth constants


@dataclass(frozen=True)
class RadialSearchConfig:
    R: float = 50.0
    n_scan: int = 4096
    xatol: float = 1e-10
    n_angles: int = 64
    # for fields without radial metadata: caller asserts the profile tail
    # beyond R is nonincreasing
    tail_certificate: Optional[str] = None


@dataclass
class GrowthConstants:
    nu: float
    Theta_C: float
    H: float
    H_nu: float
    p: float
    H_tilde_p: float
    H_status: str = "finite"
    H_limit: float = -math.inf
    Theta_limit: float = -math.inf
    argmax_H: float = 0.0
    argmax_Theta: float = 0.0
    omega: Optional[float] = None
    M: Optional[float] = None

    def to_json(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in self.__dict__.items()}


def shell_points(d: int, radii: np.ndarray, n_angles: int) -> np.ndarray:
    """Sample points on spheres of the given radii, shape (len(radii), n_dir, d)."""
    radii = np.asarray(radii, dtype=float)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * np.pi * np.arange(n_angles) / n_angles
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    return radii[:, None, None] * dirs[None, :, :]


def radial_profile(fld: CoefficientField, func: Callable[[np.ndarray], np.ndarray], n_angles: int = 64):
    """Wrap a pointwise function into ``g(r) = max over the sphere |x| = r``."""
    exact = fld.radial is not None and fld.radial.exact_radial and fld.family is not None

    def g(radii):
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if exact:
            pts = np.zeros((radii.size, fld.d))
            pts[:, 0] = radii
            return func(pts)
        pts = shell_points(fld.d, radii, n_angles)
        vals = func(pts.reshape(-1, fld.d)).reshape(pts.shape[:2])
        return vals.max(axis=1)

    return g


def maximize_radial(g: Callable, R: float, n_scan: int = 4096, xatol: float = 1e-10) -> tuple[float, float]:
    """Maximise ``g`` on ``[0, R]``: dense pre-scan, then bounded refinement."""
    r = np.linspace(0.0, R, n_scan)
    vals = g(r)
    i = int(np.argmax(vals))
    best_r, best = float(r[i]), float(vals[i])
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, n_scan - 1)]
    if hi > lo:
        res = minimize_scalar(lambda s: -float(g(np.array([s]))[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": xatol})
        if -res.fun > best:
            best_r, best = float(res.x), float(-res.fun)
    return best_r, best


def _tail_nonincreasing(g: Callable, R: float) -> bool:
    r = np.linspace(0.75 * R, R, 64)
    v = g(r)
    return bool(np.all(np.diff(v) <= 1e-12 * (1 + np.abs(v[1:]))))


def growth_constants(
    fld: CoefficientField,
    nu: float = 0.0,
    p: float = 2.0,
    search: RadialSearchConfig = RadialSearchConfig(),
) -> GrowthConstants:
    """``Theta_C = sup Lambda_C``, ``H``, ``H_nu = H + nu Theta_C`` and
    ``H_tilde_p = H/2 + (1/2 - 1/p) Theta_C``."""
    if not 0.0 <= nu < 2.0:
        raise CoefficientError(f"nu must lie in [0, 2), got {nu}")
    if fld.radial is None and search.tail_certificate is None:
        raise UnsupportedFieldError("field has no radial metadata and no tail certificate was supplied")
    d = fld.d

    def lam_c(pts):
        return spectral_bounds(fld, pts, order=0).Lambda_C

    def h_int(pts):
        sb = spectral_bounds(fld, pts, order=0)
        return (2.0 - nu) * sb.Lambda_C + d * sb.beta0_hat**2 / (2.0 * sb.lambda_Q)

    g_theta = radial_profile(fld, lam_c, search.n_angles)
    g_h = radial_profile(fld, h_int, search.n_angles)
    r_t, theta = maximize_radial(g_theta, search.R, search.n_scan, search.xatol)
    r_h, H = maximize_radial(g_h, search.R, search.n_scan, search.xatol)

    if fld.radial is not None:
        finite, h_lim = fld.radial.h_tail(nu)
        t_lim = fld.radial.theta_tail()
    else:
        finite = _tail_nonincreasing(g_h, search.R)
        h_lim = float(g_h(np.array([search.R]))[0])
        t_lim = float(g_theta(np.array([search.R]))[0])
    status = "finite"
    if not finite:
        status, H = "possibly-infinite", math.inf
    elif h_lim > H:
        H = h_lim
    theta = max(theta, t_lim)
    H_nu = H + theta * nu
    return GrowthConstants(
        nu=nu,
        Theta_C=theta,
        H=H,
        H_nu=H_nu,
        p=p,
        H_tilde_p=0.5 * H + (0.5 - 1.0 / p) * theta,
        H_status=status,
        H_limit=h_lim,
        Theta_limit=t_lim,
        argmax_H=r_h,
        argmax_Theta=r_t,
    )


def lyapunov_witness(x: np.ndarray) -> np.ndarray:
    """The Lyapunov function ``1 + |x|^2`` used for the polynomial family."""
    x = np.atleast_2d(x)
    return 1.0 + np.sum(x * x, axis=1)
