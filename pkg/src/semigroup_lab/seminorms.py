"""Discrete estimators of sup, C^k, Hoelder, Zygmund, L^p, Sobolev and Besov (semi)norms.

All estimators work on the inner box obtained by dropping ``margin`` nodes
per side. Derivatives are taken on the full grid before restriction, so the
one-sided boundary stencils never enter an estimate with ``margin >= 2``.
Suprema over increments are replaced by maxima over grid-aligned offsets up
to a recorded window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates

from .grid import Field, default_margin, derivative_stack, restrict_array


class SeminormError(ValueError):
    pass


@dataclass
class SeminormEstimate:
    kind: str
    value: float
    window: Optional[float] = None
    samples: int = 0
    margin: int = 0
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": self.value, "window": self.window, "samples": self.samples,
                "margin": self.margin, "params": dict(self.params)}


def _margin(fld: Field, margin: Optional[int]) -> int:
    m = default_margin(fld.grid) if margin is None else int(margin)
    if m < 0 or fld.grid.n - 2 * m < 3:
        raise SeminormError(f"margin {m} too large for n={fld.grid.n}")
    return m


def _inner(a: np.ndarray, d: int, margin: int) -> np.ndarray:
    return restrict_array(a, d, margin)


def _modulus(stack: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(stack**2, axis=0))


def sup_norm(fld: Field, margin: Optional[int] = None) -> SeminormEstimate:
    mg = _margin(fld, margin)
    v = float(np.max(_modulus(_inner(np.asarray(fld.values), fld.grid.d, mg))))
    return SeminormEstimate("sup", v, margin=mg)


def ck_norm(fld: Field, k: int, margin: Optional[int] = None) -> SeminormEstimate:
    """``sum_{j <= k} sup |D^j u|`` with ``|D^j u|`` the Euclidean norm over all
    components and ordered index tuples of order ``j``."""
    if not 0 <= k <= 3:
        raise SeminormError(f"k must lie in 0..3, got {k}")
    mg = _margin(fld, margin)
    total, parts = 0.0, []
    for j in range(k + 1):
        mod = _modulus(derivative_stack(fld, j))
        s = float(np.max(_inner(mod, fld.grid.d, mg)))
        parts.append(s)
        total += s
    return SeminormEstimate("ck", total, margin=mg, params={"k": k, "parts": parts})


# ---------------------------------------------------------------------------
# Hoelder


def holder_seminorm(fld: Field, alpha: float, window: Optional[float] = None, pair_samples: int = 100_000,
                    seed: Optional[int] = None, margin: Optional[int] = None, values: Optional[np.ndarray] = None
                    ) -> SeminormEstimate:
    """``max |f(x) - f(y)| / |x - y|^alpha`` over node pairs with ``|x - y| <= window``.

    Exhaustive in d=1. In d=2 all nearest-neighbour pairs plus ``pair_samples``
    random pairs (``seed`` required). ``values`` overrides the field's values
    (used for derivative fields).
    """
    if not 0 < alpha < 1:
        raise SeminormError(f"alpha must lie in (0, 1), got {alpha}")
    g = fld.grid
    mg = _margin(fld, margin)
    vals = np.asarray(fld.values) if values is None else values
    v = _inner(vals, g.d, mg)
    n_in = v.shape[1]
    window = window if window is not None else (n_in - 1) * g.h
    kmax = min(n_in - 1, int(math.floor(window / g.h + 1e-9)))
    if kmax < 1:
        raise SeminormError("window smaller than the grid spacing")
    best, count = 0.0, 0
    if g.d == 1:
        for s in range(1, kmax + 1):
            diff = _modulus(v[:, s:] - v[:, :-s])
            best = max(best, float(diff.max()) / (s * g.h) ** alpha)
            count += diff.size
    else:
        if seed is None:
            raise SeminormError("a seed is required for random pair sampling in d=2")
        for ax in (1, 2):
            sl_a = [slice(None)] * 3
            sl_b = [slice(None)] * 3
            sl_a[ax], sl_b[ax] = slice(1, None), slice(None, -1)
            diff = _modulus(v[tuple(sl_a)] - v[tuple(sl_b)])
            best = max(best, float(diff.max()) / g.h**alpha)
            count += diff.size
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n_in, size=(pair_samples, 2))
        off = rng.integers(-kmax, kmax + 1, size=(pair_samples, 2))
        j = i + off
        ok = np.all((j >= 0) & (j < n_in), axis=1) & np.any(off != 0, axis=1)
        dist = np.hypot(off[:, 0], off[:, 1]) * g.h
        ok &= dist <= window + 1e-12
        i, j, dist = i[ok], j[ok], dist[ok]
        diff = _modulus(v[:, i[:, 0], i[:, 1]] - v[:, j[:, 0], j[:, 1]])
        if diff.size:
            best = max(best, float(np.max(diff / dist**alpha)))
        count += int(diff.size)
    return SeminormEstimate("holder", best, window=kmax * g.h, samples=count, margin=mg,
                            params={"alpha": alpha, "seed": seed})


# ---------------------------------------------------------------------------
# Zygmund


def _offsets(d: int, kmax: int) -> list[tuple[int, ...]]:
    if d == 1:
        return [(s,) for s in range(1, kmax + 1)]
    out = []
    for s in range(1, kmax + 1):
        out += [(s, 0), (0, s), (s, s), (s, -s)]
    return out


def zygmund_seminorm(fld: Field, window: float, margin: Optional[int] = None,
                     values: Optional[np.ndarray] = None) -> SeminormEstimate:
    """``max |f(x + 2h) - 2 f(x + h) + f(x)| / |h|`` over grid-aligned offsets ``|h| <= window``.

    Offsets run along the axes (and both diagonals in d=2); all three points stay in the inner box.
    """
    g = fld.grid
    mg = _margin(fld, margin)
    vals = np.asarray(fld.values) if values is None else values
    v = _inner(vals, g.d, mg)
    n_in = v.shape[1]
    kmax = int(math.floor(window / g.h + 1e-9))
    kmax = min(kmax, (n_in - 1) // 2)
    if window < 2 * g.h or kmax < 1:
        raise SeminormError("window too small to contain an admissible increment")
    best, count = 0.0, 0
    for off in _offsets(g.d, kmax):
        hlen = g.h * math.hypot(*off)
        if hlen > window + 1e-12:
            continue
        sl0, sl1, sl2 = [slice(None)], [slice(None)], [slice(None)]
        ok = True
        for o in off:
            span = 2 * abs(o)
            if span >= n_in:
                ok = False
                break
            if o >= 0:
                sl0.append(slice(0, n_in - span))
                sl1.append(slice(o, n_in - span + o))
                sl2.append(slice(2 * o, n_in))
            else:
                sl0.append(slice(span, n_in))
                sl1.append(slice(span + o, n_in + o))
                sl2.append(slice(0, n_in - span))
        if not ok:
            continue
        sd = v[tuple(sl2)] - 2 * v[tuple(sl1)] + v[tuple(sl0)]
        mod = _modulus(sd)
        best = max(best, float(mod.max()) / hlen)
        count += mod.size
    return SeminormEstimate("zygmund", best, window=window, samples=count, margin=mg)


# ---------------------------------------------------------------------------
# Lebesgue, Sobolev


def _integrate(a: np.ndarray, h: float, d: int) -> float:
    out = a
    for _ in range(d):
        out = trapezoid(out, dx=h, axis=-1)
    return float(out)


def lp_norm(fld: Field, p: float, margin: Optional[int] = None, values: Optional[np.ndarray] = None
            ) -> SeminormEstimate:
    """``(int |f|^p)^(1/p)`` over the inner box by the composite trapezoid rule."""
    if not p >= 1:
        raise SeminormError(f"p must be >= 1, got {p}")
    g = fld.grid
    mg = _margin(fld, margin)
    vals = np.asarray(fld.values) if values is None else values
    mod = _modulus(_inner(vals, g.d, mg))
    if math.isinf(p):
        return SeminormEstimate("lp", float(mod.max()), margin=mg, params={"p": p})
    val = _integrate(mod**p, g.h, g.d) ** (1.0 / p)
    return SeminormEstimate("lp", val, samples=mod.size, margin=mg, params={"p": p})


def sobolev_norm(fld: Field, k: int, p: float, margin: Optional[int] = None) -> SeminormEstimate:
    """``sum_{j <= k} || |D^j f| ||_p``."""
    if not 0 <= k <= 3:
        raise SeminormError(f"k must lie in 0..3, got {k}")
    if not p >= 1:
        raise SeminormError(f"p must be >= 1, got {p}")
    mg = _margin(fld, margin)
    parts = [lp_norm(fld, p, mg, values=derivative_stack(fld, j)).value for j in range(k + 1)]
    return SeminormEstimate("sobolev", float(sum(parts)), margin=mg, params={"k": k, "p": p, "parts": parts})


# ---------------------------------------------------------------------------
# Besov


def besov_seminorm(fld: Field, s: float, p: float, window: Optional[float] = None, h_samples: int = 48,
                   n_dirs: int = 16, margin: Optional[int] = None, values: Optional[np.ndarray] = None
                   ) -> SeminormEstimate:
    """``(int_{|h| <= window} ||f(. + h) - f||_p^p / |h|^{d + s p} dh)^{1/p}``.

    The radial integral runs over log-spaced integer multiples of the spacing
    from one spacing to the window (trapezoid rule in ``log |h|``), and in d=2
    over ``n_dirs`` uniform directions with bilinear interpolation off the
    axes. Both points of every difference lie in the inner box.
    """
    if not 0 < s < 1:
        raise SeminormError(f"s must lie in (0, 1), got {s}")
    if not p >= 1:
        raise SeminormError(f"p must be >= 1, got {p}")
    g = fld.grid
    mg = _margin(fld, margin)
    vals = np.asarray(fld.values) if values is None else values
    v = _inner(vals, g.d, mg)
    n_in = v.shape[1]
    window = window if window is not None else 0.5 * (n_in - 1) * g.h
    kmax = min(int(math.floor(window / g.h + 1e-9)), n_in - 2)
    if kmax < 1:
        raise SeminormError("window smaller than the grid spacing")
    ks = np.unique(np.round(np.geomspace(1, kmax, h_samples)).astype(int))
    radii = ks * g.h
    if g.d == 1:
        integrand = []
        for k in ks:
            diff = _modulus(v[:, k:] - v[:, :-k])
            dp = _integrate(diff**p, g.h, 1)
            # both signs of h contribute equally by symmetry
            integrand.append(2.0 * dp / (k * g.h) ** (s * p))
        # dh / |h|^{1+sp} = (1/|h|^{sp}) d log|h|
        total = trapezoid(np.asarray(integrand), np.log(radii)) if radii.size > 1 else 0.0
    else:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        idx = np.arange(n_in, dtype=float)
        I, J = np.meshgrid(idx, idx, indexing="ij")
        integrand = []
        for k in ks:
            acc = 0.0
            for t in th:
                di, dj = k * np.cos(t), k * np.sin(t)
                Ii, Jj = I + di, J + dj
                inside = (Ii >= 0) & (Ii <= n_in - 1) & (Jj >= 0) & (Jj <= n_in - 1)
                shifted = np.stack([map_coordinates(c, [Ii, Jj], order=1, mode="nearest") for c in v])
                diff = _modulus(shifted - v) * inside
                acc += _integrate(diff**p, g.h, 2)
            # polar measure: |h| d|h| dtheta, kernel |h|^{-2-sp}
            integrand.append(acc * (2 * np.pi / n_dirs) / (k * g.h) ** (s * p))
        total = trapezoid(np.asarray(integrand), np.log(radii)) if radii.size > 1 else 0.0
    return SeminormEstimate("besov", float(total) ** (1.0 / p), window=float(radii[-1]), samples=int(ks.size),
                            margin=mg, params={"s": s, "p": p, "h_min": float(radii[0]), "n_dirs": n_dirs})


def holder_norm(fld: Field, alpha: float, window: Optional[float] = None, margin: Optional[int] = None,
                seed: Optional[int] = None) -> float:
    """``sup |f| + [f]_alpha``, or ``sup |f| + [f]_Zygmund`` for ``alpha == 0``."""
    mg = _margin(fld, margin)
    base = sup_norm(fld, mg).value
    if alpha == 0:
        w = window if window is not None else 0.25 * (fld.grid.n - 2 * mg - 1) * fld.grid.h
        return base + zygmund_seminorm(fld, w, mg).value
    return base + holder_seminorm(fld, alpha, window, seed=seed, margin=mg).value
