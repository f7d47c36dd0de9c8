"""Certification of the structural hypotheses on the coefficients.

Two routes are provided. For the polynomial family the hypotheses reduce to
inequalities between the exponents ``k, p, r, gamma`` which are decided
exactly. For a general field the bound functions are sampled on radial
shells, their tail growth exponents are fitted in the variable
``w = 1 + |x|^2``, and each "sup < infinity" block is classified by comparing
the growth of its positive terms with the growth of its negative terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coeffs import (
    CoefficientField,
    PolynomialFamilyParams,
    RadialSearchConfig,
    UnsupportedFieldError,
    maximize_radial,
    shell_points,
    spectral_bounds,
)

LEVEL_NAMES = {0: "base", 1: "deriv1", 2: "deriv2", 3: "deriv3"}
PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


class HypothesisError(ValueError):
    pass


@dataclass
class HypothesisReport:
    level: str
    status: str
    constants: dict = field(default_factory=dict)
    witness: Optional[object] = None
    R: Optional[float] = None
    shells: Optional[int] = None
    method: str = "closed-form"
    blocks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "status": self.status,
            "constants": _jsonable(self.constants),
            "witness": _jsonable(self.witness),
            "R": self.R,
            "shells": self.shells,
            "method": self.method,
            "blocks": _jsonable(self.blocks),
            "notes": list(self.notes),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# closed form for the polynomial family


def _mu1_interval(k: float, r: float) -> tuple[float, float]:
    """Admissible ``mu1`` in [0, 2] with ``mu1 (2r - 1) <= 2k``; always contains 0."""
    s = 2 * r - 1
    if s > 0:
        return 0.0, min(2.0, 2 * k / s)
    return 0.0, 2.0


def check_family_closed_form(params: PolynomialFamilyParams, level: int) -> HypothesisReport:
    """Exponent inequalities sufficient for the hypotheses of the given level."""
    params.validate()
    if level not in (0, 1, 2, 3):
        raise HypothesisError(f"level must be 0..3, got {level}")
    k, p, r, g = params.exponents
    name = LEVEL_NAMES[level]
    checks = [
        ("k<p+1", k < p + 1, f"k={k} p={p}"),
        ("gamma>max{0,2r-k}", g > max(0.0, 2 * r - k), f"gamma={g} 2r-k={2 * r - k}"),
    ]
    for label, ok, detail in checks:
        if not ok:
            return HypothesisReport(name, FAIL, witness=f"{label} violated ({detail})")
    if level == 0:
        return HypothesisReport(name, PASS, constants={"phi": "1+|x|^2"})

    lo, hi = _mu1_interval(k, r)
    lhs = max(p, g)
    best = None
    for mu1 in (hi, lo):
        parts = [2 * k - 1, (2 * r - 1) * (2 - mu1)]
        if level >= 2:
            parts.append(2 * r - 2)
        rhs = 0.5 * max(parts)
        if lhs > rhs:
            best = (mu1, rhs)
            break
    if best is None:
        mu1 = hi if 2 * r - 1 > 0 else lo
        parts = [2 * k - 1, (2 * r - 1) * (2 - mu1)] + ([2 * r - 2] if level >= 2 else [])
        return HypothesisReport(
            name,
            FAIL,
            constants={"mu1_interval": [lo, hi]},
            witness=f"max{{p,gamma}}={lhs} not > {0.5 * max(parts)} for every admissible mu1",
        )
    consts = {"mu1": best[0], "mu1_interval": [lo, hi], "margin": lhs - best[1]}
    if level >= 1:
        consts.update({"alpha1": 1.0, "tau1": 1.0})
    if level >= 2:
        consts.update({"alpha2": 1.0, "mu2": 1.0, "rho2": 1.0, "tau2": 1.0})
    if level >= 3:
        consts.update({"alpha3": 1.0, "mu3": 1.0, "rho3": 1.0, "tau3": 1.0})
    return HypothesisReport(name, PASS, constants=consts)


# ---------------------------------------------------------------------------
# sampled atoms


@dataclass(frozen=True)
class ShellSampling:
    """Radial shells for the numeric checker.

    ``mode="canonical"`` (default) fixes every free exponent to 1 except
    ``mu1``, which is searched; this never certifies a family member that the
    exponent inequalities reject. ``mode="grid"`` searches every free exponent
    over a grid of step ``exponent_step`` plus the critical values implied by
    the fitted growth rates, and can certify strictly more.
    """

    R: float = 50.0
    shells: int = 64
    n_angles: int = 16
    tail_fraction: float = 0.25
    tol: float = 1e-4
    halves_tol: float = 0.05
    exponent_step: float = 0.25
    mode: str = "canonical"
    N_range: tuple = (1e-3, 1e3)

    def validate(self):
        if not self.R > 0:
            raise HypothesisError("sampling radius must be positive")
        if self.shells < 8:
            raise HypothesisError("need at least 8 shells")
        if self.mode not in ("grid", "canonical"):
            raise HypothesisError(f"unknown exponent mode {self.mode!r}")


SIGNED_ATOMS = ("LamC", "LamD1b", "trQ", "bx", "LamCw", "trQ_perp", "l1", "l1_div", "l1_q")


class Atoms:
    """Bound functions sampled on shells: arrays of shape (shells, directions)."""

    def __init__(self, fld: CoefficientField, order: int, sampling: ShellSampling):
        self.sampling = sampling
        R, S = sampling.R, sampling.shells
        self.radii = R * np.arange(1, S + 1) / S
        pts = shell_points(fld.d, self.radii, sampling.n_angles)
        self.points = pts
        flat = pts.reshape(-1, fld.d)
        sb = spectral_bounds(fld, flat, order=order)
        shp = pts.shape[:2]
        self.w = 1.0 + self.radii**2
        a = {
            "lam": sb.lambda_Q,
            "LamQ": sb.Lambda_Q,
            "LamC": sb.Lambda_C,
            "LamD1b": sb.Lambda_D1b,
            "bh0": sb.beta0_hat,
        }
        for i in range(1, order + 1):
            a[f"xi{i}"] = sb.xi[i]
            a[f"bh{i}"] = sb.betahat[i]
            a[f"g{i}"] = sb.gamma[i]
            if i >= 2:
                a[f"beta{i}"] = sb.beta[i]
        self.values = {k: np.asarray(v, dtype=float).reshape(shp) for k, v in a.items()}
        self._fits: dict = {}

    def __getitem__(self, key):
        return self.values[key]

    def add(self, key, values):
        self.values[key] = np.asarray(values, dtype=float).reshape(self.points.shape[:2])

    def tail_slice(self) -> slice:
        n = self.radii.size
        return slice(n - max(4, int(round(self.sampling.tail_fraction * n))), n)

    def envelope(self, key: str, lower: bool = False) -> np.ndarray:
        v = self.values[key]
        return v.min(axis=1) if lower else v.max(axis=1)

    def fit(self, key: str, lower: bool = False) -> "TailFit":
        ck = (key, lower)
        if ck not in self._fits:
            self._fits[ck] = fit_tail(self.w, self.envelope(key, lower), self.tail_slice(), self.sampling)
        return self._fits[ck]


@dataclass(frozen=True)
class TailFit:
    """Growth of ``|v| ~ c w^e`` over the tail; ``sign`` of the tail values."""

    exponent: float
    sign: int
    zero: bool
    consistent: bool
    halves: tuple = (math.nan, math.nan)


def fit_tail(w: np.ndarray, v: np.ndarray, tail: slice, sampling: ShellSampling) -> TailFit:
    """Least-squares fit of ``log|v| = e log w + c + d / w`` on the tail shells.

    The ``1/w`` column absorbs the leading correction of profiles such as
    ``|x| w^(k-1)``, which keeps the exponent accurate to about 1e-6 for
    power-law profiles at R = 50.
    """
    wt, vt = w[tail], v[tail]
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.all(np.abs(vt) <= 1e-13 * scale):
        return TailFit(-math.inf, 0, True, True)
    signs = np.sign(vt)
    if np.any(signs != signs[-1]) or np.any(vt == 0):
        return TailFit(math.nan, int(signs[-1]), False, False)
    lw, lv = np.log(wt), np.log(np.abs(vt))
    A = np.stack([lw, np.ones_like(lw), 1.0 / wt], axis=1)
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    e = float(coef[0])
    h = lw.size // 2
    s1 = np.polyfit(lw[: h + 1], lv[: h + 1], 1)[0]
    s2 = np.polyfit(lw[h:], lv[h:], 1)[0]
    consistent = abs(s1 - s2) <= sampling.halves_tol
    if abs(e) < 10 * sampling.tol and np.ptp(lv) < 1e-9:
        e = 0.0
    return TailFit(e, int(signs[-1]), False, bool(consistent), (float(s1), float(s2)))


# ---------------------------------------------------------------------------
# blocks


@dataclass(frozen=True)
class Factor:
    """``atom ** (const + slope * exponent_symbol)``."""

    atom: str
    const: float
    slope: float = 0.0
    symbol: Optional[str] = None

    def power(self, expo: dict) -> float:
        return self.const + (self.slope * expo[self.symbol] if self.symbol else 0.0)


@dataclass(frozen=True)
class Term:
    name: str
    coef: str  # key into the constants dict, or a number rendered as a string
    factors: tuple

    def signed(self) -> bool:
        return len(self.factors) == 1 and self.factors[0].atom in SIGNED_ATOMS


@dataclass
class Block:
    name: str
    terms: list
    # exact pointwise profile, used when exponents tie
    exact: Optional[object] = None


def _coef_value(coef: str, consts: dict) -> float:
    try:
        return float(coef)
    except ValueError:
        return float(consts[coef])


def _term_values(term: Term, atoms: Atoms, expo: dict, consts: dict) -> np.ndarray:
    out = np.full(atoms.points.shape[:2], _coef_value(term.coef, consts))
    for f in term.factors:
        pw = f.power(expo)
        if pw == 0:
            continue
        out = out * atoms[f.atom] ** pw
    return out


def _term_growth(term: Term, atoms: Atoms, expo: dict) -> tuple[int, float, bool]:
    """(sign, exponent, consistent) of the per-shell envelope of a term."""
    if term.signed():
        ft = atoms.fit(term.factors[0].atom)
        return ft.sign, ft.exponent, ft.consistent
    e, ok = 0.0, True
    for f in term.factors:
        pw = f.power(expo)
        if pw == 0:
            continue
        ft = atoms.fit(f.atom, lower=pw < 0)
        if ft.zero:
            if pw > 0:
                return 0, -math.inf, True
            raise HypothesisError(f"negative power of vanishing function {f.atom}")
        e += pw * ft.exponent
        ok = ok and ft.consistent
    return 1, e, ok


@dataclass
class BlockResult:
    name: str
    status: str
    positive_exponent: float
    negative_exponent: float
    dominant_term: Optional[str] = None
    detail: str = ""
    witness_x: Optional[list] = None

    def to_json(self) -> dict:
        return _jsonable(self.__dict__)


def _nonincreasing_tail(profile: np.ndarray, tail: slice) -> bool:
    t = profile[tail]
    return bool(np.all(np.diff(t) <= 1e-12 * (1.0 + np.abs(t[1:]))))


def _block_profile(block: Block, atoms: Atoms, expo: dict, consts: dict) -> np.ndarray:
    if block.exact is not None:
        vals = block.exact(atoms, expo, consts)
    else:
        vals = sum(_term_values(t, atoms, expo, consts) for t in block.terms)
    return np.asarray(vals).max(axis=1)


def classify_block(block: Block, atoms: Atoms, expo: dict, consts: dict, free_coef: Optional[str]) -> BlockResult:
    """Decide ``sup < infinity`` for one block from the tail exponents of its terms."""
    tol = atoms.sampling.tol
    pos, neg = [], []
    consistent = True
    for t in block.terms:
        s, e, ok = _term_growth(t, atoms, expo)
        consistent = consistent and ok
        if s > 0 and _coef_value(t.coef, consts) > 0:
            pos.append((e, t.name))
        elif s < 0 and _coef_value(t.coef, consts) > 0:
            neg.append((e, t.name))
        elif s != 0 and not math.isfinite(e):
            consistent = False
    E, top = max(pos) if pos else (-math.inf, None)
    F = max((e for e, _ in neg), default=-math.inf)
    res = BlockResult(block.name, PASS, E, F, top)
    if not consistent or (math.isnan(E) or math.isnan(F)):
        res.status = INCONCLUSIVE
        res.detail = "tail growth not a clean power law over the last quartile"
        return res
    if E <= tol:
        res.detail = "all positive terms bounded"
        return res
    if E < F - tol:
        res.detail = "positive terms dominated by the negative ones"
        return res
    if E > F + tol:
        res.status = FAIL
        res.detail = f"term {top} grows like w^{E:.4g}, negative part only like w^{F:.4g}"
        prof = _block_profile(block, atoms, expo, consts)
        i = int(np.argmax(prof))
        res.witness_x = atoms.points[i, 0].tolist()
        return res
    # tie: let the free multiplier absorb the dominant positive term if there is one
    tail = atoms.tail_slice()
    cands = [consts.get(free_coef)] if free_coef else [None]
    if free_coef:
        lo, hi = atoms.sampling.N_range
        grid = 10.0 ** np.arange(math.log10(lo), math.log10(hi) + 1e-9, 0.5)
        cands = sorted(grid, key=lambda v: (abs(math.log10(v)), v))
    for N in cands:
        trial = dict(consts)
        if free_coef:
            trial[free_coef] = float(N)
        if _nonincreasing_tail(_block_profile(block, atoms, expo, trial), tail):
            if free_coef:
                consts[free_coef] = float(N)
            res.detail = "tie between leading exponents resolved by a nonincreasing tail"
            return res
    res.status = INCONCLUSIVE
    res.detail = "leading exponents tie and the tail is not nonincreasing"
    return res


# ---------------------------------------------------------------------------
# block definitions


def _F(atom, const, slope=0.0, symbol=None):
    return Factor(atom, const, slope, symbol)


def _square_split(prefix: str, coef: str, multiple: float, xi_symbol: str) -> list:
    """Terms bounding ``coef * (bh0 lam^-1/2 + multiple sqrt(A1) xi1^(1 - s/2))^2`` by ``2a^2 + 2b^2``."""
    return [
        Term(f"{prefix}:bh0^2/lam", f"2*{coef}", (_F("bh0", 2.0), _F("lam", -1.0))),
        Term(
            f"{prefix}:xi1",
            f"2*{coef}*A1*{multiple ** 2}",
            (_F("xi1", 2.0, -1.0, xi_symbol),),
        ),
    ]


def _square_exact(atoms: Atoms, expo: dict, consts: dict, coef: str, multiple: float, xi_symbol: str):
    a = atoms["bh0"] / np.sqrt(atoms["lam"])
    pw = 1.0 - expo[xi_symbol] / 2.0
    b = multiple * math.sqrt(consts["A1"]) * (atoms["xi1"] ** pw if pw != 0 else 1.0)
    return _coef_value(coef, consts) * (a + b) ** 2


def _sum_terms(terms, atoms, expo, consts):
    return sum(_term_values(t, atoms, expo, consts) for t in terms)


def _make_block(name: str, plain: list, square: Optional[tuple]) -> Block:
    """Block made of ``plain`` terms plus an optional squared-sum group ``(coef, multiple, symbol)``."""
    terms = list(plain)
    if square is None:
        return Block(name, terms)
    coef, mult, sym = square
    terms += _square_split(name, coef, mult, sym)

    def exact(atoms, expo, consts):
        return _sum_terms(plain, atoms, expo, consts) + _square_exact(atoms, expo, consts, coef, mult, sym)

    return Block(name, terms, exact)


def _power_terms(N: str, spec: list) -> list:
    """``N * atom^(c + s * symbol)`` for each ``(atom, c, s, symbol)``."""
    return [Term(f"{N}*{a}^{c:+g}{s:+g}{sym or ''}", N, (_F(a, c, s, sym),)) for a, c, s, sym in spec]


def level_blocks(level: int) -> tuple[list, list]:
    """Blocks and pointwise conditions for a hypothesis level.

    Conditions are ``(atom, symbol, bound_name)`` meaning
    ``atom^symbol <= bound * lambda_Q``.
    """
    LC = lambda c: Term(f"{c}*LamC", c, (_F("LamC", 1.0),))
    DB = Term("LamD1b", "1", (_F("LamD1b", 1.0),))
    M0 = Term("M0*bh0^2/lam", "M0", (_F("bh0", 2.0), _F("lam", -1.0)))
    conds = [("xi1", "alpha1", "A1"), ("bh1", "mu1", "A2")]
    if level >= 2:
        conds.append(("xi2", "alpha2", "A3"))
    if level == 1:
        b1 = _make_block("block1", [LC("2-nu"), M0] + _power_terms("N1", [("g1", 0, 1, "tau1")]), None)
        b2 = _make_block(
            "block2",
            [DB, LC("(2-nu)/2")] + _power_terms("N2", [("bh1", 2, -1, "mu1"), ("g1", 2, -1, "tau1")]),
            ("d/2", 1.0, "alpha1"),
        )
        return [b1, b2], conds
    if level == 2:
        b1 = _make_block(
            "block1", [LC("2-nu"), M0] + _power_terms("N1", [("g1", 0, 1, "tau1"), ("g2", 0, 1, "tau2")]), None
        )
        b2 = _make_block(
            "block2",
            [DB, LC("(2-nu)/2")]
            + _power_terms(
                "N2",
                [("beta2", 0, 1, "rho2"), ("bh1", 2, -1, "mu1"), ("bh2", 0, 1, "mu2"), ("g1", 2, -1, "tau1")],
            ),
            ("M1", 1.0, "alpha1"),
        )
        b3 = _make_block(
            "block3",
            [DB, LC("(2-nu)/4")]
            + _power_terms(
                "N3",
                [
                    ("xi2", 2, -1, "alpha2"),
                    ("beta2", 2, -1, "rho2"),
                    ("bh1", 2, -1, "mu1"),
                    ("bh2", 2, -1, "mu2"),
                    ("g1", 0, 1, "tau1"),
                    ("g2", 2, -1, "tau2"),
                ],
            ),
            ("d/4", 2.0, "alpha1"),
        )
        return [b1, b2, b3], conds
    if level == 3:
        b1 = _make_block(
            "block1",
            [LC("2-nu"), M0]
            + _power_terms("N1", [("g1", 0, 1, "tau1"), ("g2", 0, 1, "tau2"), ("g3", 0, 1, "tau3")]),
            None,
        )
        # the xi1 exponent in this block carries alpha2, as written in the source hypothesis
        b2 = _make_block(
            "block2",
            [DB, LC("(2-nu)/2")]
            + _power_terms(
                "N2",
                [
                    ("beta2", 0, 1, "rho2"),
                    ("beta3", 0, 1, "rho3"),
                    ("bh1", 2, -1, "mu1"),
                    ("bh2", 0, 1, "mu2"),
                    ("bh3", 0, 1, "mu3"),
                    ("g1", 2, -1, "tau1"),
                    ("g2", 0, 1, "tau2"),
                ],
            ),
            ("M1", 1.0, "alpha2"),
        )
        b3 = _make_block(
            "block3",
            [DB, LC("(2-nu)/4")]
            + _power_terms(
                "N3",
                [
                    ("xi2", 2, -1, "alpha2"),
                    ("xi3", 0, 1, "alpha3"),
                    ("beta2", 2, -1, "rho2"),
                    ("bh1", 2, -1, "mu1"),
                    ("bh2", 2, -1, "mu2"),
                    ("g1", 0, 1, "tau1"),
                    ("g2", 2, -1, "tau2"),
                ],
            ),
            ("M2", 2.0, "alpha1"),
        )
        b4 = _make_block(
            "block4",
            [DB, LC("(2-nu)/6")]
            + _power_terms(
                "N4",
                [
                    ("xi2", 2, -1, "alpha2"),
                    ("xi3", 2, -1, "alpha3"),
                    ("beta2", 0, 1, "rho2"),
                    ("beta3", 2, -1, "rho3"),
                    ("bh1", 2, -1, "mu1"),
                    ("bh2", 0, 1, "mu2"),
                    ("bh3", 2, -1, "mu3"),
                    ("g1", 2, -1, "tau1"),
                    ("g2", 2, -1, "tau2"),
                    ("g3", 2, -1, "tau3"),
                ],
            ),
            ("d/6", 3.0, "alpha1"),
        )
        return [b1, b2, b3, b4], conds
    raise HypothesisError(f"level must be 1, 2 or 3, got {level}")


EXPONENTS_BY_LEVEL = {
    1: ("alpha1", "mu1", "tau1"),
    2: ("alpha1", "mu1", "tau1", "alpha2", "rho2", "mu2", "tau2"),
    3: ("alpha1", "mu1", "tau1", "alpha2", "rho2", "mu2", "tau2", "alpha3", "rho3", "mu3", "tau3"),
}
FREE_N = {"block1": "N1", "block2": "N2", "block3": "N3", "block4": "N4"}
M_BOUNDS = {"M0": 2.0, "M1": 3.0, "M2": 4.0}  # M_i > d / divisor


def _base_consts(d: int, nu: float) -> dict:
    c = {
        "1": 1.0,
        "2-nu": 2.0 - nu,
        "(2-nu)/2": (2.0 - nu) / 2,
        "(2-nu)/4": (2.0 - nu) / 4,
        "(2-nu)/6": (2.0 - nu) / 6,
        "d/2": d / 2,
        "d/4": d / 4,
        "d/6": d / 6,
        "A1": 1.0,
    }
    for name, div in M_BOUNDS.items():
        c[name] = d / div * 1.001
    for n in FREE_N.values():
        c[n] = 1.0
    return c


def _refresh_derived(consts: dict):
    for coef in ("d/2", "d/4", "d/6", "M1", "M2"):
        for mult in (1.0, 2.0, 3.0):
            consts[f"2*{coef}*A1*{mult ** 2}"] = 2 * consts[coef] * consts["A1"] * mult**2
        consts[f"2*{coef}"] = 2 * consts[coef]


# ---------------------------------------------------------------------------
# exponent search


def _exponent_uses(blocks: list, conds: list, symbol: str) -> tuple[list, list]:
    uses = []
    for b in blocks:
        for t in b.terms:
            for f in t.factors:
                if f.symbol == symbol:
                    uses.append((b.name, t, f))
    cond = [c for c in conds if c[1] == symbol]
    return uses, cond


def _negative_exponent(block: Block, atoms: Atoms) -> float:
    F = -math.inf
    for t in block.terms:
        if t.signed():
            ft = atoms.fit(t.factors[0].atom)
            if ft.sign < 0 and math.isfinite(ft.exponent):
                F = max(F, ft.exponent)
    return F


def _choose_exponent(symbol, blocks, conds, atoms, expo, mode) -> float:
    """Best value of one free exponent; the search separates because every
    term carries at most one free exponent."""
    tol = atoms.sampling.tol
    uses, cond = _exponent_uses(blocks, conds, symbol)
    drivers = {b.name: _negative_exponent(b, atoms) for b in blocks}
    lam_e = atoms.fit("lam", lower=True).exponent
    if mode == "canonical" and symbol != "mu1":
        return 1.0
    cands = list(np.arange(0.0, 2.0 + 1e-12, atoms.sampling.exponent_step))
    crit = []
    for atom, _, _ in cond:
        ea = atoms.fit(atom).exponent
        if ea > 0 and math.isfinite(ea):
            crit.append(lam_e / ea - 1e-9)
    if mode == "grid":
        for bname, t, _ in uses:
            s0, e0, _ = _term_growth(t, atoms, {**expo, symbol: 0.0})
            s1, e1, _ = _term_growth(t, atoms, {**expo, symbol: 1.0})
            slope = e1 - e0
            if s0 == 0 or not (math.isfinite(e0) and math.isfinite(e1)) or slope == 0:
                continue
            for target in (drivers[bname] - 2 * tol, 0.0):
                if math.isfinite(target):
                    crit.append((target - e0) / slope)
    cands += [c for c in crit if 0.0 <= c <= 2.0]

    def slack(s):
        worst = math.inf
        for atom, _, _ in cond:
            ft = atoms.fit(atom)
            if ft.zero:
                continue
            worst = min(worst, lam_e + tol - s * ft.exponent)
        trial = {**expo, symbol: s}
        for bname, t, f in uses:
            sgn, e, _ = _term_growth(t, atoms, trial)
            if sgn == 0:
                continue
            worst = min(worst, max(tol - e, drivers[bname] - tol - e))
        return worst

    scored = [(slack(s), -i, s) for i, s in enumerate(cands)]
    feasible = [x for x in scored if x[0] >= 0]
    pick = max(feasible) if feasible else max(scored)
    return float(pick[2])


def _condition_constant(atoms: Atoms, atom: str, expo_val: float) -> tuple[float, bool, dict]:
    """Smallest sampled ``A`` with ``atom^s <= A lambda_Q``, padded, plus a tail verdict."""
    tol = atoms.sampling.tol
    if expo_val == 0:
        ratio = 1.0 / atoms["lam"]
    else:
        ratio = atoms[atom] ** expo_val / atoms["lam"]
    A = float(np.max(ratio))
    fa = atoms.fit(atom)
    ok = True
    info = {"atom": atom}
    if not fa.zero and expo_val != 0:
        e = expo_val * fa.exponent - atoms.fit("lam", lower=True).exponent
        info["exponent"] = e
        ok = e <= tol
        # extrapolate a slowly increasing ratio to its limit
        tail = ratio.max(axis=1)[atoms.tail_slice()]
        A = max(A, float(tail[-1]) * (1.0 + abs(e)))
    elif expo_val == 0:
        ok = atoms.fit("lam", lower=True).exponent >= -tol
    return max(A * 1.05, 1e-12) if A > 0 else 1.0, ok, info


def check_numeric(fld: CoefficientField, nu: float, level: int, sampling: ShellSampling = ShellSampling()) -> HypothesisReport:
    """Sampled feasibility search for the hypotheses of the given level.

    Includes the base hypotheses. Passing requires every block to be
    classified as bounded above; a block whose positive part outgrows its
    negative part yields ``fail`` with the offending term and a sample point.
    """
    sampling.validate()
    if not 0.0 <= nu < 2.0:
        raise HypothesisError(f"nu must lie in [0, 2), got {nu}")
    if level not in (0, 1, 2, 3):
        raise HypothesisError(f"level must be 0..3, got {level}")
    if fld.max_order < max(level, 1):
        raise HypothesisError(f"field provides derivatives up to order {fld.max_order}, level {level} needs {level}")
    atoms = Atoms(fld, max(level, 1), sampling)
    d = fld.d
    consts = _base_consts(d, nu)
    results: list[BlockResult] = []
    notes = ["free constants N_i are shared by all terms of their block"]

    # base hypotheses
    results.extend(_base_blocks(fld, atoms, nu, consts))

    expo: dict = {}
    if level >= 1:
        blocks, conds = level_blocks(level)
        for sym in EXPONENTS_BY_LEVEL[level]:
            expo[sym] = 1.0
        for sym in EXPONENTS_BY_LEVEL[level]:
            expo[sym] = _choose_exponent(sym, blocks, conds, atoms, expo, sampling.mode)
        for atom, sym, bound in conds:
            A, ok, info = _condition_constant(atoms, atom, expo[sym])
            consts[bound] = A
            results.append(
                BlockResult(
                    f"{atom}^{sym}<={bound}*lam",
                    PASS if ok else FAIL,
                    info.get("exponent", -math.inf),
                    0.0,
                    detail="pointwise condition" + ("" if ok else " violated: ratio grows"),
                )
            )
        _refresh_derived(consts)
        for b in blocks:
            results.append(classify_block(b, atoms, expo, consts, FREE_N.get(b.name)))
            _refresh_derived(consts)

    statuses = [r.status for r in results]
    status = FAIL if FAIL in statuses else INCONCLUSIVE if INCONCLUSIVE in statuses else PASS
    witness = None
    for r in results:
        if r.status != PASS:
            witness = {"block": r.name, "detail": r.detail, "x": r.witness_x, "term": r.dominant_term}
            break
    out_consts: dict = {"nu": nu}
    if status == PASS:
        out_consts.update(expo)
        for key in ("A1", "A2", "A3"):
            if key in consts and (level >= 2 or key != "A3") and level >= 1:
                out_consts[key] = consts[key]
        used_M = {1: ["M0"], 2: ["M0", "M1"], 3: ["M0", "M1", "M2"]}.get(level, ["M0"])
        for key in used_M:
            out_consts[key] = consts[key]
        for key in list(FREE_N.values())[: {0: 0, 1: 2, 2: 3, 3: 4}[level]]:
            out_consts[key] = consts[key]
    return HypothesisReport(
        LEVEL_NAMES[level],
        status,
        constants=out_consts,
        witness=witness,
        R=sampling.R,
        shells=sampling.shells,
        method=f"numeric-{sampling.mode}",
        blocks=[r.to_json() for r in results],
        notes=notes,
    )


def _base_blocks(fld: CoefficientField, atoms: Atoms, nu: float, consts: dict) -> list:
    """Ellipticity, finiteness of H, the Lyapunov bound for ``1 + |x|^2`` and the eigenvalue ratio."""
    pts = atoms.points.reshape(-1, fld.d)
    zero = (0,) * fld.d
    Q = fld.Q(pts, zero)
    b = fld.drift(pts, zero)
    trQ = np.trace(Q, axis1=1, axis2=2)
    bx = np.sum(b * pts, axis=1)
    w = 1.0 + np.sum(pts * pts, axis=1)
    LamC = atoms["LamC"].ravel()
    atoms.add("trQ", trQ)
    atoms.add("bx", bx)
    atoms.add("LamCw", LamC * w)
    r2 = np.sum(pts * pts, axis=1)
    Qxx = np.einsum("ni,nij,nj->n", pts, Q, pts) / np.where(r2 > 0, r2, 1.0)
    atoms.add("trQ_perp", trQ - Qxx)
    out = []

    lam_fit = atoms.fit("lam", lower=True)
    ok = float(atoms["lam"].min()) > 0 and lam_fit.exponent >= -atoms.sampling.tol
    out.append(BlockResult("ellipticity", PASS if ok else FAIL, lam_fit.exponent, 0.0,
                           detail="inf lambda_Q > 0" if ok else "lambda_Q decays or vanishes"))

    H_block = Block(
        "H",
        [
            Term("(2-nu)*LamC", "2-nu", (_F("LamC", 1.0),)),
            Term("d/2*bh0^2/lam", "d/2", (_F("bh0", 2.0), _F("lam", -1.0))),
        ],
    )
    out.append(classify_block(H_block, atoms, {}, consts, None))
    lyap_terms = [Term("2TrQ", "2", (_F("trQ", 1.0),)), Term("2<b,x>", "2", (_F("bx", 1.0),))]
    # canonical mode: a nonpositive potential is dropped (sufficient, and the
    # route taken by the exponent inequalities); grid mode lets it help
    if atoms.sampling.mode == "grid" or float(LamC.max()) > 0:
        lyap_terms.append(Term("nu*LamC*phi", "nu", (_F("LamCw", 1.0),)))
    lyap = Block("lyapunov", lyap_terms)
    out.append(classify_block(lyap, atoms, {}, {**consts, "2": 2.0, "nu": nu}, None))

    kap = atoms["LamQ"] / (atoms.w[:, None] * atoms["lam"])
    kfit = fit_tail(atoms.w, kap.max(axis=1), atoms.tail_slice(), atoms.sampling)
    ok = kfit.exponent <= atoms.sampling.tol
    out.append(BlockResult("kappa", PASS if ok else FAIL, kfit.exponent, 0.0,
                           detail=f"kappa >= {float(kap.max()):.4g}"))
    out.append(_eventually_nonpositive(
        Block("radial-drift", [Term("TrQ-<Qx,x>/|x|^2", "1", (_F("trQ_perp", 1.0),)),
                               Term("<b,x>", "1", (_F("bx", 1.0),))]),
        atoms, consts))
    return out


def _eventually_nonpositive(block: Block, atoms: Atoms, consts: dict) -> BlockResult:
    """Sign of a sum for large ``|x|``: the positive part must be outgrown by the negative part,
    or the sampled tail must already be nonpositive when the growth rates tie."""
    tol = atoms.sampling.tol
    pos, neg = [-math.inf], [-math.inf]
    for t in block.terms:
        s, e, _ = _term_growth(t, atoms, {})
        if s > 0:
            pos.append(e)
        elif s < 0:
            neg.append(e)
    E, F = max(pos), max(neg)
    res = BlockResult(block.name, PASS, E, F, detail="eventually nonpositive")
    if E == -math.inf or E < F - tol:
        return res
    prof = _block_profile(block, atoms, {}, consts)
    tail = prof[atoms.tail_slice()]
    if E > F + tol or np.any(tail > 1e-12 * (1 + np.abs(tail))):
        res.status = FAIL
        res.detail = "positive part is not outgrown by the drift"
        res.witness_x = atoms.points[int(np.argmax(prof)), 0].tolist()
    return res


def check_numeric_scan_nu(fld: CoefficientField, level: int, sampling: ShellSampling = ShellSampling(),
                          nus=(0.0, 0.5, 1.0, 1.5)) -> HypothesisReport:
    """First ``nu`` from ``nus`` for which the numeric check passes (else the last report)."""
    rep = None
    for nu in nus:
        rep = check_numeric(fld, nu, level, sampling)
        if rep.passed:
            return rep
    return rep


# ---------------------------------------------------------------------------
# L1 condition


def l1_integrand(fld: CoefficientField, nu: float, x: np.ndarray) -> np.ndarray:
    """``nu Lambda_C - div b + sum_ij D_ij q_ij`` at the points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = fld.d
    lamc = spectral_bounds(fld, x, order=0).Lambda_C
    div = np.zeros(x.shape[0])
    dq = np.zeros(x.shape[0])
    for i in range(d):
        ei = tuple(int(j == i) for j in range(d))
        div += fld.drift(x, ei)[:, i]
        for j in range(d):
            a = [0] * d
            a[i] += 1
            a[j] += 1
            dq += fld.Q(x, tuple(a))[:, i, j]
    return nu * lamc - div + dq


def check_L1_condition(fld: CoefficientField, nu: float, search: RadialSearchConfig = RadialSearchConfig(),
                       sampling: Optional[ShellSampling] = None) -> HypothesisReport:
    """Finiteness of ``K = sup (nu Lambda_C - div b + sum D_ij q_ij)``; on success ``(M, omega) = (1, K)``."""
    if not 0.0 <= nu < 2.0:
        raise HypothesisError(f"nu must lie in [0, 2), got {nu}")
    if fld.max_order < 2:
        raise HypothesisError("the L1 condition needs second derivatives of Q")
    if fld.radial is None and search.tail_certificate is None:
        raise UnsupportedFieldError("field has no radial metadata and no tail certificate was supplied")
    sampling = sampling or ShellSampling(R=search.R)
    atoms = Atoms(fld, 1, sampling)
    pts = atoms.points.reshape(-1, fld.d)
    atoms.add("l1", l1_integrand(fld, nu, pts))
    block = Block("L1", [Term("integrand", "1", (_F("l1", 1.0),))])
    res = classify_block(block, atoms, {}, {"1": 1.0}, None)

    n_dir = 2 if fld.d == 1 else search.n_angles

    def g(radii):
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        p = shell_points(fld.d, radii, n_dir)
        return l1_integrand(fld, nu, p.reshape(-1, fld.d)).reshape(p.shape[:2]).max(axis=1)

    r_star, K = maximize_radial(g, search.R, search.n_scan, search.xatol)
    constants = {"nu": nu}
    witness = None
    if res.status == PASS:
        constants.update({"K": K, "M": 1.0, "omega": K, "argmax_r": r_star})
    else:
        witness = {"block": "L1", "detail": res.detail, "x": res.witness_x}
    return HypothesisReport("L1", res.status, constants=constants, witness=witness, R=search.R,
                            shells=sampling.shells, method="numeric", blocks=[res.to_json()])


def sweep_params(seed: int, n: int, d: int = 1, m: int = 2) -> list[PolynomialFamilyParams]:
    """Random family parameters: exponents uniform on [0, 2], random SPD ``Q0``,
    positive definite ``C0`` and nonzero zero-diagonal ``B0``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k, p, r, g = rng.uniform(0.0, 2.0, size=4)
        G = rng.normal(size=(d, d))
        Q0 = G @ G.T + 0.5 * np.eye(d)
        H = rng.normal(size=(m, m))
        C0 = H @ H.T + 0.5 * np.eye(m)
        B0 = []
        for _ in range(d):
            Bi = rng.normal(size=(m, m))
            np.fill_diagonal(Bi, 0.0)
            B0.append(Bi.tolist())
        out.append(PolynomialFamilyParams(d=d, m=m, k=float(k), p=float(p), r=float(r), gamma=float(g),
                                          Q0=Q0.tolist(), B0=B0, C0=C0.tolist()))
    return out


__all__ = [
    "HypothesisReport",
    "HypothesisError",
    "ShellSampling",
    "check_family_closed_form",
    "check_numeric",
    "check_numeric_scan_nu",
    "check_L1_condition",
    "l1_integrand",
    "sweep_params",
    "level_blocks",
]
