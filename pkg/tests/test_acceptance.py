"""Acceptance suite: one test per criterion, at the stated tolerances.

Run ``pytest tests/test_acceptance.py -v -rA`` to see the measured values
printed next to each PASSED/FAILED line.
"""
import json
import time

import numpy as np

from conftest import family_doc, family_params
from oracles import besov_reference, heat_gaussian, ou_mehler
from semigroup_lab import cli
from semigroup_lab.coeffs import heat_field, ornstein_uhlenbeck_field, polynomial_family
from semigroup_lab.grid import default_margin, make_grid, restrict_array, sample
from semigroup_lab.hypotheses import check_family_closed_form, check_numeric, sweep_params
from semigroup_lab.semigroup import EvolveConfig, evolve
from semigroup_lab.seminorms import (
    besov_seminorm,
    ck_norm,
    holder_seminorm,
    lp_norm,
    sobolev_norm,
    sup_norm,
    zygmund_seminorm,
)
from semigroup_lab.verify import (
    GridSpec,
    datum_from_spec,
    decay_rate_fit,
    domination_check,
    lp_checks,
    pointwise_check,
    resolvent_check,
    semigroup_property_check,
    truncation_monotonicity_check,
)

TEST_OPERATOR = polynomial_family(family_params())  # (k, p, r, gamma) = (0, 1, 0, 1), m = 2


def _inner_sup(a, g):
    return float(np.max(np.abs(restrict_array(a, g.d, default_margin(g)))))


def test_criterion_01_heat_kernel_oracle():
    start = time.perf_counter()
    g = make_grid(1, 8.0, 641)
    f = sample(g, lambda x: np.exp(-x[:, 0] ** 2), 1)
    u = evolve(heat_field(), f, EvolveConfig(dt=1e-4, t_final=0.05, scheme="imex"), hypothesis_report="oracle")
    err = _inner_sup(np.asarray(u.final.values)[0] - heat_gaussian(g.axis, 0.05), g)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: error {err:.3e} (limit {1e-3 * f.sup():.1e}), {elapsed:.2f} s")
    assert err <= 1e-3 * f.sup()
    assert elapsed <= 10.0


def test_criterion_02_ornstein_uhlenbeck_oracle():
    start = time.perf_counter()
    g = make_grid(1, 8.0, 641)
    f = sample(g, lambda x: np.exp(-x[:, 0] ** 2), 1)
    traj = evolve(ornstein_uhlenbeck_field(), f, EvolveConfig(dt=1e-4, t_final=0.5, snapshots=(0.1,)),
                  hypothesis_report="oracle")
    errs = {}
    for t in (0.1, 0.5):
        exact = ou_mehler(lambda y: np.exp(-(y**2)), g.axis, t)
        errs[t] = _inner_sup(np.asarray(traj.at(t).values)[0] - exact, g)
    elapsed = time.perf_counter() - start
    print(f"criterion 2: errors {errs}, {elapsed:.2f} s")
    assert max(errs.values()) <= 1e-3
    assert elapsed <= 30.0


def test_criterion_03_smoothing_rate():
    t_grid = list(np.geomspace(1e-3, 1e-1, 9))
    slopes = {}
    for name, fld in (("heat", heat_field()), ("family", TEST_OPERATOR)):
        plateau = datum_from_spec({"kind": "plateau", "half_width": 1.0, "eps": 0.005}, 1, fld.m)
        slopes[name, "01"] = decay_rate_fit(fld, plateau, 0, 1, t_grid, GridSpec(2, 1601, 2e-5)).rate
        smooth = datum_from_spec({"kind": "gaussian", "width": 2.0}, 1, fld.m)
        slopes[name, "11"] = decay_rate_fit(fld, smooth, 1, 1, t_grid, GridSpec(4, 321, 1e-4)).rate
    print("criterion 3: slopes " + ", ".join(f"{k[0]} ({k[1][0]},{k[1][1]}) {v:+.4f}" for k, v in slopes.items()))
    for (name, kl), rate in slopes.items():
        target = -0.5 if kl == "01" else 0.0
        assert abs(rate - target) <= 0.10, (name, kl, rate)


def test_criterion_04_pointwise_domination():
    gs = GridSpec(4, 321, 1e-4)
    excess = []
    for seed in range(5):
        f = datum_from_spec({"kind": "random", "seed": seed}, 1, 2)
        rec = domination_check(TEST_OPERATOR, 1.0, f, [0.01, 0.05, 0.1], gs)
        excess.append(rec.fitted["max_excess"] - rec.fitted["tol"])
        assert rec.passed, (seed, rec.fitted)
    print(f"criterion 4: max (excess - tol) over seeds {max(excess):.3e} (must be <= 0)")
    assert max(excess) <= 0


def test_criterion_05_pointwise_constant_stability():
    gs = GridSpec(4, 321, 1e-4)
    f = datum_from_spec({"kind": "random", "seed": 0, "offset": 1.0}, 1, 2)
    t_list = [1e-3, 3e-3, 1e-2, 3e-2, 0.1]
    spreads = {}
    for k, l in ((0, 1), (0, 2), (1, 2)):
        rec = pointwise_check(TEST_OPERATOR, 1.0, f, k, l, t_list, gs)
        spreads[k, l] = rec.fitted["spread"]
        assert rec.passed, ((k, l), rec.fitted, rec.notes)
    print(f"criterion 5: spreads (max/min of c over n 321->641 and dt halving) {spreads}")
    assert max(spreads.values()) <= 2.0


def test_criterion_06_resolvent_residual_and_identity():
    vals = {}
    cases = (("heat", heat_field(), 0.0, GridSpec(8, 321, 1e-3)),
             ("family", TEST_OPERATOR, 1.0, GridSpec(4, 321, 1e-3)))
    for name, fld, nu, gs in cases:
        f = datum_from_spec({"kind": "gaussian"}, 1, fld.m)
        rec = resolvent_check(fld, nu, f, gs, shift=5.0, identity_shifts=(4.0, 8.0))
        vals[name] = (rec.fitted["residual"], rec.fitted["identity_deviation"])
        assert rec.fitted["residual"] <= 1e-2 and rec.fitted["identity_deviation"] <= 5e-2, (name, rec.fitted)
    print(f"criterion 6: (relative residual, identity deviation) {vals}")


def test_criterion_07_hypothesis_certification(tmp_path):
    mismatches = []
    for i, params in enumerate(sweep_params(2024, 100)):
        fld = polynomial_family(params)
        for level in (1, 2, 3):
            closed = check_family_closed_form(params, level).passed
            numeric = check_numeric(fld, 1.0, level).passed
            if closed != numeric:
                mismatches.append((i, level))
    codes = {}
    for name, doc in (("pass", family_doc(0, 1, 0, 1)), ("fail", family_doc(2, 0.5, 0, 1))):
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps({"coefficients": doc, "levels": [1], "method": "both", "nu": 1.0}))
        codes[name] = cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / name)])
    print(f"criterion 7: {len(mismatches)} disagreements in 300 (draw, level) pairs; exit codes {codes}")
    assert not mismatches
    assert codes == {"pass": 0, "fail": 1}


def test_criterion_08_seminorm_estimators():
    affine = sample(make_grid(1, 1.0, 9), lambda x: 3 * x[:, 0] + 1, 1)
    z_aff = zygmund_seminorm(affine, 0.5, margin=0).value
    absx = sample(make_grid(1, 1.0, 401), lambda x: np.abs(x[:, 0]), 1)
    z_abs = zygmund_seminorm(absx, 0.5).value
    sqrt = sample(make_grid(1, 0.5, 1001), lambda x: np.sqrt(np.abs(x[:, 0] + 0.5)), 1)
    h_sqrt = holder_seminorm(sqrt, 0.5, margin=0).value
    gauss = sample(make_grid(1, 10.0, 2001), lambda x: np.exp(-x[:, 0] ** 2), 1)
    est = besov_seminorm(gauss, 0.5, 2, window=2.0)
    ref = besov_reference(0.5, 1, est.params["h_min"], est.window)
    print(f"criterion 8: zygmund(affine)={z_aff}, zygmund(|x|)={z_abs:.5f}, holder(sqrt)={h_sqrt:.5f}, "
          f"besov rel. error {est.value / ref - 1:+.2e}")
    assert z_aff == 0.0
    assert abs(z_abs - 2.0) <= 0.02 * 2.0
    assert abs(h_sqrt - 1.0) <= 0.02
    assert abs(est.value / ref - 1) <= 0.05

    f = sample(make_grid(1, 4.0, 201), lambda x: np.sin(x[:, 0]) + np.abs(x[:, 0]), 1)
    estimators = [
        lambda u: sup_norm(u).value,
        lambda u: ck_norm(u, 2).value,
        lambda u: holder_seminorm(u, 0.5).value,
        lambda u: zygmund_seminorm(u, 0.5).value,
        lambda u: lp_norm(u, 2).value,
        lambda u: sobolev_norm(u, 1, 2).value,
        lambda u: besov_seminorm(u, 0.5, 2, window=1.0).value,
    ]
    worst = 0.0
    for c in (-2.5, 0.3, 4.0):
        for e in estimators:
            base = e(f)
            worst = max(worst, abs(e(c * f) - abs(c) * base) / max(abs(c) * base, 1e-300))
    print(f"criterion 8: worst relative homogeneity defect {worst:.2e}")
    assert worst <= 1e-12


def test_criterion_09_lp_flow():
    # gamma = 1 > max{p, k - 1} = 0.5
    fld = polynomial_family(family_params(k=0.0, p=0.5, r=0.0, gamma=1.0))
    f = datum_from_spec({"kind": "gaussian"}, 1, 2)
    rec = lp_checks(fld, 1.0, f, 2.0, [0.01, 0.05, 0.1], 0, 1, GridSpec(4, 321, 1e-4))
    slack = [r["rhs"] - r["lhs"] for r in rec.rows]
    print(f"criterion 9: bound slack {min(slack):.3e}, rate H~_2 + K/2 = {rec.fitted['rate']:.4f}, "
          f"c_cont {rec.fitted['c_cont']} (Taylor {rec.fitted['taylor_reference']:.4f})")
    assert all(r["lhs"] <= r["rhs"] for r in rec.rows)
    assert rec.fitted["spread_cont"] <= 2.0
    assert rec.passed


def test_criterion_10_semigroup_law_and_truncation():
    gauss = datum_from_spec({"kind": "gaussian"}, 1, 1)
    laws = {}
    for name, fld in (("heat", heat_field()), ("ou", ornstein_uhlenbeck_field())):
        rec = semigroup_property_check(fld, gauss, 0.05, 0.05, GridSpec(8, 641, 1e-4))
        laws[name] = (rec.fitted["deviation"], rec.fitted["error_estimate"])
        assert rec.passed, (name, rec.fitted)
    one = lambda x: np.ones(x.shape[0])
    incs = {}
    for name, fld, nu in (("heat", heat_field(), 0.0), ("family", TEST_OPERATOR, 1.0)):
        rec = truncation_monotonicity_check(fld, nu, one, 1.0, [4, 6, 8], 0.05, 1e-3, slack=1e-8)
        incs[name] = rec.fitted["min_increments"][1:]
        assert rec.passed, (name, rec.fitted)
    print(f"criterion 10: (deviation, error estimate) {laws}; min increments over L=4,6,8 {incs}")
    assert all(min(v) >= -1e-8 for v in incs.values())
