import math

import numpy as np
import pytest

from conftest import family_params
from semigroup_lab.coeffs import PolynomialFamilyParams, heat_field, ornstein_uhlenbeck_field, polynomial_family
from semigroup_lab.hypotheses import (
    Atoms,
    Block,
    HypothesisError,
    ShellSampling,
    Term,
    check_family_closed_form,
    check_L1_condition,
    check_numeric,
    check_numeric_scan_nu,
    classify_block,
    fit_tail,
    l1_integrand,
    level_blocks,
    sweep_params,
)
from semigroup_lab.hypotheses import _F


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_closed_form_test_operator_passes(level):
    rep = check_family_closed_form(family_params(), level)
    assert rep.passed
    assert rep.level == ["base", "deriv1", "deriv2", "deriv3"][level]


def test_closed_form_fail_has_witness():
    rep = check_family_closed_form(family_params(k=2.0, p=0.5), 1)
    assert rep.status == "fail"
    assert "k<p+1" in rep.witness


def test_closed_form_gamma_condition():
    rep = check_family_closed_form(family_params(k=0.0, p=1.0, r=1.0, gamma=1.5), 0)
    assert rep.status == "fail" and "gamma" in rep.witness


def test_closed_form_mu1_interval_endpoints():
    # 2r > 1: mu1 in [0, min(2, 2k/(2r - 1))]
    rep = check_family_closed_form(family_params(k=0.5, p=1.0, r=1.0, gamma=2.1), 1)
    assert rep.constants["mu1_interval"] == [0.0, 1.0]
    assert rep.passed


def test_closed_form_rejects_bad_level():
    with pytest.raises(HypothesisError):
        check_family_closed_form(family_params(), 4)


def test_fit_tail_recovers_power_law():
    s = ShellSampling()
    w = 1 + (np.arange(1, 65) * 50 / 64) ** 2
    fit = fit_tail(w, 3.0 * w**1.5 + 0.2 * w**0.5, slice(48, 64), s)
    assert fit.exponent == pytest.approx(1.5, abs=1e-3)
    assert fit.sign == 1 and fit.consistent
    assert fit_tail(w, np.zeros_like(w), slice(48, 64), s).zero
    mixed = fit_tail(w, np.where(np.arange(64) % 2, 1.0, -1.0), slice(48, 64), s)
    assert not mixed.consistent


def _atoms():
    return Atoms(polynomial_family(family_params()), 1, ShellSampling())


def test_classify_block_pass_fail_tie():
    atoms = _atoms()
    # LamC = -w, lam = 1, xi1 = 0 for k = 0
    dominated = Block("b", [Term("pos", "1", (_F("LamQ", 1.0),)), Term("neg", "1", (_F("LamC", 1.0),))])
    assert classify_block(dominated, atoms, {}, {}, None).status == "pass"
    atoms.add("grow", atoms.w[:, None] ** 2 * np.ones(atoms.points.shape[:2]))
    losing = Block("b", [Term("pos", "1", (_F("grow", 1.0),)), Term("neg", "1", (_F("LamC", 1.0),))])
    res = classify_block(losing, atoms, {}, {}, None)
    assert res.status == "fail" and res.witness_x is not None
    atoms.add("lin", atoms.w[:, None] * np.ones(atoms.points.shape[:2]))
    tie = Block("b", [Term("pos", "N", (_F("lin", 1.0),)), Term("neg", "1", (_F("LamC", 1.0),))])
    consts = {"N": 5.0}
    res = classify_block(tie, atoms, {}, consts, "N")
    assert res.status == "pass" and consts["N"] <= 1.0


def test_level_blocks_grow_with_level():
    sizes = [len(level_blocks(level)[0]) for level in (1, 2, 3)]
    assert sizes[0] < sizes[1] < sizes[2]


@pytest.mark.parametrize("level", [1, 2, 3])
def test_numeric_test_operator_passes(level):
    rep = check_numeric(polynomial_family(family_params()), 1.0, level)
    assert rep.passed
    assert rep.R == 50 and rep.shells == 64
    assert rep.constants["M0"] > 0.5  # M0 > d / 2


def test_numeric_fail_names_block_and_point():
    rep = check_numeric(polynomial_family(family_params(k=2.0, p=0.5)), 1.0, 1)
    assert rep.status == "fail"
    assert rep.witness["block"] == "lyapunov"
    assert rep.witness["x"] is not None


def test_numeric_constant_coefficient_cases():
    assert check_numeric(ornstein_uhlenbeck_field(1, 2), 1.0, 1).passed
    assert check_numeric(heat_field(), 0.0, 1).passed


def test_numeric_report_is_deterministic():
    fld = polynomial_family(family_params(k=0.4, p=1.2, r=0.3, gamma=1.4))
    a = check_numeric(fld, 0.5, 2).to_json()
    b = check_numeric(fld, 0.5, 2).to_json()
    assert a == b


def test_numeric_json_shape():
    doc = check_numeric(polynomial_family(family_params()), 1.0, 1).to_json()
    assert {"level", "status", "constants", "witness", "R", "shells"} <= set(doc)
    assert doc["level"] == "deriv1" and doc["witness"] is None


def test_numeric_input_validation():
    fld = polynomial_family(family_params())
    with pytest.raises(HypothesisError):
        check_numeric(fld, 2.0, 1)
    with pytest.raises(HypothesisError):
        check_numeric(fld, 1.0, 5)
    with pytest.raises(HypothesisError):
        ShellSampling(mode="random").validate()


@pytest.mark.parametrize("level", [0, 1, 2, 3])
@pytest.mark.parametrize("nu", [0.0, 1.0])
def test_numeric_never_contradicts_closed_form(level, nu):
    for params in sweep_params(7, 100):
        closed = check_family_closed_form(params, level)
        numeric = check_numeric(polynomial_family(params), nu, level)
        assert not (numeric.passed and not closed.passed), params.to_json()


def test_grid_mode_certifies_a_superset():
    params = sweep_params(2024, 100)
    for p in params[:40]:
        canonical = check_numeric(polynomial_family(p), 1.0, 1)
        grid = check_numeric(polynomial_family(p), 1.0, 1, ShellSampling(mode="grid"))
        assert grid.passed or not canonical.passed


def test_scan_nu_returns_first_passing():
    rep = check_numeric_scan_nu(polynomial_family(family_params()), 1)
    assert rep.passed and rep.constants["nu"] == 0.0


def test_l1_constant_matches_radial_oracle():
    params = PolynomialFamilyParams(d=1, m=1, k=0, p=1, r=0, gamma=2, Q0=[[1]], B0=([[0]],), C0=[[1]])
    rep = check_L1_condition(polynomial_family(params), 1.0)
    r = np.linspace(0, 50, 200001)
    w = 1 + r**2
    scan = np.max(-(w**2) + w + 2 * r**2)
    assert rep.passed
    # -w^2 + 3w - 2 peaks at w = 3/2 with value 1/4
    assert rep.constants["K"] == pytest.approx(0.25, abs=1e-10)
    assert rep.constants["K"] >= scan
    assert rep.constants["M"] == 1.0 and rep.constants["omega"] == rep.constants["K"]


def test_l1_integrand_heat_is_zero():
    x = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_array_equal(l1_integrand(heat_field(), 0.0, x), 0.0)


def test_l1_fails_when_drift_divergence_wins():
    # gamma < p: -div b ~ w^p outgrows nu Lambda_C ~ -w^gamma
    rep = check_L1_condition(polynomial_family(family_params(p=1.0, gamma=0.5, r=0.0)), 1.0)
    assert rep.status == "fail"
    assert "K" not in rep.constants


def test_sweep_is_seeded():
    a = [p.to_json() for p in sweep_params(3, 5)]
    b = [p.to_json() for p in sweep_params(3, 5)]
    assert a == b
    assert all(0 <= p["k"] <= 2 for p in a)
