import logging
import math

import numpy as np
import pytest

from conftest import family_params
from oracles import heat_gaussian, ou_mehler
from semigroup_lab.coeffs import constant_field, growth_constants, heat_field, ornstein_uhlenbeck_field, polynomial_family
from semigroup_lab.grid import GridError, Field, apply_operator, default_margin, make_grid, restrict_array, sample
from semigroup_lab.semigroup import (
    BlowUp,
    CFLViolation,
    EvolveConfig,
    QuadratureConfig,
    evolve,
    evolve_scalar_comparison,
    laplace_nodes,
    mild_solution,
    resolvent,
    resolvent_direct,
    truncation_study,
)


def gaussian(x):
    return np.exp(-x[:, 0] ** 2)


def _inner_err(u, exact):
    g = u.grid
    mg = default_margin(g)
    return float(np.max(np.abs(restrict_array(np.asarray(u.values)[0] - exact, g.d, mg))))


def test_heat_matches_gaussian_oracle():
    g = make_grid(1, 8.0, 641)
    f = sample(g, gaussian, 1)
    traj = evolve(heat_field(), f, EvolveConfig(dt=1e-4, t_final=0.05), hypothesis_report="test")
    assert _inner_err(traj.final, heat_gaussian(g.axis, 0.05)) <= 1e-3 * f.sup()


def test_heat_time_refinement_is_first_order():
    g = make_grid(1, 6.0, 1201)
    f = sample(g, gaussian, 1)
    errs = []
    for dt in (2e-3, 1e-3):
        u = evolve(heat_field(), f, EvolveConfig(dt=dt, t_final=0.1), hypothesis_report="test").final
        errs.append(_inner_err(u, heat_gaussian(g.axis, 0.1)))
    assert errs[0] / errs[1] >= 1.8


@pytest.mark.parametrize("t", [0.1, 0.5])
def test_ou_matches_mehler(t):
    g = make_grid(1, 8.0, 641)
    f = sample(g, lambda x: np.cos(x[:, 0]) * np.exp(-x[:, 0] ** 2 / 4), 1)
    u = evolve(ornstein_uhlenbeck_field(), f, EvolveConfig(dt=1e-4, t_final=t), hypothesis_report="test").final
    exact = ou_mehler(lambda y: np.cos(y) * np.exp(-y**2 / 4), g.axis, t)
    assert _inner_err(u, exact) <= 1e-3


def test_snapshots_are_hit_exactly():
    g = make_grid(1, 4.0, 81)
    f = sample(g, gaussian, 1)
    traj = evolve(heat_field(), f, EvolveConfig(dt=1e-2, t_final=0.1, snapshots=(0.0123, 0.05)),
                  hypothesis_report="test")
    assert traj.times == [0.0, 0.0123, 0.05, 0.1]
    assert traj.at(0.0123).grid == g
    with pytest.raises(KeyError):
        traj.at(0.02)


def test_zero_time_is_identity():
    g = make_grid(1, 4.0, 81)
    f = sample(g, gaussian, 1)
    traj = evolve(heat_field(), f, EvolveConfig(dt=1e-2, t_final=0.0), hypothesis_report="test")
    np.testing.assert_array_equal(traj.final.values, f.values)


def test_explicit_scheme_cfl_and_agreement():
    g = make_grid(1, 4.0, 161)
    f = sample(g, gaussian, 1)
    with pytest.raises(CFLViolation) as info:
        evolve(heat_field(), f, EvolveConfig(dt=1e-2, t_final=0.1, scheme="explicit"), hypothesis_report="test")
    assert info.value.step == 0
    ex = evolve(heat_field(), f, EvolveConfig(dt=2e-4, t_final=0.05, scheme="explicit"), hypothesis_report="t").final
    im = evolve(heat_field(), f, EvolveConfig(dt=2e-4, t_final=0.05), hypothesis_report="t").final
    assert np.max(np.abs(ex.values - im.values)) < 1e-3


def test_blow_up_guard_reports_step():
    fld = constant_field([[1.0]], C=[[40.0]])
    f = sample(make_grid(1, 4.0, 81), gaussian, 1)
    with pytest.raises(BlowUp) as info:
        evolve(fld, f, EvolveConfig(dt=1e-2, t_final=1.0), hypothesis_report="test")
    assert info.value.step is not None and info.value.step > 0


def test_component_mismatch():
    f = sample(make_grid(1, 4.0, 81), gaussian, 1)
    with pytest.raises(GridError):
        evolve(polynomial_family(family_params()), f, EvolveConfig(dt=1e-3, t_final=0.01))


def test_missing_report_is_logged(caplog):
    caplog.set_level(logging.WARNING, logger="semigroup_lab.semigroup")
    f = sample(make_grid(1, 4.0, 81), gaussian, 1)
    traj = evolve(heat_field(), f, EvolveConfig(dt=1e-2, t_final=0.02))
    assert traj.diagnostics["hypotheses"] == "absent"
    assert "no hypothesis report" in caplog.text


def test_comparison_semigroup_preserves_positivity():
    fld = polynomial_family(family_params())
    g = make_grid(1, 4.0, 161)
    f = sample(g, lambda x: (np.abs(x[:, 0]) < 1).astype(float), 1)
    traj = evolve_scalar_comparison(fld, 1.0, f, EvolveConfig(dt=1e-3, t_final=0.1, snapshots=(0.05,)))
    for u in traj.fields:
        assert np.min(u.values) >= 0.0
    with pytest.raises(GridError):
        evolve_scalar_comparison(fld, 1.0, sample(g, lambda x: np.ones((x.shape[0], 2)), 2),
                                 EvolveConfig(dt=1e-3, t_final=0.1))


def test_laplace_nodes_integrate_exponential():
    nodes, weights = laplace_nodes(30.0, 24, 6)
    assert np.sum(weights * np.exp(-nodes)) == pytest.approx(1 - math.exp(-30), rel=1e-12)
    # the graded panels keep the sqrt(s) endpoint singularity at about 5e-6
    assert np.sum(weights * np.sqrt(nodes) * np.exp(-nodes)) == pytest.approx(math.sqrt(math.pi) / 2, rel=2e-5)


@pytest.mark.parametrize("fld", [heat_field(), polynomial_family(family_params())], ids=["heat", "family"])
def test_resolvent_agrees_with_direct_solve(fld):
    g = make_grid(1, 6.0, 241)
    f = sample(g, lambda x: np.repeat(np.exp(-x[:, :1] ** 2), fld.m, axis=1), fld.m)
    gc = growth_constants(fld, 1.0 if fld.m > 1 else 0.0)
    lam = gc.H_nu + 5
    u = resolvent(fld, f, lam, gc.H_nu, dt=1e-3)
    ref = resolvent_direct(fld, f, lam)
    mg = default_margin(g)
    assert u.meta["tail_bound"] < 1e-8 and not u.meta["tail_warning"]
    assert np.max(np.abs(restrict_array(u.values - ref.values, 1, mg))) <= 2e-3 * f.sup()
    res = lam * ref.values - apply_operator(fld, ref).values - f.values
    assert np.max(np.abs(restrict_array(res, 1, mg))) <= 1e-2 * f.sup()


def test_resolvent_requires_lambda_above_growth_bound():
    f = sample(make_grid(1, 4.0, 81), gaussian, 1)
    with pytest.raises(ValueError):
        resolvent(heat_field(), f, 0.0, 0.0)
    with pytest.raises(ValueError):
        QuadratureConfig(s_max=-1.0).horizon(1.0, 0.0)


def test_mild_solution_constant_source():
    g = make_grid(1, 6.0, 241)
    f = Field(g, np.zeros((1, 241)))
    c = 0.7
    traj = mild_solution(heat_field(), f, lambda t: np.full((1, 241), c), 0.2, 1e-3, snapshots=(0.1,))
    mg = default_margin(g)
    core = restrict_array(np.asarray(traj.final.values), 1, 3 * mg)
    np.testing.assert_allclose(core, c * 0.2, atol=1e-6)
    assert traj.diagnostics["duhamel_gap"] < 1e-3
    with pytest.raises(ValueError):
        mild_solution(heat_field(), f, lambda t: np.zeros((1, 241)), 0.2, 1e-3, duhamel_nodes=4)


def test_truncation_study_monotone_and_converging():
    fld = polynomial_family(family_params())
    rows = truncation_study(fld, lambda x: np.exp(-x[:, 0] ** 2), 0.2, [2.0, 3.0, 4.0], 0.05, 1e-3, nu=1.0)
    assert math.isnan(rows[0].deviation)
    assert all(r.min_increment >= -1e-12 for r in rows[1:])
    assert rows[2].deviation <= rows[1].deviation
    with pytest.raises(ValueError):
        truncation_study(fld, gaussian, 0.1, [3.0, 2.0], 0.05, 1e-3, nu=1.0)
