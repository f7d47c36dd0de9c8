import math

import numpy as np
import pytest

from oracles import besov_reference
from semigroup_lab.grid import derivative_stack, make_grid, sample
from semigroup_lab.seminorms import (
    SeminormError,
    besov_seminorm,
    ck_norm,
    holder_norm,
    holder_seminorm,
    lp_norm,
    sobolev_norm,
    sup_norm,
    zygmund_seminorm,
)


def _f1(func, L=1.0, n=401):
    return sample(make_grid(1, L, n), lambda x: func(x[:, 0]), 1)


def test_zygmund_affine_is_zero():
    f = _f1(lambda x: 3 * x + 1, n=9)
    assert zygmund_seminorm(f, 0.5, margin=0).value == 0.0


def test_zygmund_abs_is_two():
    assert zygmund_seminorm(_f1(np.abs), 0.5).value == pytest.approx(2.0, rel=0.02)


def test_zygmund_bounded_by_window_times_second_derivative():
    w = 0.4
    f = _f1(np.sin, L=3.0, n=601)
    assert zygmund_seminorm(f, w).value <= w * 1.0 + 1e-10


def test_zygmund_window_too_small():
    with pytest.raises(SeminormError):
        zygmund_seminorm(_f1(np.sin), 0.001)


def test_holder_sqrt_on_unit_interval():
    # [0, 1] is the shifted box [-1/2, 1/2]
    f = sample(make_grid(1, 0.5, 1001), lambda x: np.sqrt(np.abs(x[:, 0] + 0.5)), 1)
    assert holder_seminorm(f, 0.5, margin=0).value == pytest.approx(1.0, rel=0.02)


def test_holder_2d_needs_seed_and_is_reproducible():
    g = make_grid(2, 2.0, 41)
    f = sample(g, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]), 1)
    with pytest.raises(SeminormError, match="seed"):
        holder_seminorm(f, 0.5)
    a = holder_seminorm(f, 0.5, seed=3, pair_samples=5000)
    b = holder_seminorm(f, 0.5, seed=3, pair_samples=5000)
    assert a.value == b.value and a.samples == b.samples
    with pytest.raises(SeminormError):
        holder_seminorm(f, 1.0, seed=0)


def test_ck_and_sup_norms():
    f = _f1(np.sin, L=2 * np.pi, n=2001)
    assert sup_norm(f).value == pytest.approx(1.0, abs=1e-5)
    est = ck_norm(f, 1)
    assert est.params["parts"][1] == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(SeminormError):
        ck_norm(f, 4)


def test_lp_and_sobolev_of_gaussian():
    f = _f1(lambda x: np.exp(-(x**2)), L=8.0, n=1601)
    assert lp_norm(f, 2, margin=0).value == pytest.approx((math.pi / 2) ** 0.25, rel=1e-8)
    assert lp_norm(f, math.inf).value == pytest.approx(1.0)
    # || f' ||_2^2 = int 4 x^2 e^{-2x^2} = sqrt(pi / 2)
    sob = sobolev_norm(f, 1, 2, margin=0)
    assert sob.params["parts"][1] == pytest.approx((math.pi / 2) ** 0.25, rel=1e-4)
    with pytest.raises(SeminormError):
        lp_norm(f, 0.5)


def test_besov_1d_gaussian_matches_quadrature():
    f = sample(make_grid(1, 10.0, 2001), lambda x: np.exp(-x[:, 0] ** 2), 1)
    est = besov_seminorm(f, 0.5, 2, window=2.0)
    ref = besov_reference(0.5, 1, est.params["h_min"], est.window)
    assert est.value == pytest.approx(ref, rel=0.05)


def test_besov_2d_gaussian_matches_quadrature():
    f = sample(make_grid(2, 6.0, 121), lambda x: np.exp(-np.sum(x**2, axis=1)), 1)
    est = besov_seminorm(f, 0.5, 2, window=1.5)
    ref = besov_reference(0.5, 2, est.params["h_min"], est.window)
    assert est.value == pytest.approx(ref, rel=0.05)


def test_besov_monotone_in_window():
    f = sample(make_grid(1, 10.0, 1001), lambda x: np.exp(-x[:, 0] ** 2), 1)
    vals = [besov_seminorm(f, 0.5, 2, window=w).value for w in (0.5, 1.0, 2.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_besov_translation_invariant_on_grid_shifts():
    g = make_grid(1, 10.0, 2001)
    f = sample(g, lambda x: np.exp(-x[:, 0] ** 2), 1)
    f2 = sample(g, lambda x: np.exp(-(x[:, 0] - 5 * g.h) ** 2), 1)
    a = besov_seminorm(f, 0.5, 2, window=2.0).value
    assert besov_seminorm(f2, 0.5, 2, window=2.0).value == pytest.approx(a, rel=1e-10)


@pytest.mark.parametrize("c", [-3.0, 0.25, 7.0])
def test_estimators_are_absolutely_homogeneous(c):
    f = sample(make_grid(1, 4.0, 201), lambda x: np.sin(x[:, 0]) + np.abs(x[:, 0]), 1)
    g2 = make_grid(2, 2.0, 41)
    f2 = sample(g2, lambda x: np.exp(-np.sum(x**2, axis=1)), 1)
    cases = [
        lambda u: sup_norm(u).value,
        lambda u: ck_norm(u, 2).value,
        lambda u: holder_seminorm(u, 0.5).value,
        lambda u: zygmund_seminorm(u, 0.5).value,
        lambda u: lp_norm(u, 3).value,
        lambda u: sobolev_norm(u, 1, 2).value,
        lambda u: besov_seminorm(u, 0.5, 2, window=1.0).value,
    ]
    for est in cases:
        assert est(c * f) == pytest.approx(abs(c) * est(f), rel=1e-12, abs=1e-12)
    assert holder_seminorm(c * f2, 0.5, seed=1).value == pytest.approx(abs(c) * holder_seminorm(f2, 0.5, seed=1).value,
                                                                      rel=1e-12)
    assert besov_seminorm(c * f2, 0.5, 2, window=0.5).value == pytest.approx(
        abs(c) * besov_seminorm(f2, 0.5, 2, window=0.5).value, rel=1e-12)


def test_estimators_on_derivative_values():
    f = _f1(lambda x: x**2, L=2.0)
    est = zygmund_seminorm(f, 0.5, values=derivative_stack(f, 1))
    assert est.value == pytest.approx(0.0, abs=1e-8)


def test_holder_norm_alpha_zero_uses_zygmund():
    f = _f1(np.abs)
    assert holder_norm(f, 0.0, window=0.5) == pytest.approx(sup_norm(f).value + zygmund_seminorm(f, 0.5).value)


def test_margin_validation():
    with pytest.raises(SeminormError):
        sup_norm(_f1(np.sin, n=11), margin=5)
