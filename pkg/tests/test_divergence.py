from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bedroil.divergence import (
    GENERATOR_NAMES,
    NonDifferentiableGeneratorError,
    SupportError,
    f_divergence,
    make_generator,
    tv_distance,
)

SMOOTH = ("soft_tv", "kl", "chi2", "soft_chi2")


def random_pair(rng, n=6, alpha=0.5):
    return rng.dirichlet(np.full(n, alpha)), rng.dirichlet(np.full(n, alpha))


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_f_of_one_is_zero(name):
    assert make_generator(name)(1.0) == 0.0


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_convexity_on_random_triples(name):
    gen = make_generator(name)
    rng = np.random.default_rng(0)
    a, b, c = np.sort(rng.uniform(0, 10, size=(3, 1000)), axis=0)
    keep = (a < b) & (b < c)
    a, b, c = a[keep], b[keep], c[keep]
    t = (c - b) / (c - a)
    chord = t * gen(a) + (1 - t) * gen(c)
    assert np.all(gen(b) <= chord + 1e-9)


@pytest.mark.parametrize("name", SMOOTH)
def test_inverse_derivative_round_trip(name):
    gen = make_generator(name)
    x = np.linspace(0.05, 6.0, 500)
    if name == "soft_tv":
        x = np.linspace(-4.0, 6.0, 500)
        x = x[np.abs(gen.derivative(x)) < 0.5 - 1e-6]
    assert np.allclose(gen.inverse_derivative(gen.derivative(x)), x, atol=1e-8, rtol=0)


def test_soft_tv_values():
    gen = make_generator("soft_tv")
    assert gen.inverse_derivative(0.0) == 1.0
    assert gen(2.0) == pytest.approx(0.5 * np.log(np.cosh(1.0)), abs=1e-15)
    assert gen(2.0) == pytest.approx(0.21689, abs=1e-5)


def test_log_cosh_is_stable_for_large_arguments():
    gen = make_generator("soft_tv")
    assert np.isfinite(gen(1e4))
    assert gen(1e4) == pytest.approx(0.5 * (1e4 - 1 - np.log(2)))


def test_chi2_inverse():
    assert make_generator("chi2").inverse_derivative(0.5) == 1.5


def test_soft_chi2_branches_meet_at_one():
    gen = make_generator("soft_chi2")
    assert gen.derivative(1.0 - 1e-9) == pytest.approx(gen.derivative(1.0), abs=1e-8)
    assert gen.inverse_derivative(-1.0) == pytest.approx(np.exp(-1.0))
    assert gen.inverse_derivative(2.0) == pytest.approx(2.0)


def test_tv_has_no_inverse():
    with pytest.raises(NonDifferentiableGeneratorError, match="non-differentiable generator"):
        make_generator("tv").inverse_derivative(0.1)


def test_unknown_generator():
    with pytest.raises(ValueError, match="unknown generator"):
        make_generator("hellinger")


@pytest.mark.parametrize("name", SMOOTH)
def test_weight_is_clipped_to_cap(name):
    gen = make_generator(name, saturation_weight=50.0)
    z = np.linspace(-10, 100, 2001)
    w = gen.weight(z)
    assert np.all((w >= 0) & (w <= 50.0))
    assert np.all(np.diff(w) >= -1e-12)


def test_soft_tv_weight_saturates_outside_domain():
    gen = make_generator("soft_tv")
    assert gen.weight(0.5) == gen.saturation_weight
    assert gen.weight(0.7) == gen.saturation_weight
    assert gen.weight(-0.5) == 0.0


# ------------------------------------------------------------- divergences

@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_divergence_of_equal_distributions(name):
    p = np.random.default_rng(1).dirichlet(np.ones(5))
    assert abs(f_divergence(make_generator(name), p, p)) <= 1e-12


def test_tv_divergence_by_hand():
    assert f_divergence(make_generator("tv"), [1, 0], [0.5, 0.5]) == pytest.approx(0.5)


def test_kl_divergence_by_hand():
    p, q = np.array([0.5, 0.5]), np.array([0.25, 0.75])
    value = f_divergence(make_generator("kl"), p, q)
    assert value == pytest.approx(0.14384, abs=1e-5)
    assert value == pytest.approx(np.sum(p * np.log(p / q)), abs=1e-14)


def test_support_convention():
    assert f_divergence(make_generator("tv"), [0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5)
    assert f_divergence(make_generator("kl"), [1.0, 0.0], [1.0, 0.0]) == 0.0
    with pytest.raises(SupportError):
        f_divergence(make_generator("kl"), [0.5, 0.5], [1.0, 0.0])


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shapes differ"):
        tv_distance([1.0], [0.5, 0.5])


def test_tv_distance_examples():
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert tv_distance([1, 0], [0, 1]) == 1.0


def test_tv_distance_matches_tv_generator():
    rng = np.random.default_rng(2)
    gen = make_generator("tv")
    for _ in range(1000):
        p, q = random_pair(rng)
        assert abs(tv_distance(p, q) - f_divergence(gen, p, q)) <= 1e-12


# ------------------------------------------------------------- properties

def test_soft_tv_below_tv_pointwise():
    x = np.random.default_rng(3).uniform(0, 50, 100_000)
    assert np.all(make_generator("soft_tv")(x) <= make_generator("tv")(x))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_soft_tv_divergence_below_tv(seed, n):
    p, q = random_pair(np.random.default_rng(seed), n)
    assert f_divergence(make_generator("soft_tv"), p, q) <= tv_distance(p, q) + 1e-15


def test_monotonicity_of_divergence_in_generator():
    # log cosh t <= t^2 / 2, so soft_tv <= chi2 / 2 as well as soft_tv <= tv
    grid = np.linspace(0, 50, 10_000)
    soft, tv, chi2 = (make_generator(n) for n in ("soft_tv", "tv", "chi2"))
    assert np.all(soft(grid) <= tv(grid))
    assert np.all(soft(grid) <= chi2(grid) / 2 + 1e-15)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        p, q = random_pair(rng)
        assert f_divergence(soft, p, q) <= f_divergence(tv, p, q) + 1e-15
        assert f_divergence(soft, p, q) <= 0.5 * f_divergence(chi2, p, q) + 1e-15


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SMOOTH), st.floats(-0.45, 0.45))
def test_round_trip_property(name, y):
    gen = make_generator(name)
    x = gen.inverse_derivative(y)
    assert gen.derivative(x) == pytest.approx(y, abs=1e-8)
