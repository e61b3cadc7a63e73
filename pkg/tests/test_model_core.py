import math

import numpy as np
import pytest

from app.exceptions import ModelError, SupercriticalModelError
from app.model_core import (
    ClaimDist,
    ExponentialClaims,
    asymptotic_value,
    boundary_integral,
    boundary_integral_quadrature,
    boundary_integral_slope,
    injection_region_value,
    injection_threshold,
    make_claim_dist,
    pre_claim_intensity,
    stationary_mean_intensity,
    survival_probability,
    value_bounds,
)
from app.schemas import ClaimDistSpec, ModelParams


def test_pre_claim_intensity_values(params):
    assert pre_claim_intensity(params, 2.0, 5.0) == pytest.approx(2.0)
    assert pre_claim_intensity(params, 2.8, 0.0) == pytest.approx(2.8)
    assert pre_claim_intensity(params, 4.0, math.log(2) / 2) == pytest.approx(3.0)


def test_pre_claim_intensity_never_below_b(params):
    t = np.linspace(0, 50, 1001)
    assert np.all(pre_claim_intensity(params, 25.0, t) >= params.b)


def test_pre_claim_intensity_rejects_bad_input(params):
    with pytest.raises(ModelError):
        pre_claim_intensity(params, 1.0, 1.0)
    with pytest.raises(ModelError):
        pre_claim_intensity(params, 3.0, -0.1)


def test_survival_probability(params):
    assert survival_probability(params, 2.0, 1.0) == pytest.approx(math.exp(-2.0))
    assert survival_probability(params, 3.0, 0.0) == 1.0
    expected = math.exp(-2 * 0.5 - 1.0 / 2.0 * (1 - math.exp(-1.0)))
    assert survival_probability(params, 3.0, 0.5) == pytest.approx(expected)
    with pytest.raises(ModelError):
        survival_probability(params, 3.0, -1.0)


def test_survival_decreasing_in_horizon(params):
    h = np.linspace(0, 5, 50)
    s = survival_probability(params, 2.8, h)
    assert np.all(np.diff(s) < 0)


def test_stationary_mean(params):
    assert stationary_mean_intensity(params) == pytest.approx(2.5)
    assert stationary_mean_intensity(params.with_param("eta", 0.0)) == pytest.approx(params.b)
    with pytest.raises(SupercriticalModelError):
        stationary_mean_intensity(params.with_param("eta", 2.0))


def test_injection_region_value():
    assert injection_region_value(0.8588, -0.2, 1.8) == pytest.approx(0.4988)
    assert injection_region_value(0.8588, -1.0, 1.8) == 0.0
    assert injection_region_value(0.0, -0.1, 1.8) == 0.0


def test_injection_threshold():
    assert injection_threshold(0.8588, 1.8) == pytest.approx(-0.47711, abs=1e-5)
    assert injection_threshold(0.0, 1.8) == 0.0


def test_value_bounds(params):
    assert value_bounds(-1.0, params) == (0.0, 10.0)
    assert value_bounds(2.0, params) == (2.0, 12.0)
    lo, hi = value_bounds(np.array([-1.0, 0.5]), params)
    np.testing.assert_allclose(hi - lo, 10.0)


def test_asymptotic_value():
    np.testing.assert_array_equal(asymptotic_value(np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5])


def test_boundary_integral_closed_form_examples():
    dist = ExponentialClaims(3.0)
    assert boundary_integral(dist, 0.0, 1.8) == 0.0
    expected = 0.8588 - 0.6 * (1 - math.exp(-3 * 0.8588 / 1.8))
    assert boundary_integral(dist, 0.8588, 1.8) == pytest.approx(expected, abs=1e-14)


def test_boundary_integral_matches_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v0 = rng.uniform(0.01, 3.0)
        beta = rng.uniform(0.5, 6.0)
        delta = rng.uniform(1.05, 4.0)
        dist = ExponentialClaims(beta)
        closed = boundary_integral(dist, v0, delta)
        quad = boundary_integral_quadrature(dist, v0, delta, n=1_000_000)
        assert abs(closed - quad) < 1e-9


def test_shifted_boundary_integral_matches_quadrature():
    dist = ExponentialClaims(3.0)
    for v0, shift in [(0.8588, 0.0), (0.5, 0.3), (1.2, 2.0)]:
        closed = boundary_integral(dist, v0, 1.8, shift=shift)
        quad = boundary_integral_quadrature(dist, v0, 1.8, n=1_000_000, shift=shift)
        assert abs(closed - quad) < 1e-9
    # exponencial sin memoria: escala por P(Z > s)
    assert boundary_integral(dist, 0.8, 1.8, shift=0.5) == pytest.approx(
        math.exp(-1.5) * boundary_integral(dist, 0.8, 1.8)
    )


def test_boundary_integral_slope_is_derivative():
    dist = ExponentialClaims(3.0)
    eps = 1e-6
    for shift in (0.0, 0.4):
        num = (boundary_integral(dist, 0.9 + eps, 1.8, shift) - boundary_integral(dist, 0.9 - eps, 1.8, shift)) / (2 * eps)
        assert boundary_integral_slope(dist, 0.9, 1.8, shift) == pytest.approx(num, rel=1e-6)
    assert boundary_integral_slope(dist, -1.0, 1.8) == 0.0


class _GenericExponential(ExponentialClaims):
    """Misma densidad, sin las formas cerradas."""

    def boundary_integral(self, v0, delta, shift=0.0):
        return None

    def cell_weights(self, dx, n):
        return ClaimDist.cell_weights(self, dx, n)


def test_cell_weights_closed_form_matches_gauss():
    dx, n = 5 / 80.5, 120
    w0, w1 = ExponentialClaims(3.0).cell_weights(dx, n)
    g0, g1 = _GenericExponential(3.0).cell_weights(dx, n)
    np.testing.assert_allclose(w0, g0, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(w1, g1, rtol=1e-10, atol=1e-14)
    # masa exacta de cada celda y del soporte cubierto
    edges = np.arange(n + 1) * dx
    np.testing.assert_allclose(w0 + w1, np.diff(1 - np.exp(-3 * edges)), rtol=1e-12)
    assert np.all(w0 > w1) and np.all(w1 > 0)


def test_boundary_integral_falls_back_to_quadrature():
    dist = _GenericExponential(3.0)
    exact = ExponentialClaims(3.0)
    assert boundary_integral(dist, 0.8, 1.8) == pytest.approx(boundary_integral(exact, 0.8, 1.8), abs=1e-8)
    out = boundary_integral(dist, np.array([0.2, 0.8]), 1.8, shift=np.array([0.0, 1.0]))
    expected = boundary_integral(exact, np.array([0.2, 0.8]), 1.8, shift=np.array([0.0, 1.0]))
    np.testing.assert_allclose(out, expected, atol=1e-8)


def test_claim_registry():
    dist = make_claim_dist(ClaimDistSpec(beta=2.0))
    assert dist.mean == pytest.approx(0.5)
    assert dist.density(0.0) == pytest.approx(2.0)
    assert dist.cdf(np.log(2) / 2) == pytest.approx(0.5)


def test_exponential_claims_rejects_bad_rate():
    with pytest.raises(ModelError):
        ExponentialClaims(0.0)


def test_with_param_maps_beta(params):
    p2 = params.with_param("beta", 5.0)
    assert p2.beta == 5.0 and p2.a == params.a
    with pytest.raises(ValueError):
        params.with_param("gamma", 1.0)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(delta=1.0)
    with pytest.raises(ValueError):
        ModelParams(rho=0.0)
