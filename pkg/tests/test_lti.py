"""Frequency-domain classification, certificates, and discretization.

Expected values come from three kinds of oracle: closed-form hand evaluation
(first-order lags, pure differentiator), coefficient ratios read straight off
the model library, and dense numerical integration of the continuous
state-space realization (for step responses).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal
from scipy.integrate import solve_ivp

from niformation import lti

LAG = lti.tf((1.0,), (1.0, 1.0), label="unit lag")           # 1/(s+1)
DIFF = lti.tf((1.0, 0.0), (1.0,), label="differentiator")    # s
VELOCITY_MODELS = ("ugv_velx", "ugv_vely", "uav_velx", "uav_vely")


@pytest.fixture(scope="module")
def models():
    return lti.load_model_library()


# ---------------------------------------------------------------- evaluation

def test_unit_lag_response_matches_hand_computation():
    # 1/(1+j) = (1-j)/2
    assert lti.evaluate(LAG, 1.0) == pytest.approx(0.5 - 0.5j)


def test_differentiator_response_is_pure_imaginary():
    assert lti.evaluate(DIFF, 2.0) == pytest.approx(2.0j)


def test_response_at_zero_equals_dc_gain(models):
    m = models["uav_velx"].transfer_function
    assert lti.evaluate(m, 0.0) == pytest.approx(lti.dc_gain(m))


def test_pole_on_axis_is_reported():
    osc = lti.tf((1.0,), (1.0, 0.0, 1.0))  # 1/(s^2+1), poles at +-j
    with pytest.raises(lti.PoleOnAxisError):
        lti.evaluate(osc, 1.0)


def test_negative_frequency_rejected():
    with pytest.raises(ValueError):
        lti.evaluate(LAG, -1.0)


def test_conjugate_symmetry_of_real_rational_response(models):
    m = models["ugv_vely"].transfer_function
    for w in (0.01, 0.5, 1.7):
        direct = (np.polyval(m.numerator, -1j * w)
                  / np.polyval(m.denominator, -1j * w))
        assert direct == pytest.approx(np.conj(lti.evaluate(m, w)))


# ------------------------------------------------------------------- indices

def test_unit_lag_index_is_twice_negated_imaginary_part():
    # Im P(j1) = -1/2, so the index is +1
    assert lti.sni_index(LAG, 1.0) == pytest.approx(1.0)


def test_differentiator_index_is_negative():
    assert lti.sni_index(DIFF, 1.0) == pytest.approx(-2.0)


def test_index_requires_positive_frequency():
    with pytest.raises(ValueError):
        lti.sni_index(LAG, 0.0)


# -------------------------------------------------------------------- grids

def test_default_grid_span():
    grid = lti.FrequencyGrid.default()
    assert len(grid) == 400
    assert grid.omegas[0] == pytest.approx(1e-3)
    assert grid.omegas[-1] == pytest.approx(2.0)


@pytest.mark.parametrize("omegas", [(), (0.0, 1.0), (-1.0, 1.0), (1.0, 1.0), (2.0, 1.0)])
def test_grid_validation_rejects_bad_inputs(omegas):
    with pytest.raises(ValueError):
        lti.FrequencyGrid(omegas)


def test_classification_propagates_pole_on_grid():
    osc = lti.tf((1.0,), (1.0, 0.0, 1.0))
    with pytest.raises(lti.PoleOnAxisError):
        lti.classify_ni(osc, lti.FrequencyGrid((0.5, 1.0, 1.5)))


# ----------------------------------------------------------- classification

def test_unit_lag_is_sni_on_default_grid():
    assert lti.classify_ni(LAG) == lti.SNI


def test_constant_gain_is_ni_but_not_sni():
    assert lti.classify_ni(lti.tf_constant(-0.7)) == lti.NI
    assert lti.classify_ni(lti.tf_constant(2.0)) == lti.NI


def test_nonminimum_phase_allpass_is_neither():
    # P = (s-1)/(s+1): Im P(jw) = 2w/(1+w^2) > 0, so the index is negative
    # at every positive frequency.
    allpass = lti.tf((1.0, -1.0), (1.0, 1.0))
    wide = lti.FrequencyGrid.logspace(1e-3, 1e4, 400)
    assert lti.classify_ni(allpass, wide) == lti.NEITHER


def test_velocity_models_classify_sni_on_default_grid(models):
    grid = lti.FrequencyGrid.default()
    # minima frozen from an independent sweep of the frequency response
    expected_min = {"ugv_velx": 0.094391, "ugv_vely": 0.142429,
                    "uav_velx": 0.062850, "uav_vely": 0.039261}
    for name in VELOCITY_MODELS:
        m = models[name].transfer_function
        assert lti.classify_ni(m, grid) == lti.SNI, name
        idx = lti.sni_index_grid(m, grid)
        assert idx.min() == pytest.approx(expected_min[name], abs=1e-5), name
        assert idx.min() > lti.DEFAULT_TOL


def test_velocity_models_lose_sni_above_the_certified_band(models):
    # Index sign flips bracket frozen from an independent root search; each
    # model drops out of the SNI class a little above the default grid edge.
    brackets = {"ugv_velx": (3.89, 3.90), "ugv_vely": (5.25, 5.26),
                "uav_velx": (8.56, 8.58), "uav_vely": (3.33, 3.34)}
    for name, (lo, hi) in brackets.items():
        m = models[name].transfer_function
        assert lti.sni_index(m, lo) > 0.0, name
        assert lti.sni_index(m, hi) < 0.0, name
        wide = lti.FrequencyGrid.logspace(1e-3, 10.0, 400)
        assert lti.classify_ni(m, wide) == lti.NEITHER, name


# ------------------------------------------------------------------ dc gain

def test_dc_gains_are_coefficient_ratios(models):
    for name in VELOCITY_MODELS:
        m = models[name].transfer_function
        assert lti.dc_gain(m) == pytest.approx(m.numerator[-1] / m.denominator[-1])
    assert lti.dc_gain(models["uav_velx"].transfer_function) == pytest.approx(28.58, abs=0.01)
    assert lti.dc_gain(lti.tf_constant(-0.7)) == pytest.approx(-0.7)
    assert lti.dc_gain(LAG) == pytest.approx(1.0)


def test_dc_gain_of_integrator_raises():
    with pytest.raises(lti.IntegratorError):
        lti.dc_gain(lti.tf((1.0,), (1.0, 0.0)))


# ------------------------------------------------------------- certificates

def test_velocity_model_with_shipped_gain_certifies_stable(models):
    cert = lti.certify_interconnection(models["uav_velx"].transfer_function,
                                       lti.tf_constant(-0.7))
    assert cert.stable
    assert cert.plant_class == lti.SNI
    assert cert.controller_class == lti.NI
    assert cert.dc_product == pytest.approx(-20.006, abs=0.01)
    assert cert.encirclements_of_plus_one == 0
    assert cert.loop_vanishes_at_infinity
    # a constant negative gain fails the sign-at-infinity side condition;
    # it is reported, not gating
    assert not cert.controller_nonnegative_at_infinity
    assert cert.reasons == ()


def test_all_library_models_certify_against_their_shipped_gains(models):
    for rec in models.values():
        cert = lti.certify_interconnection(rec.transfer_function,
                                           lti.tf_constant(rec.certification_gain))
        assert cert.stable, rec.name


def test_dc_product_at_or_above_one_fails_certificate():
    cert = lti.certify_interconnection(LAG, lti.tf_constant(2.0))
    assert not cert.stable
    assert not cert.dc_condition_met
    assert cert.dc_product == pytest.approx(2.0)
    assert any("dc gain product" in r for r in cert.reasons)


def test_dc_product_below_one_certifies_stable():
    # positive feedback of 1/(s+1) with +0.5 closes the loop at s = -0.5
    cert = lti.certify_interconnection(LAG, lti.tf_constant(0.5))
    assert cert.stable
    assert cert.dc_product == pytest.approx(0.5)


def test_two_sni_branches_are_an_acceptable_pair():
    cert = lti.certify_interconnection(LAG, lti.tf((1.0,), (1.0, 2.0)))
    assert cert.stable
    assert cert.plant_class == lti.SNI
    assert cert.controller_class == lti.SNI


def test_unclassifiable_plant_is_rejected():
    allpass = lti.tf((1.0, -1.0), (1.0, 1.0))
    with pytest.raises(lti.ClassificationError):
        lti.certify_interconnection(allpass, lti.tf_constant(-0.5),
                                    lti.FrequencyGrid.logspace(1e-3, 1e4, 200))


def test_two_plain_ni_branches_are_rejected():
    with pytest.raises(lti.ClassificationError):
        lti.certify_interconnection(lti.tf_constant(0.3), lti.tf_constant(0.2))


# -------------------------------------------------------------- composition

def test_additive_composition_of_velocity_model_and_rate_branch(models):
    # rate branch: tau*s*P with tau = one 50 Hz sample; composite equals
    # (1 + tau*s)*P and stays SNI on the default grid for every model
    tau = 0.02
    for name in VELOCITY_MODELS:
        m = models[name].transfer_function
        rate = lti.tf_mul(lti.tf((tau, 0.0), (1.0,)), m)
        assert lti.series_ni_composition(m, rate) == lti.SNI, name


def test_composition_with_zero_branch_is_identity(models):
    m = models["ugv_velx"].transfer_function
    assert lti.series_ni_composition(m, lti.tf_constant(0.0)) == lti.SNI


@given(a=st.floats(0.05, 50.0), b=st.floats(0.05, 50.0))
@settings(max_examples=25, deadline=None)
def test_two_first_order_lags_compose_to_sni(a, b):
    one = lti.tf((1.0,), (1.0, a))
    two = lti.tf((1.0,), (1.0, b))
    assert lti.series_ni_composition(one, two) == lti.SNI


# ------------------------------------------------------------ discretization

def test_constant_gain_discretizes_to_memoryless_map():
    plant = lti.discretize(lti.tf_constant(2.0), 0.02)
    assert plant.step(3.0) == pytest.approx(6.0)
    assert plant.step(-1.0) == pytest.approx(-2.0)


def test_unit_lag_step_response_matches_continuous_solution():
    plant = lti.discretize(LAG, 0.02)
    ys = [plant.step(1.0) for _ in range(51)]
    assert ys[50] == pytest.approx(1.0 - np.exp(-1.0), abs=0.01)


def test_improper_transfer_function_cannot_be_discretized():
    with pytest.raises(ValueError):
        lti.discretize(DIFF, 0.02)


def test_velocity_model_step_response_matches_dense_integration(models):
    # oracle: adaptive dense integration of the continuous realization,
    # sampled at the discrete instants
    m = models["ugv_velx"].transfer_function
    a, b, c, d = signal.tf2ss(m.numerator, m.denominator)

    def deriv(_t, x):
        return (a @ x.reshape(-1, 1) + b).ravel()

    tgrid = np.arange(0.0, 6.0 + 1e-12, 0.02)
    sol = solve_ivp(deriv, (0.0, 6.0), np.zeros(a.shape[0]), t_eval=tgrid,
                    rtol=1e-10, atol=1e-12, method="LSODA")
    y_cont = (c @ sol.y).ravel() + float(np.asarray(d).ravel()[0])

    plant = lti.discretize(m, 0.02)
    y_disc = np.array([plant.step(1.0) for _ in range(len(tgrid))])
    assert np.max(np.abs(y_disc - y_cont)) < 0.05


def test_discretization_preserves_dc_gain(models):
    for rec in models.values():
        dc = lti.dc_gain(rec.transfer_function)
        for dt in (0.01, 0.02, 0.05):
            got = lti.discretize(rec.transfer_function, dt).dc_gain()
            assert abs(got - dc) <= 1e-9 * abs(dc), (rec.name, dt)


def test_zero_input_from_rest_stays_at_zero(models):
    plant = lti.discretize(models["uav_vely"].transfer_function, 0.02)
    assert all(plant.step(0.0) == 0.0 for _ in range(100))


def test_noise_requires_rng_and_is_reproducible(models):
    m = models["ugv_velx"].transfer_function
    with pytest.raises(ValueError):
        lti.discretize(m, 0.02, noise_std=1.0)
    one = lti.discretize(m, 0.02, noise_std=1.0, rng=np.random.default_rng(7))
    two = lti.discretize(m, 0.02, noise_std=1.0, rng=np.random.default_rng(7))
    seq_one = [one.step(1.0) for _ in range(20)]
    seq_two = [two.step(1.0) for _ in range(20)]
    assert seq_one == seq_two


def test_reset_returns_to_rest(models):
    plant = lti.discretize(models["ugv_velx"].transfer_function, 0.02)
    for _ in range(10):
        plant.step(1.0)
    plant.reset()
    assert plant.step(0.0) == 0.0


# ------------------------------------------------------------------- library

def test_library_contents(models):
    assert set(models) == {"ugv_velx", "ugv_vely", "uav_velx", "uav_vely",
                           "ugv_yaw_rate"}
    assert models["ugv_velx"].kind == "ugv"
    assert models["uav_vely"].axis == "y"
    assert models["ugv_velx"].transfer_function.numerator[-1] == pytest.approx(54489.05)
    assert models["ugv_yaw_rate"].transfer_function.denominator == (0.3, 1.0)


def test_library_rejects_malformed_documents(tmp_path):
    bad = tmp_path / "empty.yaml"
    bad.write_text("models: {}\n")
    with pytest.raises(ValueError):
        lti.load_model_library(bad)
    bad.write_text("models:\n  broken:\n    numerator: [1.0]\n")
    with pytest.raises(ValueError, match="broken"):
        lti.load_model_library(bad)


# --------------------------------------------------------------- properties

@given(a=st.floats(0.05, 50.0))
@settings(max_examples=25, deadline=None)
def test_first_order_lags_are_sni(a):
    assert lti.classify_ni(lti.tf((1.0,), (1.0, a))) == lti.SNI


@given(k=st.floats(-5.0, 5.0))
@settings(max_examples=25, deadline=None)
def test_dc_gain_scales_linearly(k):
    scaled = lti.tf_mul(lti.tf_constant(k), LAG)
    assert lti.dc_gain(scaled) == pytest.approx(k * lti.dc_gain(LAG))


@given(w=st.floats(0.01, 100.0))
@settings(max_examples=50, deadline=None)
def test_index_definition_consistency(w):
    p = lti.evaluate(LAG, w)
    assert lti.sni_index(LAG, w) == pytest.approx(complex(0, 1) * (p - np.conj(p)))
