"""Formation controller pipeline: hand-worked examples and properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from niformation import controller, graph, lti
from niformation.controller import (NiGains, Prediction, SaturationLimits,
                                    adaptive_gains, baseline_control,
                                    enhanced_control, heading_from_motion,
                                    predict_master, prediction_path_tf,
                                    saturate, wrap_angle, yaw_consensus)

STAR = graph.build_topology(3, [(1, 2), (1, 3)], [1])
PAIR = graph.build_topology(2, [(1, 2)], [1])
KINDS3 = ("uav", "ugv", "ugv")


def star_gains(kc=-0.5, kr=-0.002):
    return NiGains(reference=(kr, kr), consensus=((kc, kc), (kc, kc)))


# ---------------------------------------------------------------- reference

def test_reference_agent_steers_toward_waypoint():
    # head at the origin, waypoint 50 cm ahead on x, gain -0.002:
    # command = -0.002 * (0 - 50) = +0.1 cm/s toward the waypoint
    top = graph.build_topology(1, [], [1])
    gains = NiGains(reference=(-0.002, -0.002), consensus=())
    u = baseline_control([[0.0, 0.0]], top, gains, np.zeros((0, 2)),
                         [50.0, 0.0], ("uav",))
    np.testing.assert_allclose(u, [[0.1, 0.0]])


def test_follower_steers_toward_its_slot():
    # follower 10 cm past the head with zero desired offset is pulled back
    gains = NiGains(reference=(0.0, 0.0), consensus=((-0.5, -0.5),))
    u = baseline_control([[0.0, 0.0], [10.0, 0.0]], PAIR, gains,
                         [[0.0, 0.0]], [0.0, 0.0], ("ugv", "ugv"))
    np.testing.assert_allclose(u[1], [-5.0, 0.0])
    np.testing.assert_allclose(u[0], [0.0, 0.0])


def test_full_pipeline_matches_hand_computation():
    positions = [[0.0, 0.0], [120.0, 30.0], [-80.0, 60.0]]
    offsets = [[100.0, 50.0], [-100.0, 50.0]]
    u = baseline_control(positions, STAR, star_gains(), offsets,
                         [50.0, 10.0], KINDS3)
    # shifted outputs: (-50,-10), (70,20), (-130,50)
    # edge errors + offsets: (-120,-30)+(100,50) = (-20,20);
    #                        (80,-60)+(-100,50) = (-20,-10)
    # gained: (10,-10), (10,5); reference row: (0.1, 0.02)
    # actuation: agent1 takes the reference row, followers take -edge
    np.testing.assert_allclose(u, [[0.1, 0.02], [-10.0, 10.0], [-10.0, -5.0]])


def test_settled_formation_produces_zero_commands():
    waypoint = np.array([37.0, -12.0])
    offsets = np.array([[100.0, 50.0], [-100.0, 50.0]])
    positions = np.vstack([waypoint, waypoint + offsets[0], waypoint + offsets[1]])
    u = baseline_control(positions, STAR, star_gains(), offsets, waypoint, KINDS3)
    np.testing.assert_allclose(u, np.zeros((3, 2)), atol=1e-12)


def test_zero_gains_give_zero_commands():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0), (0.0, 0.0)))
    u = baseline_control([[5.0, 1.0], [2.0, 2.0], [3.0, 3.0]], STAR, gains,
                         np.ones((2, 2)), [9.0, 9.0], KINDS3)
    np.testing.assert_allclose(u, np.zeros((3, 2)))


def test_gain_count_mismatch_is_rejected():
    with pytest.raises(ValueError, match="consensus gain pairs"):
        baseline_control(np.zeros((3, 2)), STAR,
                         NiGains(reference=(0.0, 0.0), consensus=((-0.5, -0.5),)),
                         np.zeros((2, 2)), [0.0, 0.0], KINDS3)


def test_position_shape_mismatch_is_rejected():
    with pytest.raises(ValueError, match="positions"):
        baseline_control(np.zeros((2, 2)), STAR, star_gains(),
                         np.zeros((2, 2)), [0.0, 0.0], KINDS3)


# --------------------------------------------------------------- prediction

def test_predict_master_is_velocity_times_horizon():
    p = predict_master([10.0, -20.0], 0.02)
    assert (p.dx, p.dy) == pytest.approx((0.2, -0.4))


def test_enhanced_minus_baseline_equals_gained_prediction():
    positions = [[0.0, 0.0], [120.0, 30.0], [-80.0, 60.0]]
    velocities = [[10.0, -20.0], [0.0, 0.0], [0.0, 0.0]]
    offsets = [[100.0, 50.0], [-100.0, 50.0]]
    base = baseline_control(positions, STAR, star_gains(), offsets,
                            [50.0, 10.0], KINDS3)
    enh = enhanced_control(positions, velocities, STAR, star_gains(), offsets,
                           [50.0, 10.0], KINDS3, dt=0.02,
                           prediction_horizon_steps=1)
    # each follower's command shifts by -(Kc * head displacement)
    np.testing.assert_allclose(enh[0], base[0])
    np.testing.assert_allclose(enh[1] - base[1], [0.1, -0.2])
    np.testing.assert_allclose(enh[2] - base[2], [0.1, -0.2])


def test_enhanced_prediction_scales_with_horizon():
    positions = [[0.0, 0.0], [50.0, 0.0]]
    velocities = [[30.0, 0.0], [0.0, 0.0]]
    gains = NiGains(reference=(0.0, 0.0), consensus=((-0.5, -0.5),))
    one = enhanced_control(positions, velocities, PAIR, gains, [[0.0, 0.0]],
                           [0.0, 0.0], ("ugv", "ugv"), dt=0.02,
                           prediction_horizon_steps=1)
    sixty = enhanced_control(positions, velocities, PAIR, gains, [[0.0, 0.0]],
                             [0.0, 0.0], ("ugv", "ugv"), dt=0.02,
                             prediction_horizon_steps=60)
    base = baseline_control(positions, PAIR, gains, [[0.0, 0.0]],
                            [0.0, 0.0], ("ugv", "ugv"))
    np.testing.assert_allclose(one[1] - base[1], [0.3, 0.0])
    np.testing.assert_allclose(sixty[1] - base[1], [18.0, 0.0])


def test_enhanced_with_zero_velocity_equals_baseline():
    positions = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]
    offsets = [[10.0, 0.0], [0.0, 10.0]]
    base = baseline_control(positions, STAR, star_gains(), offsets,
                            [0.0, 0.0], KINDS3)
    enh = enhanced_control(positions, np.zeros((3, 2)), STAR, star_gains(),
                           offsets, [0.0, 0.0], KINDS3, dt=0.02)
    np.testing.assert_allclose(enh, base)


# --------------------------------------------------------------- saturation

def test_commands_clip_to_per_kind_limits():
    gains = NiGains(reference=(-10.0, -10.0), consensus=((-10.0, -10.0), (-10.0, -10.0)))
    u = baseline_control([[0.0, 0.0], [500.0, 0.0], [0.0, -500.0]], STAR, gains,
                         np.zeros((2, 2)), [900.0, 0.0], ("uav", "ugv", "ugv"))
    assert abs(u[0][0]) == 200.0      # uav cap
    assert abs(u[1][0]) == 100.0      # ugv cap
    assert abs(u[2][1]) == 100.0


def test_saturation_is_idempotent():
    limits = SaturationLimits()
    raw = np.array([[312.0, -45.0], [-150.0, 99.0]])
    once = saturate(raw, ("uav", "ugv"), limits)
    np.testing.assert_allclose(saturate(once, ("uav", "ugv"), limits), once)


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError, match="kind"):
        saturate(np.zeros((1, 2)), ("boat",), SaturationLimits())


@given(vx=st.floats(-1e4, 1e4), vy=st.floats(-1e4, 1e4))
@settings(max_examples=50, deadline=None)
def test_saturated_commands_never_exceed_limits(vx, vy):
    out = saturate(np.array([[vx, vy]]), ("ugv",), SaturationLimits())
    assert np.all(np.abs(out) <= 100.0)


# ------------------------------------------------------------------- gains

def test_positive_gains_are_rejected():
    with pytest.raises(ValueError, match="nonpositive"):
        NiGains(reference=(0.1, 0.0), consensus=())
    with pytest.raises(ValueError, match="nonpositive"):
        NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.2),))


def test_adaptive_gain_solves_for_required_speed():
    base = NiGains(reference=(-0.5, -0.5), consensus=((-1.0, -1.0),))
    got = adaptive_gains([[50.0, 0.0]], 2.0, [[-50.0, 3.0]], base)
    # x: 25 cm/s needed over a 50 cm start error; y displacement is zero
    assert got.consensus[0][0] == pytest.approx(-0.5)
    assert got.consensus[0][1] == pytest.approx(-1.0)
    assert got.reference == (-0.5, -0.5)


def test_adaptive_gain_keeps_base_when_start_error_vanishes():
    base = NiGains(reference=(0.0, 0.0), consensus=((-1.0, -1.0),))
    got = adaptive_gains([[50.0, 50.0]], 2.0, [[0.0, -25.0]], base)
    assert got.consensus[0][0] == pytest.approx(-1.0)
    assert got.consensus[0][1] == pytest.approx(-1.0)


def test_adaptive_gains_reject_nonpositive_duration():
    base = NiGains(reference=(0.0, 0.0), consensus=((-1.0, -1.0),))
    with pytest.raises(ValueError):
        adaptive_gains([[50.0, 0.0]], 0.0, [[-50.0, 0.0]], base)


@given(d=st.floats(-100.0, 100.0), t=st.floats(0.1, 10.0),
       e0=st.floats(-200.0, 200.0))
@settings(max_examples=50, deadline=None)
def test_adaptive_gains_are_never_positive(d, t, e0):
    base = NiGains(reference=(0.0, 0.0), consensus=((-1.0, -1.0),))
    got = adaptive_gains([[d, 0.0]], t, [[e0, 0.0]], base)
    assert got.consensus[0][0] <= 0.0


# --------------------------------------------------------------------- yaw

def test_wrap_angle_range_and_fixed_points():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(np.pi / 4) == pytest.approx(np.pi / 4)
    assert wrap_angle(2 * np.pi + 0.1) == pytest.approx(0.1)
    assert wrap_angle(-0.1) == pytest.approx(-0.1)


def test_yaw_reference_agent_turns_toward_target():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0),),
                    yaw_reference=-0.066, yaw_consensus=(-0.02,))
    u = yaw_consensus([0.0, 0.0], [0.0, 0.0], PAIR, gains,
                      target_angle=np.pi / 2)
    assert u[0] == pytest.approx(-0.066 * (0.0 - np.pi / 2))
    assert u[1] == pytest.approx(0.0)


def test_yaw_follower_aligns_with_head():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0),),
                    yaw_reference=-0.066, yaw_consensus=(-0.02,))
    u = yaw_consensus([np.pi / 2, 0.0], [0.0, 0.0], PAIR, gains,
                      target_angle=np.pi / 2)
    # follower error pi/2, actuation sign flips: positive rate toward head
    assert u[1] == pytest.approx(0.02 * np.pi / 2)


def test_yaw_error_wraps_across_the_cut():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0),),
                    yaw_reference=-0.5, yaw_consensus=(-0.5,))
    # head at +175 deg, follower at -175 deg: the short way is +10 deg
    yaws = [np.deg2rad(175.0), np.deg2rad(-175.0)]
    u = yaw_consensus(yaws, [0.0, 0.0], PAIR, gains, target_angle=np.deg2rad(175.0))
    assert u[1] == pytest.approx(0.5 * np.deg2rad(-10.0))


def test_yaw_rate_commands_clip():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0),),
                    yaw_reference=-10.0, yaw_consensus=(-10.0,))
    u = yaw_consensus([0.0, np.pi], [0.0, 0.0], PAIR, gains, target_angle=np.pi)
    assert np.all(np.abs(u) <= 1.5)


def test_yaw_enhanced_adds_head_rate_lookahead():
    gains = NiGains(reference=(0.0, 0.0), consensus=((0.0, 0.0),),
                    yaw_reference=0.0, yaw_consensus=(-0.5,))
    base = yaw_consensus([0.3, 0.3], [0.2, 0.0], PAIR, gains, target_angle=0.0)
    enh = yaw_consensus([0.3, 0.3], [0.2, 0.0], PAIR, gains, target_angle=0.0,
                        dt=0.02, prediction_horizon_steps=1, enhanced=True)
    assert base[1] == pytest.approx(0.0)
    assert enh[1] == pytest.approx(0.5 * 0.2 * 0.02)


# ------------------------------------------------------------------ heading

def test_heading_from_motion():
    assert heading_from_motion([1.0, 1.0], [0.0, 0.0], 0.0) == pytest.approx(np.pi / 4)
    assert heading_from_motion([0.0, -1.0], [0.0, 0.0], 0.0) == pytest.approx(-np.pi / 2)
    assert heading_from_motion([5.0, 5.0], [5.0, 5.0], 1.234) == 1.234


# -------------------------------------------------------- prediction branch

def test_prediction_path_tf_is_scaled_derivative_of_plant():
    models = lti.load_model_library()
    plant = models["uav_velx"].transfer_function
    branch = prediction_path_tf(plant, 0.02, 1)
    for w in (0.1, 1.0, 1.9):
        assert lti.evaluate(branch, w) == pytest.approx(
            1j * w * 0.02 * lti.evaluate(plant, w))


def test_prediction_branch_composes_to_sni_with_its_plant():
    models = lti.load_model_library()
    plant = models["uav_velx"].transfer_function
    branch = prediction_path_tf(plant, 0.02, 1)
    assert lti.series_ni_composition(plant, branch) == lti.SNI
