"""Formation schedules and transition convergence semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from niformation import formation
from niformation.formation import (CONVERGED, IN_PROGRESS, TIMED_OUT,
                                   FormationPhase, FormationSpec,
                                   TransitionState, check_convergence,
                                   transition_velocities)


def two_phase_spec():
    return FormationSpec(phases=(
        FormationPhase(0, ((100.0, 50.0), (-100.0, 50.0))),
        FormationPhase(1, ((50.0, 50.0), (-50.0, 50.0))),
    ))


def simple_transition(duration=2.0):
    return TransitionState(
        start_time=10.0, duration=duration, agents=(2, 3),
        start_positions=[[100.0, 150.0], [-100.0, 150.0]],
        dis=[[-50.0, 0.0], [50.0, 0.0]])


# ------------------------------------------------------------------- phases

def test_phase_selection_follows_completed_waypoints():
    spec = two_phase_spec()
    assert spec.phase_for(0) == ((100.0, 50.0), (-100.0, 50.0))
    assert spec.phase_for(1) == ((50.0, 50.0), (-50.0, 50.0))
    assert spec.phase_for(5) == ((50.0, 50.0), (-50.0, 50.0))
    assert spec.phase_index(0) == 0
    assert spec.phase_index(3) == 1


def test_avoidance_override_beats_the_schedule():
    spec = two_phase_spec()
    override = ((35.7, -100.0), (-35.7, -100.0))
    assert spec.phase_for(1, avoidance_offsets=override) == override


@pytest.mark.parametrize("phases, match", [
    ((), "at least one phase"),
    ((FormationPhase(1, ((0.0, 0.0),)),), "zero completed"),
    ((FormationPhase(0, ((0.0, 0.0),)), FormationPhase(0, ((1.0, 1.0),))),
     "strictly increase"),
    ((FormationPhase(0, ((0.0, 0.0),)), FormationPhase(1, ((1.0, 1.0), (2.0, 2.0)))),
     "same edge count"),
])
def test_invalid_schedules_are_rejected(phases, match):
    with pytest.raises(ValueError, match=match):
        FormationSpec(phases=phases)


def test_phase_validation():
    with pytest.raises(ValueError):
        FormationPhase(-1, ((0.0, 0.0),))
    with pytest.raises(ValueError):
        FormationPhase(0, ((0.0, 0.0),), transition_duration=0.0)


# -------------------------------------------------------------- transitions

def test_transition_velocities_are_displacement_over_time():
    vel = transition_velocities(simple_transition())
    np.testing.assert_allclose(vel, [[-25.0, 0.0], [25.0, 0.0]])


def test_transition_destination():
    tr = simple_transition()
    np.testing.assert_allclose(tr.destination, [[50.0, 150.0], [-50.0, 150.0]])
    assert tr.deadline == pytest.approx(12.0)


def test_transition_validation():
    with pytest.raises(ValueError):
        TransitionState(0.0, 0.0, (2,), [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(ValueError):
        TransitionState(0.0, 2.0, (2, 3), [[0.0, 0.0]], [[1.0, 1.0]])


def test_agents_with_zero_displacement_do_not_participate():
    tr = TransitionState(0.0, 2.0, (2, 3), np.zeros((2, 2)),
                         [[0.0, 0.0], [10.0, 0.0]])
    assert tr.participating() == [1]


# -------------------------------------------------------------- convergence

def test_convergence_requires_entering_the_band():
    tr = simple_transition()
    assert check_convergence(tr, [[90.0, 150.0], [-90.0, 150.0]], 10.5) == IN_PROGRESS
    assert tr.first_entry == {}


def test_first_entry_time_is_recorded_once():
    tr = simple_transition()
    check_convergence(tr, [[54.0, 150.0], [-90.0, 150.0]], 11.0)
    assert tr.first_entry == {2: 11.0}
    # agent 2 wandering back out does not reset its entry record
    check_convergence(tr, [[70.0, 150.0], [-54.0, 151.0]], 11.5)
    assert tr.first_entry == {2: 11.0, 3: 11.5}


def test_all_participants_in_band_converges():
    tr = simple_transition()
    status = check_convergence(tr, [[52.0, 148.0], [-48.0, 152.0]], 11.8)
    assert status == CONVERGED
    assert tr.converged_time == pytest.approx(11.8)
    # status is sticky via the recorded entries
    assert check_convergence(tr, [[52.0, 148.0], [-48.0, 152.0]], 12.5) == CONVERGED
    assert tr.converged_time == pytest.approx(11.8)


def test_band_is_per_axis():
    tr = simple_transition()
    # (4, 4) off is inside the per-axis band even though its 2-norm exceeds
    # the tolerance; 6 off on a single axis is outside
    check_convergence(tr, [[54.0, 154.0], [-44.0, 150.0]], 11.0, tolerance=5.0)
    assert 2 in tr.first_entry
    assert 3 not in tr.first_entry


def test_timeout_after_deadline_plus_grace():
    tr = simple_transition()  # deadline 12, default grace 1
    far = [[100.0, 150.0], [-100.0, 150.0]]
    assert check_convergence(tr, far, 12.9) == IN_PROGRESS
    assert check_convergence(tr, far, 13.01) == TIMED_OUT


def test_zero_displacement_only_transition_converges_immediately():
    tr = TransitionState(0.0, 2.0, (2,), [[5.0, 5.0]], [[0.0, 0.0]])
    assert check_convergence(tr, [[400.0, 400.0]], 0.0) == CONVERGED


def test_position_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        check_convergence(simple_transition(), [[0.0, 0.0]], 10.0)


@given(dx=st.floats(-80.0, 80.0), dy=st.floats(-80.0, 80.0),
       t=st.floats(0.5, 5.0))
@settings(max_examples=40, deadline=None)
def test_moving_to_the_exact_destination_always_converges(dx, dy, t):
    tr = TransitionState(0.0, t, (2,), [[10.0, -10.0]], [[dx, dy]])
    status = check_convergence(tr, tr.destination, t * 0.5)
    assert status == CONVERGED
