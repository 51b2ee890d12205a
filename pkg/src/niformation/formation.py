"""Time-varying formation schedules and transition bookkeeping.

A formation specification is an ordered list of phases; each phase carries
the per-edge desired offsets (tail relative to head, cm) plus the nominal
transition duration used when the schedule switches into it.  Phases are
triggered by the count of waypoints the reference agent has completed;
avoidance replanning overrides the schedule entirely while it is active.

A transition records where the steered agents started, the displacement each
one must cover, and the time budget; convergence is a first-entry test on
the per-axis residuals against the transition's destination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVERGED = "converged"
IN_PROGRESS = "in-progress"
TIMED_OUT = "timed-out"


@dataclass(frozen=True)
class FormationPhase:
    """Offsets to hold once `after_waypoints` waypoints have been completed."""

    after_waypoints: int
    offsets: tuple[tuple[float, float], ...]
    transition_duration: float = 2.0

    def __post_init__(self):
        if self.after_waypoints < 0:
            raise ValueError("after_waypoints must be nonnegative")
        if self.transition_duration <= 0:
            raise ValueError("transition_duration must be positive")
        object.__setattr__(self, "offsets",
                           tuple((float(x), float(y)) for x, y in self.offsets))


@dataclass(frozen=True)
class FormationSpec:
    """Ordered phase schedule; phase 0 must be active from the start."""

    phases: tuple[FormationPhase, ...]

    def __post_init__(self):
        if not self.phases:
            raise ValueError("formation needs at least one phase")
        object.__setattr__(self, "phases", tuple(self.phases))
        counts = [p.after_waypoints for p in self.phases]
        if counts[0] != 0:
            raise ValueError("the first phase must start at zero completed waypoints")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("phase triggers must strictly increase")
        edges = {len(p.offsets) for p in self.phases}
        if len(edges) != 1:
            raise ValueError("every phase must cover the same edge count")

    @property
    def n_edges(self) -> int:
        return len(self.phases[0].offsets)

    def phase_for(self, completed_waypoints: int,
                  avoidance_offsets=None) -> tuple[tuple[float, float], ...]:
        """Offsets in force: avoidance overrides beat the waypoint schedule."""
        if avoidance_offsets is not None:
            return tuple((float(x), float(y)) for x, y in avoidance_offsets)
        active = self.phases[0]
        for phase in self.phases[1:]:
            if phase.after_waypoints <= completed_waypoints:
                active = phase
        return active.offsets

    def phase_index(self, completed_waypoints: int) -> int:
        idx = 0
        for k, phase in enumerate(self.phases[1:], start=1):
            if phase.after_waypoints <= completed_waypoints:
                idx = k
        return idx


@dataclass
class TransitionState:
    """One in-flight offset change for a set of steered agents."""

    start_time: float
    duration: float
    agents: tuple[int, ...]              # 1-based ids of the steered agents
    start_positions: np.ndarray          # (len(agents), 2) at activation
    dis: np.ndarray                      # (len(agents), 2) displacement to cover
    label: str = ""
    first_entry: dict[int, float] = field(default_factory=dict)
    converged_time: float | None = None

    def __post_init__(self):
        self.start_positions = np.asarray(self.start_positions, dtype=float).reshape(-1, 2)
        self.dis = np.asarray(self.dis, dtype=float).reshape(-1, 2)
        if self.duration <= 0:
            raise ValueError("transition duration must be positive")
        if self.start_positions.shape != (len(self.agents), 2):
            raise ValueError("start_positions must match the agent list")
        if self.dis.shape != (len(self.agents), 2):
            raise ValueError("dis must match the agent list")

    @property
    def destination(self) -> np.ndarray:
        return self.start_positions + self.dis

    @property
    def deadline(self) -> float:
        return self.start_time + self.duration

    def participating(self) -> list[int]:
        """Indices (into the agent list) that actually move."""
        return [k for k in range(len(self.agents))
                if float(np.abs(self.dis[k]).max()) > 1e-12]


def transition_velocities(transition: TransitionState) -> np.ndarray:
    """Average velocity each steered agent must hold: dis / duration."""
    return transition.dis / transition.duration


def check_convergence(transition: TransitionState, positions: np.ndarray,
                      now: float, tolerance: float = 5.0,
                      grace: float | None = None) -> str:
    """First-entry convergence test against the transition destination.

    positions is (len(agents), 2), current positions of the steered agents.
    An agent has arrived once both axis residuals against its destination
    are within `tolerance`; its first entry time is recorded.  The
    transition converges when every participating agent has arrived, times
    out when `now` passes the deadline plus the grace window (half the
    duration by default) without that happening.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if pos.shape != transition.start_positions.shape:
        raise ValueError("positions must match the transition agent list")
    if grace is None:
        grace = 0.5 * transition.duration

    residual = transition.destination - pos
    for idx, agent in enumerate(transition.agents):
        if agent in transition.first_entry:
            continue
        if np.all(np.abs(residual[idx]) <= tolerance):
            transition.first_entry[agent] = now

    moving = transition.participating()
    done = all(transition.agents[k] in transition.first_entry for k in moving)
    if done:
        if transition.converged_time is None:
            transition.converged_time = now
        return CONVERGED
    if now > transition.deadline + grace:
        return TIMED_OUT
    return IN_PROGRESS
