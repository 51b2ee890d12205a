"""Fixed-step closed-loop simulation of a formation scenario.

Each step reads the previous step's measured outputs, runs the avoidance
manager and the waypoint/turn/transition state machines, evaluates the
cooperative control pipeline, and advances every agent's discretized plant
by one sample.  Positions are centimeters internally; the exported logs use
meters.  Runs are bit-deterministic for a fixed scenario and seed: every
random draw comes from one seeded generator consumed in a fixed order, and
log files format floats with a fixed precision.

Per-agent dynamics: each planar axis is the fitted velocity-to-position
plant for the agent's kind, stepped with the (possibly delayed and
saturated) velocity command; yaw is the first-order yaw-rate plant whose
output is trapezoidally integrated and wrapped.

State machine summary (evaluated in priority order each step):

* collision / divergence abort the run with a nonzero status;
* an active avoidance event overrides formation offsets and, for reference
  detours, replaces the waypoint reference with a pursuit point that slides
  along the planned lateral line; waypoint progress is frozen;
* corner turns (when enabled) zero the planar commands at a sharp vertex
  and realign every yaw-steered agent to the next leg's heading;
* reaching a waypoint that starts a new formation phase holds ("dwells")
  the reference agent at the reached vertex until the offset transition
  converges, so transition timing is measured against a stationary head.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import controller, obstacle
from .formation import CONVERGED, IN_PROGRESS, TIMED_OUT, TransitionState, \
    check_convergence
from .lti import discretize, load_model_library
from .scenario import Scenario, load_scenario

CONVERGENCE_BAND_CM = 5.0
SETTLE_SPEED_CM_S = 3.0     # every agent this slow counts toward settling
SETTLE_BAND_CM = 2.5        # max per-axis offset residual while settling
SETTLE_HOLD_S = 1.0         # both conditions must hold this long
SETTLE_TIMEOUT_S = 25.0     # start the transition anyway after this long
OVERRIDE_GRACE_S = 12.0     # extra time for avoidance/restore convergence
OVERRIDE_HOLD_S = 1.0       # offsets must stay inside the band this long
STATUS_COMPLETED = "completed"
STATUS_DURATION = "duration"
STATUS_COLLISION = "collision"
STATUS_DIVERGED = "diverged"
STATUS_UNSUPPORTED = "unsupported-maneuver"


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _ease(u: float) -> float:
    """Smoothstep ramp: rises like 3u^2 and lands with zero slope.

    References and offset overrides move along this profile so that the
    commanded point arrives with no residual velocity; a linear ramp ends
    with a step in demanded speed and the closed loops ring off that kick.
    """
    u = min(1.0, max(0.0, u))
    return u * u * (3.0 - 2.0 * u)


@dataclass
class RunLog:
    """Complete record of one simulation run."""

    scenario_name: str
    mode: str
    dt: float
    times: np.ndarray
    positions: np.ndarray      # (T, n, 2) measured, cm
    commands: np.ndarray       # (T, n, 2) applied planar commands, cm/s
    yaws: np.ndarray           # (T, n) rad
    yaw_commands: np.ndarray   # (T, n) rad/s
    phases: np.ndarray         # (T,) schedule phase index; -1 under override
    avoid_modes: np.ndarray    # (T,) active avoidance mode, 0 when none
    events: list[dict]
    summary: dict

    def trajectory_csv(self) -> str:
        n = self.positions.shape[1]
        cols = ["time"]
        for i in range(1, n + 1):
            cols += [f"a{i}_x_m", f"a{i}_y_m", f"a{i}_cmd_vx_mps",
                     f"a{i}_cmd_vy_mps", f"a{i}_yaw_rad", f"a{i}_cmd_yaw_radps"]
        cols += ["phase", "avoid_mode"]
        lines = [",".join(cols)]
        for k in range(len(self.times)):
            row = [_fmt(self.times[k])]
            for i in range(n):
                row += [_fmt(self.positions[k, i, 0] / 100.0),
                        _fmt(self.positions[k, i, 1] / 100.0),
                        _fmt(self.commands[k, i, 0] / 100.0),
                        _fmt(self.commands[k, i, 1] / 100.0),
                        _fmt(self.yaws[k, i]),
                        _fmt(self.yaw_commands[k, i])]
            row += [str(int(self.phases[k])), str(int(self.avoid_modes[k]))]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def events_csv(self) -> str:
        lines = ["time,event,detail"]
        for ev in self.events:
            detail = " ".join(
                f"{key}={_fmt(val) if isinstance(val, float) else val}"
                for key, val in ev.items() if key not in ("time", "event"))
            lines.append(f"{_fmt(ev['time'])},{ev['event']},{detail}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"

    def write(self, outdir: str | Path) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectory.csv").write_text(self.trajectory_csv())
        (out / "events.csv").write_text(self.events_csv())
        (out / "summary.json").write_text(self.summary_json())
        return out


class Simulator:
    """Stateful engine for a single run of one scenario."""

    def __init__(self, scn: Scenario, models=None):
        self.scn = scn
        models = models or load_model_library()
        self.rng = np.random.default_rng(scn.seed)
        self.n = scn.n_agents
        self.master = scn.master_index
        self.kinds = scn.kinds
        self.origin = scn.starts()

        self.plants = []
        for agent in scn.agents:
            axes = []
            for axis in ("x", "y"):
                tf = models[f"{agent.kind}_vel{axis}"].transfer_function
                axes.append(discretize(tf, scn.dt, noise_std=scn.noise_std,
                                       rng=self.rng))
            self.plants.append(axes)

        self.yaw_agents = []
        self.yaw_plants = {}
        if scn.yaw_control is not None:
            top = scn.yaw_control.topology
            members = set(top.reference_agents)
            for head, tail in top.edges:
                members.update((head, tail))
            self.yaw_agents = sorted(members)
            rate_tf = models["ugv_yaw_rate"].transfer_function
            for agent in self.yaw_agents:
                self.yaw_plants[agent] = discretize(rate_tf, scn.dt)

        self.positions = self.origin.copy()
        self.velocities = np.zeros((self.n, 2))
        self.yaws = np.array([a.yaw for a in scn.agents], dtype=float)
        self.yaw_rates = np.zeros(self.n)
        window = scn.control.velocity_estimate_window
        self.pos_history = deque([self.positions.copy()], maxlen=window + 1)
        self.delay_queue = deque(
            [(np.zeros((self.n, 2)), np.zeros(self.n))] * scn.control.command_delay_steps)

        self.true_circles = [obstacle.circle_from_observation(poly, (i,))
                             for i, poly in enumerate(scn.obstacles)]
        self._poly_reach = [c.radius for c in self.true_circles]

        # divergence box: everything the scenario mentions, inflated by the
        # largest offset component plus one meter
        points = [self.origin]
        points.append(np.asarray(scn.waypoints, dtype=float))
        for poly in scn.obstacles:
            points.append(np.asarray(poly, dtype=float))
        cloud = np.vstack(points)
        offset_reach = max((abs(v) for ph in scn.formation.phases
                            for pair in ph.offsets for v in pair), default=0.0)
        margin = offset_reach + 100.0
        self.box_low = cloud.min(axis=0) - margin
        self.box_high = cloud.max(axis=0) + margin

        # ---- state machine
        self.completed = 0
        self.target_idx = 0
        self.holding: int | None = None
        self.corner: dict | None = None
        self.transition: dict | None = None       # {"kind", "state", "target_offsets"}
        self.pending_offsets: np.ndarray | None = None   # awaiting dwell settle
        self.pending_since = 0.0
        self.settle_ok_since: float | None = None
        self.avoidance: obstacle.AvoidanceEvent | None = None
        self.avoidance_started = 0.0
        self.ref_slew: dict | None = None
        self._begin_glide(0.0, self.positions[self.master].copy())
        self.phase_idx = scn.formation.phase_index(0)
        self.schedule_offsets = np.array(scn.formation.phase_for(0), dtype=float)
        self.active_offsets = self.schedule_offsets.copy()
        self.effective_gains = scn.gains
        self.last_heading = scn.agents[self.master].yaw
        self.terminal_time: float | None = None
        self.status = STATUS_DURATION

        # ---- records
        self.events: list[dict] = []
        self.transition_records: list[dict] = []
        self.avoidance_records: list[dict] = []
        self.restoration_records: list[dict] = []
        self.rel_err_max = np.zeros(scn.topology.n_edges)
        self.min_clearance = np.inf
        self.min_boundary_clearance = np.inf

    # ------------------------------------------------------------ helpers

    def _event(self, time: float, name: str, **detail):
        self.events.append({"time": time, "event": name, **detail})

    def _edge_tails(self) -> list[int]:
        return [tail for _head, tail in self.scn.topology.edges]

    def _relative_offsets(self) -> np.ndarray:
        """Current tail-minus-head displacement per edge (cm)."""
        out = np.zeros((self.scn.topology.n_edges, 2))
        for e, (head, tail) in enumerate(self.scn.topology.edges):
            out[e] = self.positions[tail - 1] - self.positions[head - 1]
        return out

    def _phase_duration(self) -> float:
        return self.scn.formation.phases[
            self.scn.formation.phase_index(self.completed)].transition_duration

    def _begin_glide(self, now: float, from_point: np.ndarray):
        """Ease the reference toward the current waypoint from a fixed point.

        Engaging a waypoint with a stepped reference rings the lightly
        damped head plant; scenarios that care about a smooth head velocity
        declare either a glide time (smoothstep over a fixed duration) or a
        cruise speed (trapezoidal speed profile: ease up, hold, ease down).
        """
        scn = self.scn
        if scn.waypoint_cruise_speed > 0:
            self.ref_slew = {"from": np.asarray(from_point, dtype=float),
                             "start": now, "mode": "cruise",
                             "speed": scn.waypoint_cruise_speed,
                             "ease": scn.waypoint_ease_s}
        elif scn.waypoint_glide_s > 0:
            self.ref_slew = {"from": np.asarray(from_point, dtype=float),
                             "start": now, "mode": "glide",
                             "duration": scn.waypoint_glide_s}

    def _slew_point(self, waypoint: np.ndarray, now: float | None) -> np.ndarray | None:
        """Reference position along the active slew, or None once it lands."""
        slew = self.ref_slew
        start = np.asarray(slew["from"], dtype=float)
        if now is None:
            return None
        elapsed = now - slew["start"]
        if slew.get("mode", "glide") == "glide":
            if slew["duration"] <= 0 or elapsed >= slew["duration"]:
                return None
            return start + _ease(elapsed / slew["duration"]) * (waypoint - start)
        leg = waypoint - start
        distance = float(np.hypot(*leg))
        speed, ease = slew["speed"], slew["ease"]
        if distance <= 1e-9:
            return None
        if distance <= speed * ease:
            # leg too short to reach cruise speed: plain ease over two ramps
            total = 2.0 * ease
            if elapsed >= total:
                return None
            return start + _ease(elapsed / total) * leg
        total = 2.0 * ease + (distance - speed * ease) / speed
        if elapsed >= total:
            return None
        if elapsed < ease:
            u = elapsed / ease
            arc = speed * ease * (u ** 3) * (1.0 - 0.5 * u)
        elif elapsed <= total - ease:
            arc = 0.5 * speed * ease + speed * (elapsed - ease)
        else:
            u = (total - elapsed) / ease
            arc = distance - speed * ease * (u ** 3) * (1.0 - 0.5 * u)
        return start + (arc / distance) * leg

    def _reference_point(self, now: float | None = None) -> np.ndarray:
        scn = self.scn
        if self.avoidance is not None and self.avoidance.master_lateral is not None:
            # Ramp the detour over the phase's transition time: a step
            # reference would ring the head across the safety margin, and a
            # ringing head drags every follower with it through the offset
            # coupling.  The pursuit-point advance grows quadratically so the
            # head brakes while the swing develops instead of outrunning it.
            ramp = self._phase_duration()
            frac = 1.0
            if now is not None and ramp > 0:
                frac = min(1.0, (now - self.avoidance_started) / ramp)
            s_m, _ = self.avoidance.frame_coords(self.positions[self.master])
            return self.avoidance.to_world(
                s_m + _ease(frac * frac) * scn.sensing.carrot_advance,
                _ease(frac) * self.avoidance.master_lateral)
        idx = self.holding if self.holding is not None else self.target_idx
        idx = min(idx, len(scn.waypoints) - 1)
        waypoint = np.asarray(scn.waypoints[idx], dtype=float)
        if self.ref_slew is not None:
            point = self._slew_point(waypoint, now)
            if point is not None:
                return point
            self.ref_slew = None
        return waypoint

    def _slave_targets(self, reference: np.ndarray) -> np.ndarray:
        targets = np.zeros((self.n, 2))
        targets[self.master] = reference
        for e, (_head, tail) in enumerate(self.scn.topology.edges):
            targets[tail - 1] = reference + self.active_offsets[e]
        return targets

    # ------------------------------------------------------- avoidance

    def _observe(self) -> list[obstacle.ObstacleCircle]:
        """Obstacles any robot currently senses, as full boundary circles.

        A polygon counts as sensed while part of it lies inside some robot's
        footprint; its circle is then the full-boundary wrap, since a sliver
        seen at first contact would undersize every clearance computed from
        it.  Once sensed, membership is re-evaluated every step (there is no
        persistent map), which is fine because events freeze their geometry
        at detection time.
        """
        scn = self.scn
        seen: set[int] = set()
        for r in range(self.n):
            viewer = self.positions[r]
            for idx, poly in enumerate(scn.obstacles):
                if idx in seen:
                    continue
                center = np.asarray(self.true_circles[idx].center)
                if (np.linalg.norm(viewer - center)
                        > scn.sensing.fov / 2.0 + self._poly_reach[idx]):
                    continue
                part = obstacle.clip_polygon_to_disc(poly, viewer,
                                                     scn.sensing.fov / 2.0)
                if part.shape[0] >= 3:
                    seen.add(idx)
        return [self.true_circles[idx] for idx in sorted(seen)]

    def _avoidance_offsets(self, event: obstacle.AvoidanceEvent) -> np.ndarray:
        along = np.asarray(event.path_along)
        lateral = np.asarray(event.path_lateral)
        master_lat = event.master_lateral if event.master_lateral is not None else 0.0
        out = self.schedule_offsets.copy()
        for e, (_head, tail) in enumerate(self.scn.topology.edges):
            if tail not in event.slave_laterals:
                continue
            spec = self.schedule_offsets[e]
            along_comp = float(spec @ along)
            out[e] = (along_comp * along
                      + (event.slave_laterals[tail] - master_lat) * lateral)
        return out

    def _avoidance_cleared(self) -> bool:
        """The event ends when the head has left it behind and every robot
        is past the hazards along the frozen path.

        The head's own check is not enough: followers stationed behind it
        are still alongside the hazards when it passes, and re-expanding the
        schedule at that instant would sweep them into the walls.
        """
        event = self.avoidance
        scn = self.scn
        if not obstacle.event_cleared(event, self.positions[self.master],
                                      scn.sensing.fov):
            return False
        along = np.array([event.frame_coords(self.positions[r])[0]
                          for r in range(self.n)])
        for circle in event.obstacles:
            s_oc, _ = event.frame_coords(circle.center)
            passed = s_oc + circle.radius + scn.sensing.robot_radius
            if bool((along <= passed).any()):
                return False
        return True

    def _update_avoidance(self, now: float):
        scn = self.scn
        if not scn.obstacles:
            return
        if self.avoidance is not None:
            if self._avoidance_cleared():
                # glide the reference back to the waypoint instead of
                # stepping it: the formation is cruising at the clear
                # instant, and a step would ring everyone around the slots
                if self.avoidance.master_lateral is not None:
                    self.ref_slew = {"from": self._reference_point(now),
                                     "start": now,
                                     "duration": self._phase_duration()}
                self._event(now, "avoid_clear", mode=self.avoidance.mode)
                self.avoidance_records[-1]["cleared_time"] = now
                self.avoidance = None
                self._switch_offsets(self.schedule_offsets, now, kind="restore")
            return
        circles = obstacle.group_all(self._observe(),
                                     2.0 * scn.sensing.robot_radius)
        if not circles:
            return
        reference = self._reference_point(now)
        targets = self._slave_targets(reference)
        event = obstacle.detect_mode(self.positions, targets,
                                     [scn.sensing.robot_radius] * self.n,
                                     self.master, circles, scn.sensing.fov,
                                     scn.sensing.look_ahead)
        if event is None:
            return
        self.avoidance = event
        self.avoidance_started = now
        self.ref_slew = None
        detail = {"mode": event.mode}
        if event.sub_case is not None:
            detail["sub_case"] = event.sub_case
        if event.strategy is not None:
            detail["strategy"] = event.strategy
        if event.threatened is not None:
            detail["threatened"] = int(event.threatened)
        self._event(now, "avoid_enter", **detail)
        self.avoidance_records.append({
            "time": now, "mode": event.mode, "sub_case": event.sub_case,
            "strategy": event.strategy, "threatened": event.threatened,
            "obstacles": [list(c.members) for c in event.obstacles],
            "cleared_time": None,
        })
        if event.slave_laterals:
            self._switch_offsets(self._avoidance_offsets(event), now,
                                 kind="avoidance")

    # ------------------------------------------------------ transitions

    def _switch_offsets(self, new_offsets: np.ndarray, now: float, kind: str):
        new_offsets = np.asarray(new_offsets, dtype=float)
        delta = new_offsets - self.active_offsets
        if float(np.abs(delta).max(initial=0.0)) < 1e-9:
            return
        if self.transition is not None:
            self._finish_transition(now, "superseded")
        scn = self.scn
        tails = self._edge_tails()
        duration = scn.formation.phases[
            scn.formation.phase_index(self.completed)].transition_duration
        state = TransitionState(
            start_time=now, duration=duration, agents=tuple(tails),
            start_positions=self.positions[[t - 1 for t in tails]].copy(),
            dis=delta.copy(), label=kind)
        self.transition = {"kind": kind, "state": state,
                           "target_offsets": new_offsets.copy(),
                           "start_offsets": self.active_offsets.copy()}
        if self.scn.gains.adaptive:
            edge_errors = controller.formation_errors(
                self.positions, scn.topology, new_offsets,
                self._reference_point())[: 2 * scn.topology.n_edges]
            self.effective_gains = controller.adaptive_gains(
                delta, duration, edge_errors.reshape(-1, 2), scn.gains)
        if kind == "waypoint":
            # formation morphs apply as a step: the switch instant is the
            # timing datum for the first-entry measurement
            self.active_offsets = new_offsets.copy()
        self._event(now, "transition_start", kind=kind, duration=duration)

    def _apply_offset_ramp(self, now: float):
        """Slew avoidance/restore offset overrides over the transition time.

        Stepping the override would ring the followers across the safety
        margin in narrow passages, so those offsets move along an eased ramp
        and the plants track it with bounded lag instead of overshooting.
        """
        if self.transition is None or self.transition["kind"] == "waypoint":
            return
        state: TransitionState = self.transition["state"]
        frac = 1.0
        if state.duration > 0:
            frac = min(1.0, (now - state.start_time) / state.duration)
        start = self.transition["start_offsets"]
        target = self.transition["target_offsets"]
        self.active_offsets = start + _ease(frac) * (target - start)

    def _transition_status(self, now: float) -> str | None:
        """Advance the active transition's bookkeeping; return its status."""
        if self.transition is None:
            return None
        state: TransitionState = self.transition["state"]
        kind = self.transition["kind"]
        if kind == "waypoint":
            # the head dwells, so absolute first-entry residuals are the
            # transition-time measurement
            rows = [agent - 1 for agent in state.agents]
            return check_convergence(state, self.positions[rows], now,
                                     tolerance=CONVERGENCE_BAND_CM)
        # avoidance/restore transitions run while the head keeps moving:
        # converge on the relative offsets instead
        target = self.transition["target_offsets"]
        residual = np.abs(self._relative_offsets() - target)
        moving = state.participating()
        in_band = True
        for k in moving:
            agent = state.agents[k]
            if np.all(residual[k] <= CONVERGENCE_BAND_CM):
                state.first_entry.setdefault(agent, now)
            else:
                in_band = False
        # the offsets must sit inside the band together and stay there:
        # a single sample can coincide with a zero crossing of a decaying
        # swing, which is not a held formation
        if in_band:
            if self.transition.setdefault("in_band_since", now) is None:
                self.transition["in_band_since"] = now
            held_since = self.transition["in_band_since"]
            if now - held_since >= OVERRIDE_HOLD_S:
                if state.converged_time is None:
                    state.converged_time = held_since
                return CONVERGED
            return IN_PROGRESS
        self.transition["in_band_since"] = None
        # the per-axis band cannot close while the head is still cruising
        # (tracking lag scales with its speed), so overrides get extra time
        if now > state.start_time + state.duration + OVERRIDE_GRACE_S:
            return TIMED_OUT
        return IN_PROGRESS

    def _finish_transition(self, now: float, status: str):
        state: TransitionState = self.transition["state"]
        kind = self.transition["kind"]
        record = {
            "kind": kind,
            "start_time": float(state.start_time),
            "duration": float(state.duration),
            "agents": [int(a) for a in state.agents],
            "participating": [int(state.agents[k]) for k in state.participating()],
            "first_entry": {str(a): float(t) for a, t in sorted(state.first_entry.items())},
            "converged_time": None if state.converged_time is None
            else float(state.converged_time),
            "status": status,
        }
        self.transition_records.append(record)
        self._event(now, f"transition_{status}", kind=kind)
        if kind == "restore":
            error = float(np.abs(self._relative_offsets()
                                 - self.schedule_offsets).max())
            self.restoration_records.append({
                "start_time": float(state.start_time),
                "measured_time": now,
                "offset_error_cm": error,
                "status": "restored" if status == CONVERGED else status,
            })
        if kind != "waypoint" and status != "superseded":
            # land the slewed override on its target; a superseding
            # transition instead takes over from the mid-ramp value
            self.active_offsets = self.transition["target_offsets"].copy()
        self.transition = None
        self.effective_gains = self.scn.gains

    # -------------------------------------------------------- waypoints

    def _previous_vertex(self) -> np.ndarray:
        if self.completed <= 0 or self.target_idx == 0:
            return self.origin[self.master]
        return np.asarray(self.scn.waypoints[self.target_idx - 1], dtype=float)

    def _update_settle(self, now: float):
        """Start a pending waypoint transition once the dwell has settled.

        The first-entry measurement freezes absolute destinations at the
        switch instant, so the switch waits until the head has (nearly)
        stopped ringing at the vertex and every edge is back inside the
        convergence band around the outgoing offsets.
        """
        if self.pending_offsets is None or self.avoidance is not None:
            return
        speed = float(np.linalg.norm(self.velocities, axis=1).max())
        residual = np.abs(self._relative_offsets() - self.active_offsets)
        quiet = (speed <= SETTLE_SPEED_CM_S
                 and (residual.size == 0
                      or float(residual.max()) <= SETTLE_BAND_CM))
        if not quiet:
            self.settle_ok_since = None
        elif self.settle_ok_since is None:
            self.settle_ok_since = now
        held = (self.settle_ok_since is not None
                and now - self.settle_ok_since >= SETTLE_HOLD_S)
        if held or now - self.pending_since > SETTLE_TIMEOUT_S:
            if not held:
                self._event(now, "settle_timeout")
            offsets = self.pending_offsets
            self.pending_offsets = None
            self.settle_ok_since = None
            self._switch_offsets(offsets, now, kind="waypoint")

    def _update_waypoints(self, now: float):
        scn = self.scn
        if self.avoidance is not None or self.terminal_time is not None:
            return
        # release a hold once the turn, the settle gate, and the transition
        # are all done
        if self.holding is not None:
            if (self.corner is None and self.transition is None
                    and self.pending_offsets is None):
                if self.holding + 1 < len(scn.waypoints):
                    self.target_idx = self.holding + 1
                    self._begin_glide(
                        now, np.asarray(scn.waypoints[self.holding],
                                        dtype=float))
                else:
                    self.terminal_time = now
                    self._event(now, "terminal", waypoints=self.completed)
                self.holding = None
            return
        # a restore transition may still be converging while the head
        # cruises; only an offset change tied to a waypoint freezes progress
        if self.transition is not None and self.transition["kind"] == "waypoint":
            return
        target = np.asarray(scn.waypoints[self.target_idx], dtype=float)
        gap = float(np.linalg.norm(self.positions[self.master] - target))
        if gap > scn.waypoint_radius:
            return
        self.completed += 1
        self._event(now, "waypoint_reached", index=self.target_idx,
                    completed=self.completed)
        hold = False

        yaw_cfg = scn.yaw_control
        if (yaw_cfg is not None and yaw_cfg.corner_turns
                and self.target_idx + 1 < len(scn.waypoints)):
            incoming = controller.heading_from_motion(
                target, self._previous_vertex(), self.last_heading)
            outgoing = controller.heading_from_motion(
                scn.waypoints[self.target_idx + 1], target, incoming)
            change = controller.wrap_angle(outgoing - incoming)
            if abs(change) > yaw_cfg.corner_entry:
                self.corner = {"heading": outgoing, "start": now}
                self._event(now, "corner_turn_start",
                            heading_deg=float(np.rad2deg(outgoing)))
                hold = True

        new_phase = scn.formation.phase_index(self.completed)
        if new_phase != self.phase_idx:
            # a phase boundary always dwells, even when its offsets repeat
            # the previous ones: scenarios use a repeated phase to force the
            # formation to settle before tackling what comes next
            self.phase_idx = new_phase
            new_offsets = np.asarray(scn.formation.phase_for(self.completed),
                                     dtype=float)
            self.schedule_offsets = new_offsets
            self.pending_offsets = new_offsets
            self.pending_since = now
            hold = True

        if hold:
            self.holding = self.target_idx
        elif self.target_idx + 1 < len(scn.waypoints):
            self.target_idx += 1
            self._begin_glide(now, target)
        else:
            self.terminal_time = now
            self._event(now, "terminal", waypoints=self.completed)

    def _update_corner(self, now: float):
        if self.corner is None:
            return
        cfg = self.scn.yaw_control
        target = self.corner["heading"]
        errs = [abs(controller.wrap_angle(self.yaws[a - 1] - target))
                for a in self.yaw_agents]
        if errs and max(errs) < cfg.corner_exit:
            self._event(now, "corner_turn_end",
                        held=float(now - self.corner["start"]))
            self.corner = None
            self.last_heading = target

    # ----------------------------------------------------------- stepping

    def _commands(self, now: float, reference: np.ndarray):
        # during a corner turn the reference stays pinned at the reached
        # vertex, so the position loop station-keeps there while yaw realigns
        # (a zero velocity command would let the leaky plants drift home)
        scn = self.scn
        if scn.control.mode == "enhanced":
            planar = controller.enhanced_control(
                self.positions, self.velocities, scn.topology,
                self.effective_gains, self.active_offsets, reference,
                self.kinds, scn.saturation, dt=scn.dt,
                prediction_horizon_steps=scn.control.prediction_horizon_steps)
        else:
            planar = controller.baseline_control(
                self.positions, scn.topology, self.effective_gains,
                self.active_offsets, reference, self.kinds, scn.saturation)

        yaw_cmds = np.zeros(self.n)
        cfg = scn.yaw_control
        if cfg is not None:
            if self.corner is not None:
                target = self.corner["heading"]
            elif cfg.target is not None:
                target = cfg.target
            else:
                target = controller.heading_from_motion(
                    reference, self.positions[self.master], self.last_heading)
                self.last_heading = target
            yaw_cmds = controller.yaw_consensus(
                self.yaws, self.yaw_rates, cfg.topology, self.effective_gains,
                target, cfg.offsets, scn.saturation, dt=scn.dt,
                prediction_horizon_steps=scn.control.prediction_horizon_steps,
                enhanced=(scn.control.mode == "enhanced"))
        return planar, yaw_cmds

    def _advance_plants(self, planar: np.ndarray, yaw_cmds: np.ndarray):
        scn = self.scn
        self.delay_queue.append((planar, yaw_cmds))
        applied_planar, applied_yaw = self.delay_queue.popleft()
        for i in range(self.n):
            for axis in range(2):
                out = self.plants[i][axis].step(float(applied_planar[i, axis]))
                self.positions[i, axis] = self.origin[i, axis] + out
        for agent in self.yaw_agents:
            i = agent - 1
            rate = self.yaw_plants[agent].step(float(applied_yaw[i]))
            self.yaws[i] = controller.wrap_angle(
                self.yaws[i] + scn.dt * 0.5 * (self.yaw_rates[i] + rate))
            self.yaw_rates[i] = rate
        self.pos_history.append(self.positions.copy())
        span = len(self.pos_history) - 1
        if span > 0:
            self.velocities = (self.pos_history[-1] - self.pos_history[0]) / (span * scn.dt)
        return applied_planar, applied_yaw

    def _update_metrics(self, now: float):
        rel = self._relative_offsets() - self.active_offsets
        # the error maxima are steady-behaviour metrics: a scenario may
        # declare a warmup so the spin-up transient every mode shares does
        # not mask the differences under study
        if rel.size and now >= self.scn.metrics_warmup_s:
            self.rel_err_max = np.maximum(self.rel_err_max,
                                          np.linalg.norm(rel, axis=1))
        for circle in self.true_circles:
            center = np.asarray(circle.center)
            dist = np.linalg.norm(self.positions - center, axis=1)
            # contact is judged against the physical footprint; the larger
            # planning radius holds back slack for tracking transients
            clearance = dist - circle.radius - self.scn.sensing.collision_radius
            self.min_clearance = min(self.min_clearance, float(clearance.min()))
        if self.avoidance is not None:
            for circle in self.avoidance.obstacles:
                center = np.asarray(circle.center)
                dist = np.linalg.norm(self.positions - center, axis=1)
                boundary = dist - circle.radius
                self.min_boundary_clearance = min(self.min_boundary_clearance,
                                                  float(boundary.min()))

    def _check_safety(self, now: float) -> bool:
        if self.min_clearance < 0.0:
            self.status = STATUS_COLLISION
            self._event(now, "collision", clearance_cm=float(self.min_clearance))
            return False
        outside = np.logical_or(self.positions < self.box_low,
                                self.positions > self.box_high)
        if bool(outside.any()):
            agent = int(np.argwhere(outside)[0][0]) + 1
            self.status = STATUS_DIVERGED
            self._event(now, "divergence", agent=agent)
            return False
        return True

    # --------------------------------------------------------------- run

    def run(self) -> RunLog:
        scn = self.scn
        steps = int(round(scn.duration / scn.dt))
        times = np.zeros(steps)
        positions = np.zeros((steps, self.n, 2))
        commands = np.zeros((steps, self.n, 2))
        yaws = np.zeros((steps, self.n))
        yaw_commands = np.zeros((steps, self.n))
        phases = np.zeros(steps, dtype=int)
        avoid_modes = np.zeros(steps, dtype=int)
        logged = 0

        for k in range(steps):
            now = k * scn.dt
            try:
                self._update_avoidance(now)
            except obstacle.UnsupportedManeuver as exc:
                self.status = STATUS_UNSUPPORTED
                self._event(now, "unsupported_maneuver",
                            reason=str(exc).replace(",", ";"))
                break
            status = self._transition_status(now)
            if status in (CONVERGED, TIMED_OUT):
                self._finish_transition(now, status)
            self._apply_offset_ramp(now)
            self._update_corner(now)
            self._update_settle(now)
            self._update_waypoints(now)

            reference = self._reference_point(now)
            planar, yaw_cmds = self._commands(now, reference)
            applied_planar, applied_yaw = self._advance_plants(planar, yaw_cmds)

            times[k] = now
            positions[k] = self.positions
            commands[k] = applied_planar
            yaws[k] = self.yaws
            yaw_commands[k] = applied_yaw
            phases[k] = (-1 if self.avoidance is not None
                         else scn.formation.phase_index(self.completed))
            avoid_modes[k] = 0 if self.avoidance is None else self.avoidance.mode
            logged = k + 1

            self._update_metrics(now)
            if not self._check_safety(now):
                break
            if (self.terminal_time is not None
                    and now - self.terminal_time >= scn.settle_time
                    and self.transition is None):
                self.status = STATUS_COMPLETED
                break
        else:
            if self.terminal_time is not None:
                self.status = STATUS_COMPLETED

        if self.transition is not None:
            self._finish_transition(logged * scn.dt, "interrupted")

        summary = self._summary(logged * scn.dt)
        return RunLog(
            scenario_name=scn.name, mode=scn.control.mode, dt=scn.dt,
            times=times[:logged], positions=positions[:logged],
            commands=commands[:logged], yaws=yaws[:logged],
            yaw_commands=yaw_commands[:logged], phases=phases[:logged],
            avoid_modes=avoid_modes[:logged], events=self.events,
            summary=summary)

    def _summary(self, final_time: float) -> dict:
        scn = self.scn
        rel_final = np.abs(self._relative_offsets() - self.schedule_offsets)
        summary = {
            "scenario": scn.name,
            "mode": scn.control.mode,
            "dt": scn.dt,
            "seed": scn.seed,
            "status": self.status,
            "final_time": float(final_time),
            "waypoints_completed": int(self.completed),
            "final_positions_m": [[float(v) / 100.0 for v in row]
                                  for row in self.positions],
            "final_yaw_deg": [float(np.rad2deg(y)) for y in self.yaws],
            "final_offset_error_cm": (float(rel_final.max())
                                      if rel_final.size else 0.0),
            "relative_error_max_cm": {f"edge_{e}": float(v)
                                      for e, v in enumerate(self.rel_err_max)},
            "relative_error_max_overall_cm": (float(self.rel_err_max.max())
                                              if self.rel_err_max.size else 0.0),
            "min_obstacle_clearance_cm": (None if not self.true_circles
                                          else float(self.min_clearance)),
            "avoidance_min_boundary_clearance_cm": (
                None if not np.isfinite(self.min_boundary_clearance)
                else float(self.min_boundary_clearance)),
            "transitions": self.transition_records,
            "avoidance_events": self.avoidance_records,
            "restorations": self.restoration_records,
        }
        return summary


def run_scenario(source: str | Path | Scenario, *, mode: str | None = None,
                 dt: float | None = None, seed: int | None = None,
                 noise_std: float | None = None,
                 duration: float | None = None) -> RunLog:
    """Load (if needed), optionally override knobs, and run a scenario."""
    scn = source if isinstance(source, Scenario) else load_scenario(source)
    if mode is not None:
        scn = replace(scn, control=replace(scn.control, mode=mode))
    if dt is not None:
        scn = replace(scn, dt=dt)
    if seed is not None:
        scn = replace(scn, seed=seed)
    if noise_std is not None:
        scn = replace(scn, noise_std=noise_std)
    if duration is not None:
        scn = replace(scn, duration=duration)
    return Simulator(scn).run()
