"""Scenario files: the declarative description of one simulation run.

A scenario YAML names the agents (kind, start pose), the interconnection
topology and loop gains, the reference agent's waypoint list, the phase
schedule of formation offsets, optional yaw-alignment control, optional
obstacle polygons, sensing geometry, and the integration/noise settings.
Positions are centimeters; angles in the file are degrees (converted to
radians on load); times are seconds.

`load_scenario` accepts a filesystem path or the bare name of a shipped
scenario.  Validation errors name the offending field path.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .controller import NiGains, SaturationLimits
from .formation import FormationPhase, FormationSpec
from .graph import NetworkTopology, build_topology

AGENT_KINDS = ("ugv", "uav")
CONTROL_MODES = ("enhanced", "baseline")


class ScenarioError(ValueError):
    """A scenario document failed validation; the message names the field."""


@dataclass(frozen=True)
class AgentSpec:
    id: int
    kind: str
    start: tuple[float, float]
    yaw: float = 0.0  # radians


@dataclass(frozen=True)
class SensingConfig:
    fov: float = 220.0             # sensor footprint diameter (cm)
    look_ahead: float = 100.0      # obstacle reaction range (cm)
    robot_radius: float = 32.0     # planning footprint of every robot (cm)
    collision_radius: float = 25.0  # physical footprint: contact below this
    carrot_advance: float = 60.0   # detour pursuit point lead (cm)

    def __post_init__(self):
        if min(self.fov, self.look_ahead, self.robot_radius,
               self.collision_radius, self.carrot_advance) <= 0:
            raise ScenarioError("sensing values must be positive")
        if self.collision_radius > self.robot_radius:
            raise ScenarioError(
                "sensing.collision_radius cannot exceed the planning "
                "robot_radius")


@dataclass(frozen=True)
class ControlConfig:
    mode: str = "enhanced"
    prediction_horizon_steps: int = 1
    velocity_estimate_window: int = 1
    command_delay_steps: int = 0

    def __post_init__(self):
        if self.mode not in CONTROL_MODES:
            raise ScenarioError(f"control.mode must be one of {CONTROL_MODES}")
        if self.prediction_horizon_steps < 1:
            raise ScenarioError("control.prediction_horizon_steps must be >= 1")
        if self.velocity_estimate_window < 1:
            raise ScenarioError("control.velocity_estimate_window must be >= 1")
        if self.command_delay_steps < 0:
            raise ScenarioError("control.command_delay_steps must be >= 0")


@dataclass(frozen=True)
class YawControlConfig:
    topology: NetworkTopology
    offsets: tuple[float, ...]          # radians, per yaw edge
    target: float | None                # radians; None tracks motion heading
    corner_turns: bool = False
    corner_entry: float = np.deg2rad(30.0)
    corner_exit: float = np.deg2rad(3.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    dt: float
    duration: float
    seed: int
    agents: tuple[AgentSpec, ...]
    topology: NetworkTopology
    gains: NiGains
    waypoints: tuple[tuple[float, float], ...]
    waypoint_radius: float
    formation: FormationSpec
    obstacles: tuple[np.ndarray, ...] = ()
    sensing: SensingConfig = field(default_factory=SensingConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    saturation: SaturationLimits = field(default_factory=SaturationLimits)
    yaw_control: YawControlConfig | None = None
    noise_std: float = 0.0
    settle_time: float = 5.0
    metrics_warmup_s: float = 0.0
    # reference eases from the previous point to each new waypoint over this
    # many seconds (0 = step); a stepped reference rings the lightly damped
    # head plant, a glide keeps its velocity smooth
    waypoint_glide_s: float = 0.0
    # trapezoidal reference profile: ease up to cruise_speed (cm/s) over
    # ease_s seconds, hold it, ease back down to land on the waypoint;
    # mutually exclusive with glide_s (which shapes time, not speed)
    waypoint_cruise_speed: float = 0.0
    waypoint_ease_s: float = 0.0

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def master_index(self) -> int:
        """0-based row of the (first) reference agent."""
        return self.topology.reference_agents[0] - 1

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(a.kind for a in self.agents)

    def starts(self) -> np.ndarray:
        return np.array([a.start for a in self.agents], dtype=float)


def _expect(doc: dict, key: str, path: str, kind=None, default=None, required=True):
    if key not in doc:
        if required:
            raise ScenarioError(f"{path}{key}: missing required field")
        return default
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ScenarioError(f"{path}{key}: expected {names}, got {type(value).__name__}")
    return value


def _point(value, path: str) -> tuple[float, float]:
    try:
        x, y = float(value[0]), float(value[1])
    except (TypeError, ValueError, IndexError):
        raise ScenarioError(f"{path}: expected a [x, y] pair") from None
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ScenarioError(f"{path}: coordinates must be finite")
    return (x, y)


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {type(value).__name__}")
    if not np.isfinite(float(value)):
        raise ScenarioError(f"{path}: must be finite")
    return float(value)


def _agents(doc, path) -> tuple[AgentSpec, ...]:
    rows = _expect(doc, "agents", path, list)
    if not rows:
        raise ScenarioError("agents: at least one agent is required")
    agents = []
    for i, row in enumerate(rows):
        p = f"agents[{i}]."
        if not isinstance(row, dict):
            raise ScenarioError(f"agents[{i}]: expected a mapping")
        ident = _expect(row, "id", p, int)
        kind = _expect(row, "kind", p, str)
        if kind not in AGENT_KINDS:
            raise ScenarioError(f"{p}kind: must be one of {AGENT_KINDS}")
        start = _point(_expect(row, "start", p, list), p + "start")
        yaw = np.deg2rad(_number(row.get("yaw", 0.0), p + "yaw"))
        agents.append(AgentSpec(id=ident, kind=kind, start=start, yaw=float(yaw)))
    ids = [a.id for a in agents]
    if ids != list(range(1, len(agents) + 1)):
        raise ScenarioError("agents: ids must be 1..n in order")
    return tuple(agents)


def _topology(doc, n_agents) -> NetworkTopology:
    top = _expect(doc, "topology", "", dict)
    edges = _expect(top, "edges", "topology.", list)
    refs = _expect(top, "reference_agents", "topology.", list)
    try:
        return build_topology(n_agents, [tuple(e) for e in edges], refs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"topology: {exc}") from exc


def _gains(doc, n_edges, yaw_doc) -> NiGains:
    g = _expect(doc, "gains", "", dict)
    ref = _expect(g, "reference", "gains.", list)
    cons = _expect(g, "consensus", "gains.", list)
    if len(cons) != n_edges:
        raise ScenarioError(f"gains.consensus: expected {n_edges} pairs, got {len(cons)}")
    yaw_ref, yaw_cons = 0.0, ()
    if yaw_doc is not None:
        yaw_ref = _number(_expect(yaw_doc, "reference_gain", "yaw_control."),
                          "yaw_control.reference_gain")
        raw = _expect(yaw_doc, "consensus_gains", "yaw_control.", list)
        yaw_cons = tuple(_number(v, f"yaw_control.consensus_gains[{i}]")
                         for i, v in enumerate(raw))
    try:
        return NiGains(
            reference=(_number(ref[0], "gains.reference[0]"),
                       _number(ref[1], "gains.reference[1]")),
            consensus=tuple((_number(pair[0], f"gains.consensus[{i}][0]"),
                             _number(pair[1], f"gains.consensus[{i}][1]"))
                            for i, pair in enumerate(cons)),
            yaw_reference=yaw_ref,
            yaw_consensus=yaw_cons,
            adaptive=bool(g.get("adaptive", False)),
        )
    except (TypeError, IndexError) as exc:
        raise ScenarioError(f"gains: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(f"gains: {exc}") from exc


def _formation(doc, n_edges) -> FormationSpec:
    f = _expect(doc, "formation", "", dict)
    rows = _expect(f, "phases", "formation.", list)
    if not rows:
        raise ScenarioError("formation.phases: at least one phase is required")
    phases = []
    for i, row in enumerate(rows):
        p = f"formation.phases[{i}]."
        offsets = _expect(row, "offsets", p, list)
        if len(offsets) != n_edges:
            raise ScenarioError(f"{p}offsets: expected {n_edges} pairs, got {len(offsets)}")
        try:
            phases.append(FormationPhase(
                after_waypoints=int(_number(row.get("after_waypoints", 0),
                                            p + "after_waypoints")),
                offsets=tuple(_point(o, f"{p}offsets[{j}]") for j, o in enumerate(offsets)),
                transition_duration=_number(row.get("transition_duration", 2.0),
                                            p + "transition_duration"),
            ))
        except ValueError as exc:
            raise ScenarioError(f"{p}{exc}") from exc
    try:
        return FormationSpec(phases=tuple(phases))
    except ValueError as exc:
        raise ScenarioError(f"formation: {exc}") from exc


def _yaw_control(doc, n_agents) -> YawControlConfig | None:
    raw = doc.get("yaw_control")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ScenarioError("yaw_control: expected a mapping")
    edges = _expect(raw, "edges", "yaw_control.", list)
    refs = _expect(raw, "reference_agents", "yaw_control.", list)
    try:
        top = build_topology(n_agents, [tuple(e) for e in edges], refs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"yaw_control: {exc}") from exc
    offsets_deg = raw.get("offsets", [0.0] * top.n_edges)
    if len(offsets_deg) != top.n_edges:
        raise ScenarioError(f"yaw_control.offsets: expected {top.n_edges} values")
    target_deg = raw.get("target")
    if target_deg is not None:
        target_deg = _number(target_deg, "yaw_control.target")
    return YawControlConfig(
        topology=top,
        offsets=tuple(np.deg2rad(_number(v, f"yaw_control.offsets[{i}]"))
                      for i, v in enumerate(offsets_deg)),
        target=None if target_deg is None else float(np.deg2rad(target_deg)),
        corner_turns=bool(raw.get("corner_turns", False)),
        corner_entry=float(np.deg2rad(_number(raw.get("corner_entry", 30.0),
                                              "yaw_control.corner_entry"))),
        corner_exit=float(np.deg2rad(_number(raw.get("corner_exit", 3.0),
                                             "yaw_control.corner_exit"))),
    )


def _obstacles(doc) -> tuple[np.ndarray, ...]:
    rows = doc.get("obstacles", [])
    if rows is None:
        return ()
    polygons = []
    for i, poly in enumerate(rows):
        p = f"obstacles[{i}]"
        if not isinstance(poly, list) or len(poly) < 3:
            raise ScenarioError(f"{p}: expected a polygon with at least 3 vertices")
        polygons.append(np.array([_point(v, f"{p}[{j}]") for j, v in enumerate(poly)]))
    return tuple(polygons)


def scenario_from_dict(doc: dict, default_name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    name = str(doc.get("name", default_name))
    dt = _number(_expect(doc, "dt", "", (int, float)), "dt")
    duration = _number(_expect(doc, "duration", "", (int, float)), "duration")
    if dt <= 0 or duration <= 0:
        raise ScenarioError("dt/duration: must be positive")
    seed = _expect(doc, "seed", "", int, default=0, required=False)

    agents = _agents(doc, "")
    topology = _topology(doc, len(agents))
    yaw_doc = doc.get("yaw_control")
    gains = _gains(doc, topology.n_edges, yaw_doc)
    yaw_control = _yaw_control(doc, len(agents))
    if yaw_control is not None and len(gains.yaw_consensus) != yaw_control.topology.n_edges:
        raise ScenarioError("yaw_control.consensus_gains: must match the yaw edge count")

    wp = _expect(doc, "waypoints", "", dict)
    points = _expect(wp, "points", "waypoints.", list)
    if not points:
        raise ScenarioError("waypoints.points: at least one waypoint is required")
    waypoints = tuple(_point(p, f"waypoints.points[{i}]") for i, p in enumerate(points))
    radius = _number(wp.get("radius", 10.0), "waypoints.radius")
    if radius <= 0:
        raise ScenarioError("waypoints.radius: must be positive")
    glide = _number(wp.get("glide_s", 0.0), "waypoints.glide_s")
    if glide < 0:
        raise ScenarioError("waypoints.glide_s: must be nonnegative")
    cruise = _number(wp.get("cruise_speed", 0.0), "waypoints.cruise_speed")
    if cruise < 0:
        raise ScenarioError("waypoints.cruise_speed: must be nonnegative")
    ease = _number(wp.get("ease_s", 0.0), "waypoints.ease_s")
    if ease < 0:
        raise ScenarioError("waypoints.ease_s: must be nonnegative")
    if cruise > 0 and glide > 0:
        raise ScenarioError(
            "waypoints: glide_s and cruise_speed are mutually exclusive "
            "(one shapes travel time, the other travel speed)")
    if cruise > 0 and ease <= 0:
        raise ScenarioError("waypoints.ease_s: must be positive with cruise_speed")

    formation = _formation(doc, topology.n_edges)

    sens = doc.get("sensing", {}) or {}
    sensing = SensingConfig(
        fov=_number(sens.get("fov", 220.0), "sensing.fov"),
        look_ahead=_number(sens.get("look_ahead", 100.0), "sensing.look_ahead"),
        robot_radius=_number(sens.get("robot_radius", 32.0), "sensing.robot_radius"),
        collision_radius=_number(
            sens.get("collision_radius", 25.0), "sensing.collision_radius"),
        carrot_advance=_number(sens.get("carrot_advance", 60.0), "sensing.carrot_advance"),
    )
    ctl = doc.get("control", {}) or {}
    control = ControlConfig(
        mode=str(ctl.get("mode", "enhanced")),
        prediction_horizon_steps=int(ctl.get("prediction_horizon_steps", 1)),
        velocity_estimate_window=int(ctl.get("velocity_estimate_window", 1)),
        command_delay_steps=int(ctl.get("command_delay_steps", 0)),
    )
    sat = doc.get("saturation", {}) or {}
    try:
        saturation = SaturationLimits(
            ugv_speed=_number(sat.get("ugv_speed", 100.0), "saturation.ugv_speed"),
            uav_speed=_number(sat.get("uav_speed", 200.0), "saturation.uav_speed"),
            yaw_rate=_number(sat.get("yaw_rate", 1.5), "saturation.yaw_rate"),
        )
    except ValueError as exc:
        raise ScenarioError(f"saturation: {exc}") from exc

    noise_std = _number(doc.get("noise_std", 0.0), "noise_std")
    if noise_std < 0:
        raise ScenarioError("noise_std: must be nonnegative")
    settle_time = _number(doc.get("settle_time", 5.0), "settle_time")
    warmup = _number(doc.get("metrics_warmup_s", 0.0), "metrics_warmup_s")
    if warmup < 0:
        raise ScenarioError("metrics_warmup_s: must be nonnegative")

    return Scenario(
        name=name, dt=dt, duration=duration, seed=seed, agents=agents,
        topology=topology, gains=gains, waypoints=waypoints,
        waypoint_radius=radius, formation=formation,
        obstacles=_obstacles(doc), sensing=sensing, control=control,
        saturation=saturation, yaw_control=yaw_control, noise_std=noise_std,
        settle_time=settle_time, metrics_warmup_s=warmup,
        waypoint_glide_s=glide, waypoint_cruise_speed=cruise,
        waypoint_ease_s=ease,
    )


def shipped_scenarios() -> list[str]:
    root = importlib.resources.files("niformation").joinpath("scenarios")
    return sorted(p.name.removesuffix(".yaml") for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a YAML path or a shipped scenario name."""
    path = Path(source)
    if path.suffix in (".yaml", ".yml") or path.exists():
        text = path.read_text()
        default_name = path.stem
    else:
        name = str(source)
        resource = importlib.resources.files("niformation").joinpath(
            f"scenarios/{name}.yaml")
        if not resource.is_file():
            raise ScenarioError(
                f"unknown scenario '{name}'; shipped scenarios: "
                f"{', '.join(shipped_scenarios())}")
        text = resource.read_text()
        default_name = name
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from exc
    return scenario_from_dict(doc, default_name)
