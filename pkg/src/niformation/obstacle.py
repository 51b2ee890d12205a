"""Geometric obstacle avoidance: observations, grouping, and replanning.

Obstacles are sensed as boundary polygons clipped to each viewer's circular
sensor footprint, then conservatively wrapped in circles (polygon centroid,
radius to the farthest observed vertex).  Nearby circles whose boundary gap
is too narrow for a robot merge into enclosing circles.  Against the merged
circles two maneuver families are planned in the frame of the reference
agent's motion:

* single obstacle (mode 1): whichever robot's straight run is blocked dodges
  to a lateral line clearing the circle by its own radius plus a margin --
  a follower adjusts its own slot (strategy 1); the reference agent detours
  while the followers hold their lateral stations (strategy 2);
* facing pair (mode 2): the gap between the two inner boundary points,
  projected onto the followers' line, classifies the maneuver -- wide enough
  for the whole formation: pass through unchanged (sub-case 1); narrower:
  the followers squeeze onto pulled-in stations while the reference agent
  rides the gap midline (sub-case 2); narrower than the formation but wider
  than one robot: a single-file queue, which this toolkit does not plan
  (sub-case 3, rejected).

All coordinates are centimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA = 1e-9
DEFAULT_MARGIN = 2.0
DEFAULT_GROUP_RADIUS_CAP = 150.0
DEFAULT_GROUP_MAX_MEMBERS = 3
FOOTPRINT_SIDES = 64

MODE_SINGLE = 1
MODE_FACING = 2
SUB_PASS = 1
SUB_SQUEEZE = 2
SUB_QUEUE = 3
STRATEGY_FOLLOWER = 1
STRATEGY_REFERENCE = 2


class UnsupportedManeuver(ValueError):
    """The detected geometry calls for a maneuver this planner does not do."""


@dataclass(frozen=True)
class ObstacleCircle:
    """Conservative circular wrap of one or more observed obstacles."""

    center: tuple[float, float]
    radius: float
    members: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True)
class RobotCircle:
    """A robot's planar footprint."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True)
class AvoidanceEvent:
    """A planned avoidance maneuver in the reference agent's path frame.

    `path_origin`/`path_along`/`path_lateral` fix the frame (origin at the
    reference agent when the event fired; lateral is along +90 degrees from
    the motion).  `master_lateral` is the lateral line the reference agent
    should ride while the event is active (None: keep its own line);
    `slave_laterals` are absolute lateral stations per steered follower id.
    `geometry` carries the named construction points for logs.
    """

    mode: int
    obstacles: tuple[ObstacleCircle, ...]
    path_origin: tuple[float, float]
    path_along: tuple[float, float]
    path_lateral: tuple[float, float]
    sub_case: int | None = None
    strategy: int | None = None
    threatened: int | None = None                 # 1-based agent id
    master_lateral: float | None = None
    slave_laterals: dict[int, float] = field(default_factory=dict)
    geometry: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_world(self, along: float, lateral: float) -> np.ndarray:
        return (np.asarray(self.path_origin)
                + along * np.asarray(self.path_along)
                + lateral * np.asarray(self.path_lateral))

    def frame_coords(self, point) -> tuple[float, float]:
        d = np.asarray(point, dtype=float) - np.asarray(self.path_origin)
        return (float(d @ np.asarray(self.path_along)),
                float(d @ np.asarray(self.path_lateral)))


# ----------------------------------------------------------- observations

def polygon_area_centroid(vertices) -> tuple[float, np.ndarray]:
    """Signed shoelace area and centroid; degenerate polygons fall back to
    the vertex mean."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if v.shape[0] < 3:
        return 0.0, v.mean(axis=0)
    x, y = v[:, 0], v[:, 1]
    xr, yr = np.roll(x, -1), np.roll(y, -1)
    cross = x * yr - xr * y
    area = 0.5 * cross.sum()
    if abs(area) < DEGENERATE_AREA:
        return 0.0, v.mean(axis=0)
    cx = ((x + xr) * cross).sum() / (6.0 * area)
    cy = ((y + yr) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


def circle_from_observation(vertices, members=()) -> ObstacleCircle:
    """Wrap an observed boundary polygon: centroid center, radius to the
    farthest vertex."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if v.shape[0] == 0:
        raise ValueError("observation has no vertices")
    _, centroid = polygon_area_centroid(v)
    radius = float(np.linalg.norm(v - centroid, axis=1).max())
    return ObstacleCircle(center=tuple(centroid), radius=radius,
                          members=tuple(members))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def clip_polygon_to_disc(vertices, center, radius,
                         sides: int = FOOTPRINT_SIDES) -> np.ndarray:
    """Clip a polygon to the regular `sides`-gon inscribed approximation of
    the disc (Sutherland-Hodgman against each polygon edge)."""
    c = np.asarray(center, dtype=float)
    theta = 2.0 * np.pi * np.arange(sides) / sides
    clip = c + radius * np.column_stack([np.cos(theta), np.sin(theta)])
    output = [np.asarray(p, dtype=float) for p in np.asarray(vertices, dtype=float).reshape(-1, 2)]
    for k in range(sides):
        a, b = clip[k], clip[(k + 1) % sides]
        edge = b - a
        if not output:
            return np.zeros((0, 2))
        polygon, output = output, []
        prev = polygon[-1]
        prev_in = _cross2(edge, prev - a) >= 0.0
        for point in polygon:
            cur_in = _cross2(edge, point - a) >= 0.0
            if cur_in != prev_in:
                d = point - prev
                denom = _cross2(edge, d)
                t = _cross2(edge, a - prev) / denom if denom else 0.0
                output.append(prev + t * d)
            if cur_in:
                output.append(point)
            prev, prev_in = point, cur_in
    return np.array(output) if output else np.zeros((0, 2))


def visible_obstacles(polygons, viewer, fov: float) -> list[ObstacleCircle]:
    """Wrap every polygon's portion visible inside the viewer footprint.

    The footprint is a disc of diameter `fov` centered on the viewer.
    Returns one circle per polygon with a non-degenerate visible portion,
    tagged with the polygon's index.
    """
    found = []
    for idx, poly in enumerate(polygons):
        part = clip_polygon_to_disc(poly, viewer, fov / 2.0)
        if part.shape[0] >= 3:
            found.append(circle_from_observation(part, members=(idx,)))
    return found


# ---------------------------------------------------------------- grouping

def enclosing_circle(one: ObstacleCircle, two: ObstacleCircle) -> ObstacleCircle:
    """Smallest circle containing both input circles."""
    c1, c2 = np.asarray(one.center), np.asarray(two.center)
    gap = float(np.linalg.norm(c2 - c1))
    members = tuple(one.members) + tuple(two.members)
    if gap + two.radius <= one.radius:
        return ObstacleCircle(one.center, one.radius, members)
    if gap + one.radius <= two.radius:
        return ObstacleCircle(two.center, two.radius, members)
    radius = 0.5 * (gap + one.radius + two.radius)
    direction = (c2 - c1) / gap
    center = c1 + (radius - one.radius) * direction
    return ObstacleCircle(tuple(center), radius, members)


def group_or_separate(one: ObstacleCircle, two: ObstacleCircle,
                      robot_diameter: float) -> ObstacleCircle | None:
    """Merge the pair when a robot cannot fit through their boundary gap."""
    gap = float(np.linalg.norm(np.asarray(two.center) - np.asarray(one.center)))
    if gap < robot_diameter + one.radius + two.radius:
        return enclosing_circle(one, two)
    return None


def group_all(circles, robot_diameter: float,
              radius_cap: float = DEFAULT_GROUP_RADIUS_CAP,
              max_members: int = DEFAULT_GROUP_MAX_MEMBERS) -> list[ObstacleCircle]:
    """Merge circles pairwise to a fixpoint, tightest pairs first.

    A merge happens only when the pair is too narrow to pass, the merged
    radius stays within `radius_cap`, and the merged member count stays
    within `max_members`.
    """
    pool = [c if c.members else ObstacleCircle(c.center, c.radius, (i,))
            for i, c in enumerate(circles)]
    while True:
        best = None
        for i in range(len(pool)):
            for j in range(i + 1, len(pool)):
                a, b = pool[i], pool[j]
                merged = group_or_separate(a, b, robot_diameter)
                if merged is None:
                    continue
                if merged.radius > radius_cap:
                    continue
                if len(merged.members) > max_members:
                    continue
                boundary_gap = (float(np.linalg.norm(np.asarray(b.center)
                                                     - np.asarray(a.center)))
                                - a.radius - b.radius)
                if best is None or boundary_gap < best[0]:
                    best = (boundary_gap, i, j, merged)
        if best is None:
            return pool
        _, i, j, merged = best
        pool = [c for k, c in enumerate(pool) if k not in (i, j)] + [merged]


# --------------------------------------------------------------- detection

def point_segment_distance(point, seg_a, seg_b) -> float:
    p = np.asarray(point, dtype=float)
    a = np.asarray(seg_a, dtype=float)
    b = np.asarray(seg_b, dtype=float)
    d = b - a
    denom = float(d @ d)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def segment_blocked(seg_a, seg_b, circle: ObstacleCircle, robot_radius: float) -> bool:
    return point_segment_distance(circle.center, seg_a, seg_b) < circle.radius + robot_radius


def _path_frame(origin, target):
    d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        return None
    along = d / norm
    lateral = np.array([-along[1], along[0]])
    return along, lateral


def detect_mode(positions, targets, radii, master_index: int, obstacles,
                fov: float, look_ahead: float,
                margin: float = DEFAULT_MARGIN) -> AvoidanceEvent | None:
    """Detect and plan the highest-priority avoidance maneuver, if any.

    positions/targets are (n, 2): each robot's location and the point its
    straight run currently aims at; radii is length n.  `obstacles` are the
    already-grouped circles.  A facing pair outranks a single obstacle.
    Returns None when nothing within range threatens anyone.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    tgt = np.asarray(targets, dtype=float).reshape(-1, 2)
    rad = np.asarray(radii, dtype=float).reshape(-1)
    n = pos.shape[0]
    master_pos = pos[master_index]
    frame = _path_frame(master_pos, tgt[master_index])
    if frame is None or not obstacles:
        return None
    along, lateral = frame

    def coords(point):
        d = np.asarray(point, dtype=float) - master_pos
        return float(d @ along), float(d @ lateral)

    followers = [i for i in range(n) if i != master_index]

    # ---- facing pair (mode 2)
    if len(followers) == 2:
        pair = _detect_facing_pair(pos, tgt, rad, master_index, followers,
                                   obstacles, fov, look_ahead, margin,
                                   master_pos, along, lateral, coords)
        if pair is not None:
            return pair

    # ---- single obstacle (mode 1)
    for robot in [master_index] + followers:
        for circle in obstacles:
            s_oc, _ = coords(circle.center)
            if s_oc <= 0:
                continue  # behind the formation's motion
            reach = float(np.linalg.norm(pos[robot] - np.asarray(circle.center)))
            if reach - circle.radius > look_ahead:
                continue
            if not segment_blocked(pos[robot], tgt[robot], circle, rad[robot]):
                continue
            others_near = any(
                float(np.linalg.norm(np.asarray(c.center) - np.asarray(circle.center))) <= fov / 2.0
                for c in obstacles if c is not circle)
            if others_near:
                continue  # not an isolated single: leave it to the pair logic
            return _plan_single(pos, rad, master_index, robot, circle, margin,
                                master_pos, along, lateral, coords)
    return None


def _detect_facing_pair(pos, tgt, rad, master_index, followers, obstacles,
                        fov, look_ahead, margin, master_pos, along, lateral,
                        coords):
    candidates = []
    for idx, circle in enumerate(obstacles):
        s, l = coords(circle.center)
        if s <= 0:
            continue
        reach = float(np.linalg.norm(master_pos - np.asarray(circle.center)))
        if reach - circle.radius <= look_ahead + rad[master_index]:
            candidates.append((idx, circle, s, l))
    for i in range(len(candidates)):
        for j in range(i + 1, len(candidates)):
            _, c1, _, l1 = candidates[i]
            _, c2, _, l2 = candidates[j]
            if l1 * l2 >= 0:
                continue  # same side: not a facing pair
            span = float(np.linalg.norm(np.asarray(c2.center) - np.asarray(c1.center)))
            if span >= fov:
                continue
            return _plan_facing(pos, rad, master_index, followers, c1, c2,
                                margin, master_pos, along, lateral, coords)
    return None


def _plan_facing(pos, rad, master_index, followers, c1, c2, margin,
                 master_pos, along, lateral, coords) -> AvoidanceEvent:
    p1, p2 = np.asarray(c1.center), np.asarray(c2.center)
    axis = p2 - p1
    span = float(np.linalg.norm(axis))
    axis = axis / span
    inner_a = p1 + c1.radius * axis
    inner_b = p2 - c2.radius * axis

    s1, s2 = followers
    sc1, sc2 = pos[s1], pos[s2]
    line = sc2 - sc1
    line_len = float(np.linalg.norm(line))
    if line_len < 1e-9:
        raise UnsupportedManeuver("followers are co-located; no line to squeeze on")
    line = line / line_len
    sp_a = sc1 + float((inner_a - sc1) @ line) * line
    sp_b = sc1 + float((inner_b - sc1) @ line) * line
    gap = float(np.linalg.norm(sp_b - sp_a))

    master_diameter = 2.0 * rad[master_index]
    squeeze_floor = master_diameter + rad[s1] + rad[s2]
    pass_floor = line_len + rad[s1] + rad[s2]
    mid_c = 0.5 * (inner_a + inner_b)

    geometry = {"inner_a": tuple(inner_a), "inner_b": tuple(inner_b),
                "line_a": tuple(sp_a), "line_b": tuple(sp_b),
                "mid": tuple(mid_c)}
    common = dict(mode=MODE_FACING, obstacles=(c1, c2),
                  path_origin=tuple(master_pos), path_along=tuple(along),
                  path_lateral=tuple(lateral), geometry=geometry)

    if gap > pass_floor:
        return AvoidanceEvent(sub_case=SUB_PASS, **common)
    if gap > squeeze_floor:
        mid_line = 0.5 * (sp_a + sp_b)
        # assign each follower the nearer projected point, then pull both
        # stations inward by the follower radius plus the margin
        if (np.linalg.norm(sc1 - sp_a) + np.linalg.norm(sc2 - sp_b)
                <= np.linalg.norm(sc1 - sp_b) + np.linalg.norm(sc2 - sp_a)):
            assignment = [(s1, sp_a), (s2, sp_b)]
        else:
            assignment = [(s1, sp_b), (s2, sp_a)]
        slave_laterals = {}
        for robot, point in assignment:
            inward = mid_line - point
            inward_len = float(np.linalg.norm(inward))
            station = point + (rad[robot] + margin) * (inward / inward_len)
            slave_laterals[robot + 1] = coords(station)[1]
        _, master_lat = coords(mid_c)
        return AvoidanceEvent(sub_case=SUB_SQUEEZE, master_lateral=master_lat,
                              slave_laterals=slave_laterals, **common)
    if gap > master_diameter:
        raise UnsupportedManeuver(
            f"gap {gap:.1f} cm only admits single-file passage; queueing is "
            f"not planned")
    raise UnsupportedManeuver(f"gap {gap:.1f} cm is narrower than the "
                              f"reference agent's diameter")


def _plan_single(pos, rad, master_index, robot, circle, margin, master_pos,
                 along, lateral, coords) -> AvoidanceEvent:
    s_oc, l_oc = coords(circle.center)
    clearance = circle.radius + rad[robot] + margin
    common = dict(mode=MODE_SINGLE, obstacles=(circle,),
                  path_origin=tuple(master_pos), path_along=tuple(along),
                  path_lateral=tuple(lateral), threatened=robot + 1)

    if robot == master_index:
        side = 1.0 if abs(l_oc) < 1e-9 else -float(np.sign(l_oc))
        master_lat = l_oc + side * clearance
        geometry = {"detour": tuple(np.asarray(master_pos)
                                    + s_oc * np.asarray(along)
                                    + master_lat * np.asarray(lateral))}
        # followers hold their current lateral stations while the reference
        # agent sidesteps
        slave_laterals = {i + 1: coords(pos[i])[1]
                          for i in range(pos.shape[0]) if i != master_index}
        return AvoidanceEvent(strategy=STRATEGY_REFERENCE,
                              master_lateral=master_lat,
                              slave_laterals=slave_laterals,
                              geometry=geometry, **common)

    _, l_robot = coords(pos[robot])
    rel = l_robot - l_oc
    side = 1.0 if abs(rel) < 1e-9 else float(np.sign(rel))
    station = l_oc + side * clearance
    geometry = {"station": tuple(np.asarray(master_pos)
                                 + s_oc * np.asarray(along)
                                 + station * np.asarray(lateral))}
    return AvoidanceEvent(strategy=STRATEGY_FOLLOWER,
                          slave_laterals={robot + 1: station},
                          geometry=geometry, **common)


def event_cleared(event: AvoidanceEvent, master_position, fov: float) -> bool:
    """The maneuver ends once every involved obstacle has left the reference
    agent's sensor footprint and fallen behind its progress along the
    original path."""
    p = np.asarray(master_position, dtype=float)
    s_master, _ = event.frame_coords(p)
    for circle in event.obstacles:
        dist = float(np.linalg.norm(p - np.asarray(circle.center)))
        if dist <= fov / 2.0:
            return False
        s_oc, _ = event.frame_coords(circle.center)
        if s_oc >= s_master:
            return False
    return True
