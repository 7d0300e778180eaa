"""Central mission logic: modes per robot, coverage accounting, priorities.

mission_step is pure: wander FSM states and planned coverage paths travel
in an explicit CoordinationState value, so identical inputs always produce
identical command sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .control import (
    STOP,
    Command,
    ControlParams,
    OutsideBoundary,
    WanderState,
    boundary_reflect_policy,
    heading_controller,
    predict_pose,
    pure_pursuit,
    safety_governor,
)
from .geometry import Polygon, Polyline, point_in_polygon, wrap_angle
from .perception import Track
from .sim import Pose2, integrate_unicycle


class NonConvexPolygon(ValueError):
    pass


class LaneWidthTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class FollowPath:
    path: Polyline


@dataclass(frozen=True)
class BoundedWander:
    boundary: Polygon


@dataclass(frozen=True)
class Coverage:
    poly: Polygon
    lane_width: float
    tool_radius: float


@dataclass(frozen=True)
class Idle:
    pass


Mode = FollowPath | BoundedWander | Coverage | Idle


@dataclass(frozen=True)
class Mission:
    modes: Mapping[int, Mode]
    arena: Polygon
    d_min: float = 0.5
    horizon_s: float = 2.0


@dataclass(frozen=True)
class CoverageGrid:
    origin: tuple[float, float]
    cell_size: float
    covered: np.ndarray  # (rows, cols) bool
    mask: np.ndarray  # (rows, cols) bool, cell center inside the polygon

    def __post_init__(self):
        self.covered.setflags(write=False)
        self.mask.setflags(write=False)

    @classmethod
    def from_polygon(cls, poly: Polygon, cell_size: float) -> "CoverageGrid":
        xs = poly.vertices[:, 0]
        ys = poly.vertices[:, 1]
        x0, y0 = float(xs.min()), float(ys.min())
        cols = max(1, int(math.ceil((float(xs.max()) - x0) / cell_size)))
        rows = max(1, int(math.ceil((float(ys.max()) - y0) / cell_size)))
        mask = np.zeros((rows, cols), dtype=bool)
        for r in range(rows):
            cy = y0 + (r + 0.5) * cell_size
            for c in range(cols):
                cx = x0 + (c + 0.5) * cell_size
                mask[r, c] = point_in_polygon(poly, (cx, cy))
        return cls((x0, y0), cell_size, np.zeros((rows, cols), dtype=bool), mask)

    @property
    def coverage_fraction(self) -> float:
        total = int(self.mask.sum())
        if total == 0:
            return 0.0
        return float((self.covered & self.mask).sum()) / total


def update_coverage(grid: CoverageGrid, pose: Pose2, tool_radius: float) -> CoverageGrid:
    """Mark masked cells whose centers lie within tool_radius of the pose."""
    rows, cols = grid.mask.shape
    cs = grid.cell_size
    c_lo = max(0, int((pose.x - tool_radius - grid.origin[0]) / cs) - 1)
    c_hi = min(cols, int((pose.x + tool_radius - grid.origin[0]) / cs) + 2)
    r_lo = max(0, int((pose.y - tool_radius - grid.origin[1]) / cs) - 1)
    r_hi = min(rows, int((pose.y + tool_radius - grid.origin[1]) / cs) + 2)
    if c_lo >= c_hi or r_lo >= r_hi:
        return grid
    cxs = grid.origin[0] + (np.arange(c_lo, c_hi) + 0.5) * cs
    cys = grid.origin[1] + (np.arange(r_lo, r_hi) + 0.5) * cs
    gx, gy = np.meshgrid(cxs, cys)
    hit = (gx - pose.x) ** 2 + (gy - pose.y) ** 2 <= tool_radius**2
    hit &= grid.mask[r_lo:r_hi, c_lo:c_hi]
    if not hit.any():
        return grid
    covered = grid.covered.copy()
    covered[r_lo:r_hi, c_lo:c_hi] |= hit
    return replace(grid, covered=covered)


def _clip_lane(vertices: np.ndarray, y: float) -> tuple[float, float] | None:
    """Intersection interval of the horizontal line at y with a convex hull."""
    xs = []
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if (y0 > y) == (y1 > y):
            continue
        t = (y - y0) / (y1 - y0)
        xs.append(x0 + t * (x1 - x0))
    if len(xs) < 2:
        return None
    return min(xs), max(xs)


def plan_coverage(poly: Polygon, lane_width: float, heading: float = 0.0) -> Polyline:
    """Boustrophedon lanes over a convex polygon, lanes along `heading`."""
    if not poly.is_convex():
        raise NonConvexPolygon("coverage planning requires a convex polygon")
    if lane_width <= 0:
        raise ValueError("lane_width must be positive")
    c, s = math.cos(-heading), math.sin(-heading)
    rot = np.array([[c, -s], [s, c]])
    v = poly.vertices @ rot.T
    y_min = float(v[:, 1].min())
    y_max = float(v[:, 1].max())
    points = []
    k = 0
    while True:
        y = y_min + lane_width / 2.0 + k * lane_width
        if y >= y_max:
            break
        interval = _clip_lane(v, y)
        if interval is not None and interval[1] - interval[0] > 1e-9:
            x_lo, x_hi = interval
            if k % 2 == 0:
                points.extend([(x_lo, y), (x_hi, y)])
            else:
                points.extend([(x_hi, y), (x_lo, y)])
        k += 1
    if not points:
        raise LaneWidthTooLarge(f"no lane of width {lane_width} fits the polygon")
    back = np.array([[c, s], [-s, c]])
    return Polyline(np.asarray(points) @ back.T)


def _min_pair_distance(a: Track, ca: Command, b: Track, cb: Command, horizon_s: float) -> float:
    best = math.inf
    for i in range(10):
        s = horizon_s * i / 9.0
        pa = integrate_unicycle(a.pose_est, ca.v, ca.omega, s) if s > 0 else a.pose_est
        pb = integrate_unicycle(b.pose_est, cb.v, cb.omega, s) if s > 0 else b.pose_est
        best = min(best, math.hypot(pa.x - pb.x, pa.y - pb.y))
    return best


def deconflict(
    tracks: Sequence[Track],
    desired: Mapping[int, Command],
    d_min: float,
    horizon_s: float,
    body_radius: float = 0.2,
) -> dict[int, Command]:
    """Stop the higher-id robot of any pair predicted to close too much.

    Two passes: the first stops against desired motions, the second
    re-checks with those stops in place to catch knock-on conflicts. The
    pass-1 stopped set is never released.
    """
    by_id = {}
    for tr in tracks:
        cur = by_id.get(tr.robot_id)
        if cur is None or tr.last_update > cur.last_update:
            by_id[tr.robot_id] = tr
    ids = sorted(i for i in desired if i in by_id)
    threshold = d_min + 2.0 * body_radius
    commands = dict(desired)
    stopped: set[int] = set()
    for _ in range(2):
        new_stops = set()
        for i_pos, i in enumerate(ids):
            for j in ids[i_pos + 1 :]:
                if j in stopped or j in new_stops:
                    continue
                d = _min_pair_distance(
                    by_id[i], commands[i], by_id[j], commands[j], horizon_s
                )
                if d < threshold:
                    new_stops.add(j)
        for j in new_stops:
            commands[j] = STOP
        stopped |= new_stops
        if not new_stops:
            break
    return commands


@dataclass(frozen=True)
class CoordinationState:
    wander: Mapping[int, WanderState] = field(default_factory=dict)
    coverage_paths: Mapping[int, Polyline] = field(default_factory=dict)


def _recover_toward(pose: Pose2, target: tuple[float, float], p: ControlParams) -> Command:
    theta_star = math.atan2(target[1] - pose.y, target[0] - pose.x)
    if abs(wrap_angle(theta_star - pose.theta)) > p.heading_tol_rad:
        return Command(0.0, heading_controller(pose.theta, theta_star, p))
    return Command(p.v_nom, 0.0)


def mission_step(
    mission: Mission,
    tracks: Sequence[Track],
    t: float,
    params: ControlParams,
    state: CoordinationState | None = None,
    obstacles: Sequence[tuple[tuple[float, float], tuple[float, float], float]] = (),
    body_radius: float = 0.2,
) -> tuple[dict[int, Command], CoordinationState]:
    """One coordinator tick: predict, dispatch per mode, govern, deconflict.

    Robots without a confirmed or coasting track are held stopped. A robot
    found outside its wander boundary is steered back toward the boundary
    centroid instead of raising.
    """
    state = state or CoordinationState()
    usable = [tr for tr in tracks if tr.status in ("confirmed", "coasting")]
    newest: dict[int, Track] = {}
    for tr in usable:
        cur = newest.get(tr.robot_id)
        if cur is None or tr.last_update > cur.last_update:
            newest[tr.robot_id] = tr

    wander = dict(state.wander)
    coverage_paths = dict(state.coverage_paths)
    commands: dict[int, Command] = {}
    for robot_id, mode in sorted(mission.modes.items()):
        track = newest.get(robot_id)
        if track is None or isinstance(mode, Idle):
            commands[robot_id] = STOP
            continue
        pose = predict_pose(track, params.tau_s)
        if isinstance(mode, FollowPath):
            cmd = pure_pursuit(pose, mode.path, params)
        elif isinstance(mode, BoundedWander):
            try:
                cmd, new_ws = boundary_reflect_policy(
                    pose, mode.boundary, params, wander.get(robot_id)
                )
                wander[robot_id] = new_ws
            except OutsideBoundary:
                cmd = _recover_toward(pose, mode.boundary.centroid(), params)
                wander[robot_id] = WanderState()
        elif isinstance(mode, Coverage):
            path = coverage_paths.get(robot_id)
            if path is None:
                path = plan_coverage(mode.poly, mode.lane_width)
                coverage_paths[robot_id] = path
            cmd = pure_pursuit(pose, path, params)
        else:
            raise TypeError(f"unknown mission mode {mode!r}")
        others = [tr for rid, tr in newest.items() if rid != robot_id]
        commands[robot_id] = safety_governor(
            cmd, track, others, obstacles, params, body_radius
        )
    resolved = deconflict(usable, commands, mission.d_min, mission.horizon_s, body_radius)
    return resolved, CoordinationState(wander=wander, coverage_paths=coverage_paths)
