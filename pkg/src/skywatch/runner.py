"""Headless scenario execution: config, fixed-step loop, metrics, traces.

Determinism rules: one integer step counter drives every schedule, all
randomness comes from seeds derived by hashing stable labels, and metrics
are computed from the same JSON-shaped event stream that goes into the
trace file, so replaying a trace reproduces the report exactly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from .control import Command, ControlParams
from .coordination import (
    BoundedWander,
    CoordinationState,
    Coverage,
    CoverageGrid,
    FollowPath,
    Idle,
    Mission,
    Mode,
    mission_step,
    update_coverage,
)
from .geometry import (
    Homography,
    Polygon,
    Polyline,
    distance_to_boundary,
    point_in_polygon,
    project_onto_polyline,
)
from .link import Channel, CommandFrame, decode_command, encode_command
from .perception import TrackerParams, detect_markers, update_tracks
from .sim import (
    FrameRenderer,
    Obstacle,
    Pose2,
    RobotState,
    WorldState,
    dump_frame,
    schedule_command,
    step_world,
)


class InvalidConfig(ValueError):
    pass


class ReplayError(ValueError):
    pass


def derive_seed(master: int, label: str) -> int:
    """Stable 64-bit child seed; hashing keeps consumers independent."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Rates:
    sim_dt: float = 0.01
    frame_hz: float = 20.0
    control_hz: float = 10.0


@dataclass(frozen=True)
class LinkParams:
    base_latency_s: float = 0.0
    jitter_s: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class CameraParams:
    h: Homography
    width: int
    height: int


@dataclass(frozen=True)
class ScenarioConfig:
    arena: Polygon
    robots: tuple[RobotState, ...]
    camera: CameraParams
    mission: Mission
    obstacles: tuple[Obstacle, ...] = ()
    ground_markings: tuple = ()
    rates: Rates = Rates()
    perception: TrackerParams = TrackerParams()
    min_blob_px: int = 4
    control: ControlParams = ControlParams()
    link: LinkParams = LinkParams()
    coverage_cell_m: float = 0.25
    duration_s: float = 10.0
    seed: int = 0


def _steps_per_tick(sim_dt: float, hz: float, path: str) -> int:
    period = 1.0 / hz
    ratio = period / sim_dt
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9:
        raise InvalidConfig(f"{path}: sim_dt {sim_dt} does not divide the {hz} Hz period")
    return n


def _req(d: Mapping, key: str, path: str):
    if key not in d:
        raise InvalidConfig(f"{path}.{key}: missing")
    return d[key]


def _points(raw, path: str) -> np.ndarray:
    try:
        pts = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path}: not a number array ({exc})") from exc
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidConfig(f"{path}: expected a list of [x, y] pairs")
    if not np.isfinite(pts).all():
        raise InvalidConfig(f"{path}: coordinates must be finite")
    return pts


def _mode_from_dict(d: Mapping, path: str) -> Mode:
    kind = _req(d, "type", path)
    try:
        if kind == "idle":
            return Idle()
        if kind == "follow_path":
            return FollowPath(Polyline(_points(_req(d, "points", path), f"{path}.points")))
        if kind == "bounded_wander":
            return BoundedWander(Polygon(_points(_req(d, "points", path), f"{path}.points")))
        if kind == "coverage":
            return Coverage(
                Polygon(_points(_req(d, "points", path), f"{path}.points")),
                float(_req(d, "lane_width", path)),
                float(_req(d, "tool_radius", path)),
            )
    except InvalidConfig:
        raise
    except ValueError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    raise InvalidConfig(f"{path}.type: unknown mode {kind!r}")


def _mode_to_dict(mode: Mode) -> dict:
    if isinstance(mode, Idle):
        return {"type": "idle"}
    if isinstance(mode, FollowPath):
        return {"type": "follow_path", "points": mode.path.points.tolist()}
    if isinstance(mode, BoundedWander):
        return {"type": "bounded_wander", "points": mode.boundary.vertices.tolist()}
    if isinstance(mode, Coverage):
        return {
            "type": "coverage",
            "points": mode.poly.vertices.tolist(),
            "lane_width": mode.lane_width,
            "tool_radius": mode.tool_radius,
        }
    raise TypeError(f"unknown mode {mode!r}")


def load_config(doc: Mapping[str, Any]) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a JSON-shaped mapping."""
    if not isinstance(doc, Mapping):
        raise InvalidConfig(": top level must be an object")
    try:
        arena = Polygon(_points(_req(doc, "arena", ""), "arena"))
    except InvalidConfig:
        raise
    except ValueError as exc:
        raise InvalidConfig(f"arena: {exc}") from exc

    cam_doc = _req(doc, "camera", "")
    h_raw = _req(cam_doc, "homography", "camera")
    try:
        h = Homography(np.asarray(h_raw, dtype=float).reshape(3, 3))
    except ValueError as exc:
        raise InvalidConfig(f"camera.homography: {exc}") from exc
    width = int(_req(cam_doc, "width", "camera"))
    height = int(_req(cam_doc, "height", "camera"))
    if width <= 0 or height <= 0:
        raise InvalidConfig("camera.width: frame size must be positive")
    camera = CameraParams(h, width, height)

    robots = []
    seen_ids = set()
    for i, rd in enumerate(_req(doc, "robots", "")):
        path = f"robots[{i}]"
        rid = int(_req(rd, "id", path))
        if rid in seen_ids:
            raise InvalidConfig(f"{path}.id: duplicate robot id {rid}")
        seen_ids.add(rid)
        pose_raw = _req(rd, "pose", path)
        if len(pose_raw) != 3:
            raise InvalidConfig(f"{path}.pose: expected [x, y, theta]")
        try:
            robots.append(
                RobotState(
                    id=rid,
                    pose=Pose2(*[float(v) for v in pose_raw]),
                    v_max=float(rd.get("v_max", 1.0)),
                    omega_max=float(rd.get("omega_max", 2.0)),
                    body_radius=float(rd.get("body_radius", 0.2)),
                    front_marker_offset=float(rd.get("front_marker_offset", 0.15)),
                    rear_marker_offset=float(rd.get("rear_marker_offset", -0.15)),
                    marker_radius=float(rd.get("marker_radius", 0.06)),
                )
            )
        except ValueError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
    if not robots:
        raise InvalidConfig("robots: at least one robot required")

    obstacles = []
    for i, od in enumerate(doc.get("obstacles", [])):
        path = f"obstacles[{i}]"
        try:
            obstacles.append(
                Obstacle(
                    radius=float(_req(od, "radius", path)),
                    script=np.asarray(_req(od, "script", path), dtype=float),
                )
            )
        except InvalidConfig:
            raise
        except ValueError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc

    markings = []
    for i, md in enumerate(doc.get("ground_markings", [])):
        path = f"ground_markings[{i}]"
        kind = _req(md, "type", path)
        pts = _points(_req(md, "points", path), f"{path}.points")
        try:
            if kind == "polygon":
                markings.append(Polygon(pts))
            elif kind == "polyline":
                markings.append(Polyline(pts))
            else:
                raise InvalidConfig(f"{path}.type: unknown marking type {kind!r}")
        except InvalidConfig:
            raise
        except ValueError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc

    rates_doc = doc.get("rates", {})
    rates = Rates(
        sim_dt=float(rates_doc.get("sim_dt", 0.01)),
        frame_hz=float(rates_doc.get("frame_hz", 20.0)),
        control_hz=float(rates_doc.get("control_hz", 10.0)),
    )
    if rates.sim_dt <= 0:
        raise InvalidConfig("rates.sim_dt: must be positive")
    _steps_per_tick(rates.sim_dt, rates.frame_hz, "rates.frame_hz")
    _steps_per_tick(rates.sim_dt, rates.control_hz, "rates.control_hz")

    perc_doc = doc.get("perception", {})
    try:
        perception = TrackerParams(
            alpha=float(perc_doc.get("alpha", 0.5)),
            beta=float(perc_doc.get("beta", 0.2)),
            gate_m=float(perc_doc.get("gate_m", 0.5)),
            coast_max=int(perc_doc.get("coast_max", 10)),
        )
    except ValueError as exc:
        raise InvalidConfig(f"perception: {exc}") from exc
    min_blob_px = int(perc_doc.get("min_blob_px", 4))

    ctrl_doc = dict(doc.get("control", {}))
    try:
        control = ControlParams(**ctrl_doc)
    except TypeError as exc:
        raise InvalidConfig(f"control: {exc}") from exc
    except ValueError as exc:
        raise InvalidConfig(f"control: {exc}") from exc

    link_doc = doc.get("link", {})
    link = LinkParams(
        base_latency_s=float(link_doc.get("base_latency_s", 0.0)),
        jitter_s=float(link_doc.get("jitter_s", 0.0)),
        drop_prob=float(link_doc.get("drop_prob", 0.0)),
        seed=int(link_doc.get("seed", 0)),
    )
    if not 0.0 <= link.drop_prob <= 1.0:
        raise InvalidConfig("link.drop_prob: must be in [0, 1]")
    if link.base_latency_s < 0 or link.jitter_s < 0:
        raise InvalidConfig("link.base_latency_s: latency and jitter must be non-negative")

    mission_doc = _req(doc, "mission", "")
    modes: dict[int, Mode] = {}
    for key, md in _req(mission_doc, "modes", "mission").items():
        path = f"mission.modes.{key}"
        try:
            rid = int(key)
        except ValueError:
            raise InvalidConfig(f"{path}: robot id keys must be integers") from None
        if rid not in seen_ids:
            raise InvalidConfig(f"{path}: unknown robot id {rid}")
        modes[rid] = _mode_from_dict(md, path)
    mission = Mission(
        modes=modes,
        arena=arena,
        d_min=float(mission_doc.get("d_min", 0.5)),
        horizon_s=float(mission_doc.get("horizon_s", 2.0)),
    )

    duration_s = float(doc.get("duration_s", 10.0))
    if duration_s <= 0:
        raise InvalidConfig("duration_s: must be positive")

    return ScenarioConfig(
        arena=arena,
        robots=tuple(robots),
        camera=camera,
        mission=mission,
        obstacles=tuple(obstacles),
        ground_markings=tuple(markings),
        rates=rates,
        perception=perception,
        min_blob_px=min_blob_px,
        control=control,
        link=link,
        coverage_cell_m=float(doc.get("coverage_cell_m", 0.25)),
        duration_s=duration_s,
        seed=int(doc.get("seed", 0)),
    )


def load_config_file(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise InvalidConfig(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: not valid JSON ({exc})") from exc
    return load_config(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """JSON-shaped config, complete enough for load_config to rebuild it."""
    return {
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "arena": cfg.arena.vertices.tolist(),
        "camera": {
            "homography": cfg.camera.h.m.ravel().tolist(),
            "width": cfg.camera.width,
            "height": cfg.camera.height,
        },
        "rates": {
            "sim_dt": cfg.rates.sim_dt,
            "frame_hz": cfg.rates.frame_hz,
            "control_hz": cfg.rates.control_hz,
        },
        "robots": [
            {
                "id": r.id,
                "pose": [r.pose.x, r.pose.y, r.pose.theta],
                "v_max": r.v_max,
                "omega_max": r.omega_max,
                "body_radius": r.body_radius,
                "front_marker_offset": r.front_marker_offset,
                "rear_marker_offset": r.rear_marker_offset,
                "marker_radius": r.marker_radius,
            }
            for r in cfg.robots
        ],
        "obstacles": [
            {"radius": o.radius, "script": o.script.tolist()} for o in cfg.obstacles
        ],
        "ground_markings": [
            {
                "type": "polygon" if isinstance(m, Polygon) else "polyline",
                "points": (m.vertices if isinstance(m, Polygon) else m.points).tolist(),
            }
            for m in cfg.ground_markings
        ],
        "perception": {
            "alpha": cfg.perception.alpha,
            "beta": cfg.perception.beta,
            "gate_m": cfg.perception.gate_m,
            "coast_max": cfg.perception.coast_max,
            "min_blob_px": cfg.min_blob_px,
        },
        "control": {
            "v_nom": cfg.control.v_nom,
            "lookahead_m": cfg.control.lookahead_m,
            "goal_tol_m": cfg.control.goal_tol_m,
            "k_theta": cfg.control.k_theta,
            "heading_tol_rad": cfg.control.heading_tol_rad,
            "horizon_s": cfg.control.horizon_s,
            "margin_m": cfg.control.margin_m,
            "r_safe_m": cfg.control.r_safe_m,
            "tau_s": cfg.control.tau_s,
            "omega_max": cfg.control.omega_max,
            "v_max": cfg.control.v_max,
        },
        "link": {
            "base_latency_s": cfg.link.base_latency_s,
            "jitter_s": cfg.link.jitter_s,
            "drop_prob": cfg.link.drop_prob,
            "seed": cfg.link.seed,
        },
        "mission": {
            "d_min": cfg.mission.d_min,
            "horizon_s": cfg.mission.horizon_s,
            "modes": {str(rid): _mode_to_dict(m) for rid, m in sorted(cfg.mission.modes.items())},
        },
        "coverage_cell_m": cfg.coverage_cell_m,
    }


@dataclass
class MetricsReport:
    cross_track: dict[str, dict[str, float]]
    boundary_violations: int
    max_excursion_m: float
    min_clearance_m: float | None
    coverage_fraction: float
    collision_count: int
    frames_rendered: int
    detection_rate: float
    commands_sent: int
    commands_dropped: int
    commands_superseded: int
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        # wall_clock_s stays out: reports from identical runs must compare
        # byte-identical, and replay regenerates its own timing.
        return {
            "cross_track": self.cross_track,
            "boundary_violations": self.boundary_violations,
            "max_excursion_m": self.max_excursion_m,
            "min_clearance_m": self.min_clearance_m,
            "coverage_fraction": self.coverage_fraction,
            "collision_count": self.collision_count,
            "frames_rendered": self.frames_rendered,
            "detection_rate": self.detection_rate,
            "commands_sent": self.commands_sent,
            "commands_dropped": self.commands_dropped,
            "commands_superseded": self.commands_superseded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


class MetricsAccumulator:
    """Folds the trace event stream into a MetricsReport.

    Consuming the identical events live and from a trace file is what makes
    replay reproduce the report exactly; nothing here may read sim state.
    """

    def __init__(self):
        self._robots: dict[str, dict] = {}
        self._paths: dict[str, Polyline] = {}
        self._boundaries: dict[str, Polygon] = {}
        self._converged: dict[str, bool] = {}
        self._outside: dict[str, bool] = {}
        self._colliding: dict[frozenset, bool] = {}
        self._lookahead = 0.8
        self._ct_sum: dict[str, float] = {}
        self._ct_count: dict[str, int] = {}
        self._ct_max: dict[str, float] = {}
        self.boundary_violations = 0
        self.max_excursion_m = 0.0
        self.min_clearance_m: float | None = None
        self.coverage_fraction = 0.0
        self.collision_count = 0
        self.frames_rendered = 0
        self._detections = 0
        self.commands_sent = 0
        self.commands_dropped = 0
        self.commands_superseded = 0

    def _install_mode(self, rid: str, mode_doc: Mapping):
        self._paths.pop(rid, None)
        self._boundaries.pop(rid, None)
        self._converged.pop(rid, None)
        self._outside.pop(rid, None)
        kind = mode_doc.get("type")
        if kind == "follow_path":
            self._paths[rid] = Polyline(np.asarray(mode_doc["points"], dtype=float))
            self._converged[rid] = False
        elif kind == "bounded_wander":
            self._boundaries[rid] = Polygon(np.asarray(mode_doc["points"], dtype=float))
            self._outside[rid] = False

    def consume(self, event: Mapping) -> None:
        kind = event["kind"]
        data = event["data"]
        if kind == "meta":
            cfg = data["config"]
            for rd in cfg["robots"]:
                self._robots[str(rd["id"])] = {"body_radius": rd["body_radius"]}
            for rid, mode_doc in cfg["mission"]["modes"].items():
                self._install_mode(rid, mode_doc)
            self._lookahead = cfg["control"]["lookahead_m"]
        elif kind == "mission":
            self._install_mode(str(data["robot"]), data["mode"])
        elif kind == "frame":
            self.frames_rendered += 1
        elif kind == "det":
            self._detections += len(data["detections"])
        elif kind == "tx":
            self.commands_sent += 1
            if data["dropped"]:
                self.commands_dropped += 1
        elif kind == "rx":
            if not data["applied"]:
                self.commands_superseded += 1
        elif kind == "poses":
            self._consume_poses(data)

    def _consume_poses(self, data: Mapping) -> None:
        self.coverage_fraction = data.get("coverage", self.coverage_fraction)
        poses = {str(rd["id"]): rd for rd in data["robots"]}
        for rid, path in self._paths.items():
            rd = poses.get(rid)
            if rd is None:
                continue
            _, d = project_onto_polyline(path, (rd["x"], rd["y"]))
            err = abs(d)
            if not self._converged.get(rid, False):
                if err <= 2.0 * self._lookahead:
                    self._converged[rid] = True
                else:
                    continue
            self._ct_sum[rid] = self._ct_sum.get(rid, 0.0) + err
            self._ct_count[rid] = self._ct_count.get(rid, 0) + 1
            self._ct_max[rid] = max(self._ct_max.get(rid, 0.0), err)
        for rid, boundary in self._boundaries.items():
            rd = poses.get(rid)
            if rd is None:
                continue
            pt = (rd["x"], rd["y"])
            outside = not point_in_polygon(boundary, pt)
            if outside:
                self.max_excursion_m = max(
                    self.max_excursion_m, distance_to_boundary(boundary, pt)
                )
                if not self._outside.get(rid, False):
                    self.boundary_violations += 1
            self._outside[rid] = outside
        ids = sorted(poses)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                ra = self._robots.get(a, {}).get("body_radius", 0.2)
                rb = self._robots.get(b, {}).get("body_radius", 0.2)
                clearance = (
                    math.hypot(poses[a]["x"] - poses[b]["x"], poses[a]["y"] - poses[b]["y"])
                    - ra
                    - rb
                )
                if self.min_clearance_m is None or clearance < self.min_clearance_m:
                    self.min_clearance_m = clearance
                pair = frozenset((a, b))
                colliding = clearance < 0.0
                if colliding and not self._colliding.get(pair, False):
                    self.collision_count += 1
                self._colliding[pair] = colliding

    def report(self) -> MetricsReport:
        cross_track = {}
        for rid in sorted(self._paths):
            n = self._ct_count.get(rid, 0)
            cross_track[rid] = {
                "mean": (self._ct_sum.get(rid, 0.0) / n) if n else 0.0,
                "max": self._ct_max.get(rid, 0.0),
            }
        robot_count = len(self._robots)
        opportunities = self.frames_rendered * robot_count
        return MetricsReport(
            cross_track=cross_track,
            boundary_violations=self.boundary_violations,
            max_excursion_m=self.max_excursion_m,
            min_clearance_m=self.min_clearance_m,
            coverage_fraction=self.coverage_fraction,
            collision_count=self.collision_count,
            frames_rendered=self.frames_rendered,
            detection_rate=(self._detections / opportunities) if opportunities else 0.0,
            commands_sent=self.commands_sent,
            commands_dropped=self.commands_dropped,
            commands_superseded=self.commands_superseded,
        )


class Simulation:
    """One deterministic scenario instance, stepped sim_dt at a time.

    Event sinks (metrics, trace writers, gateway snapshots) receive every
    event; sinks must not mutate the event dicts.
    """

    def __init__(self, cfg: ScenarioConfig, sinks: Iterable[Callable[[dict], None]] = ()):
        self.cfg = cfg
        self.sinks = list(sinks)
        self.world = WorldState(
            t=0.0,
            robots=cfg.robots,
            obstacles=cfg.obstacles,
            arena=cfg.arena,
            ground_markings=cfg.ground_markings,
        )
        self.mission = cfg.mission
        self.tracks = []
        self.coord_state = CoordinationState()
        self.renderer = FrameRenderer(
            cfg.camera.h,
            cfg.camera.width,
            cfg.camera.height,
            cfg.arena,
            cfg.ground_markings,
        )
        self.channels = {
            r.id: Channel(
                cfg.link.base_latency_s,
                cfg.link.jitter_s,
                cfg.link.drop_prob,
                derive_seed(cfg.seed, f"link/{cfg.link.seed}/{r.id}"),
            )
            for r in cfg.robots
        }
        self.seq = {r.id: 0 for r in cfg.robots}
        self.grids = {
            rid: CoverageGrid.from_polygon(mode.poly, cfg.coverage_cell_m)
            for rid, mode in cfg.mission.modes.items()
            if isinstance(mode, Coverage)
        }
        self.k = 0
        self.steps_total = round(cfg.duration_s / cfg.rates.sim_dt)
        self.n_frame = _steps_per_tick(cfg.rates.sim_dt, cfg.rates.frame_hz, "rates.frame_hz")
        self.n_control = _steps_per_tick(
            cfg.rates.sim_dt, cfg.rates.control_hz, "rates.control_hz"
        )
        self.full_frames = False
        self.last_frame_digest = ""
        self._wander_modes: dict[int, str] = {}

    def emit(self, kind: str, t: float, data: dict) -> None:
        event = {"t": t, "kind": kind, "data": data}
        for sink in self.sinks:
            sink(event)

    def emit_meta(self) -> None:
        self.emit("meta", 0.0, {"config": config_to_dict(self.cfg), "format": 1})

    def install_mode(self, robot_id: int, mode: Mode, t: float | None = None) -> None:
        """Swap one robot's mission mode between steps (gateway edits)."""
        if robot_id not in {r.id for r in self.cfg.robots}:
            raise InvalidConfig(f"mission.modes.{robot_id}: unknown robot id")
        modes = dict(self.mission.modes)
        modes[robot_id] = mode
        self.mission = replace(self.mission, modes=modes)
        wander = {k: v for k, v in self.coord_state.wander.items() if k != robot_id}
        paths = {k: v for k, v in self.coord_state.coverage_paths.items() if k != robot_id}
        self.coord_state = CoordinationState(wander=wander, coverage_paths=paths)
        if isinstance(mode, Coverage):
            self.grids[robot_id] = CoverageGrid.from_polygon(mode.poly, self.cfg.coverage_cell_m)
        else:
            self.grids.pop(robot_id, None)
        self.emit(
            "mission",
            self.world.t if t is None else t,
            {"robot": robot_id, "mode": _mode_to_dict(mode)},
        )

    def _coverage_fraction(self) -> float:
        if not self.grids:
            return 0.0
        covered = sum(int((g.covered & g.mask).sum()) for g in self.grids.values())
        total = sum(int(g.mask.sum()) for g in self.grids.values())
        return covered / total if total else 0.0

    def step(self) -> None:
        """Advance exactly one sim_dt: perceive, decide, deliver, move."""
        cfg = self.cfg
        t = self.k * cfg.rates.sim_dt

        if self.k % self.n_frame == 0:
            frame = self.renderer.render(self.world)
            raw = dump_frame(frame)
            digest = hashlib.blake2b(raw, digest_size=8).hexdigest()
            self.last_frame_digest = digest
            frame_data = {"k": self.k, "digest": digest}
            if self.full_frames:
                frame_data["ovf1_b64"] = base64.b64encode(raw).decode("ascii")
            self.emit("frame", t, frame_data)
            dets = detect_markers(frame, cfg.camera.h, cfg.min_blob_px)
            self.emit(
                "det",
                t,
                {
                    "detections": [
                        {
                            "id": d.robot_id,
                            "x": d.ground_pose.x,
                            "y": d.ground_pose.y,
                            "theta": d.ground_pose.theta,
                        }
                        for d in dets
                    ]
                },
            )
            self.tracks = update_tracks(self.tracks, dets, t, cfg.perception)
            self.emit(
                "tracks",
                t,
                {
                    "tracks": [
                        {
                            "id": tr.robot_id,
                            "x": tr.pose_est.x,
                            "y": tr.pose_est.y,
                            "theta": tr.pose_est.theta,
                            "v": tr.vel_est[0],
                            "omega": tr.vel_est[1],
                            "status": tr.status,
                        }
                        for tr in self.tracks
                    ]
                },
            )

        if self.k % self.n_control == 0:
            obstacles = tuple(
                (o.center, o.velocity_at(t), o.radius) for o in self.world.obstacles
            )
            commands, self.coord_state = mission_step(
                self.mission,
                self.tracks,
                t,
                cfg.control,
                self.coord_state,
                obstacles,
            )
            for rid, ws in sorted(self.coord_state.wander.items()):
                if self._wander_modes.get(rid) != ws.mode:
                    self.emit("mode", t, {"robot": rid, "mode": ws.mode})
                    self._wander_modes[rid] = ws.mode
            self.emit(
                "cmd",
                t,
                {
                    "commands": {
                        str(rid): {"v": c.v, "omega": c.omega, "estop": c.estop}
                        for rid, c in sorted(commands.items())
                    }
                },
            )
            for rid in sorted(commands):
                c = commands[rid]
                frame = CommandFrame(
                    robot_id=rid,
                    seq=self.seq[rid] & 0xFFFF,
                    v_mm_s=int(round(c.v * 1000.0)),
                    omega_mrad_s=int(round(c.omega * 1000.0)),
                    flags=1 if c.estop else 0,
                )
                self.seq[rid] += 1
                ch = self.channels[rid]
                dropped_before = ch.dropped_count
                ch.send(encode_command(frame), t)
                self.emit(
                    "tx",
                    t,
                    {
                        "robot": rid,
                        "seq": frame.seq,
                        "dropped": ch.dropped_count > dropped_before,
                    },
                )

        for rid in sorted(self.channels):
            due = self.channels[rid].poll(t)
            for idx, (deliver_at, payload) in enumerate(due):
                cmd_frame = decode_command(payload)
                applied = idx == len(due) - 1
                self.emit(
                    "rx",
                    t,
                    {
                        "robot": rid,
                        "seq": cmd_frame.seq,
                        "deliver_at": deliver_at,
                        "applied": applied,
                    },
                )
                # Delivery may predate this step boundary; actuation
                # quantizes to the current step.
                self.world = schedule_command(
                    self.world,
                    rid,
                    (cmd_frame.v_mm_s / 1000.0, cmd_frame.omega_mrad_s / 1000.0),
                    apply_at=max(deliver_at, self.world.t),
                )

        self.world = step_world(self.world, cfg.rates.sim_dt)
        self.k += 1
        t_next = self.k * cfg.rates.sim_dt

        for rid, grid in self.grids.items():
            mode = self.mission.modes[rid]
            try:
                pose = self.world.robot(rid).pose
            except KeyError:
                continue
            self.grids[rid] = update_coverage(grid, pose, mode.tool_radius)

        self.emit(
            "poses",
            t_next,
            {
                "robots": [
                    {"id": r.id, "x": r.pose.x, "y": r.pose.y, "theta": r.pose.theta}
                    for r in self.world.robots
                ],
                "coverage": self._coverage_fraction(),
            },
        )

    def run(self) -> None:
        self.emit_meta()
        while self.k < self.steps_total:
            self.step()
        self.emit(
            "end",
            self.k * self.cfg.rates.sim_dt,
            {"steps": self.k, "frames": (self.k + self.n_frame - 1) // self.n_frame},
        )

    def snapshot(self) -> dict:
        """Latest immutable view for the gateway; JSON-shaped."""
        from .perception import bbox_overlay

        tracks_by_id = {}
        for tr in self.tracks:
            cur = tracks_by_id.get(tr.robot_id)
            if cur is None or tr.last_update > cur.last_update:
                tracks_by_id[tr.robot_id] = tr
        boxes = dict(bbox_overlay(list(tracks_by_id.values()), self.cfg.camera.h))
        robots = []
        for r in self.world.robots:
            tr = tracks_by_id.get(r.id)
            entry = {
                "id": r.id,
                "pose": [r.pose.x, r.pose.y, r.pose.theta],
                "track": None,
                "status": "none",
                "bbox": None,
            }
            if tr is not None:
                entry["track"] = [tr.pose_est.x, tr.pose_est.y, tr.pose_est.theta]
                entry["status"] = tr.status
                box = boxes.get(r.id)
                entry["bbox"] = list(box) if box is not None else None
            robots.append(entry)
        geometry = {
            str(rid): _mode_to_dict(mode) for rid, mode in sorted(self.mission.modes.items())
        }
        return {
            "type": "snapshot",
            "t": self.world.t,
            "robots": robots,
            "modes": geometry,
            "coverage": self._coverage_fraction(),
            "frame_digest": self.last_frame_digest,
        }


class TraceWriter:
    def __init__(self, fh):
        self.fh = fh

    def __call__(self, event: dict) -> None:
        self.fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")))
        self.fh.write("\n")


def run_scenario(
    cfg: ScenarioConfig,
    trace_path: str | None = None,
    full_frames: bool = False,
) -> MetricsReport:
    """Execute a scenario headless and fold its event stream into metrics."""
    acc = MetricsAccumulator()
    sinks: list[Callable[[dict], None]] = [acc.consume]
    started = time.monotonic()
    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            sim = Simulation(cfg, sinks + [TraceWriter(fh)])
            sim.full_frames = full_frames
            sim.run()
    else:
        sim = Simulation(cfg, sinks)
        sim.full_frames = full_frames
        sim.run()
    report = acc.report()
    report.wall_clock_s = time.monotonic() - started
    return report


def replay(path: str) -> MetricsReport:
    """Recompute metrics from a recorded trace without re-simulating."""
    acc = MetricsAccumulator()
    started = time.monotonic()
    saw_meta = False
    saw_end = False
    line_no = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ReplayError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"line {line_no}: not valid JSON ({exc.msg})") from exc
            if not isinstance(event, dict) or not {"t", "kind", "data"} <= set(event):
                raise ReplayError(f"line {line_no}: event missing t/kind/data")
            if line_no == 1 and event["kind"] != "meta":
                raise ReplayError("line 1: trace must start with a meta event")
            if event["kind"] == "meta":
                saw_meta = True
            if event["kind"] == "end":
                saw_end = True
            acc.consume(event)
    if line_no == 0:
        raise ReplayError("line 1: trace is empty")
    if not saw_meta:
        raise ReplayError("line 1: trace must start with a meta event")
    if not saw_end:
        raise ReplayError(f"line {line_no}: trace truncated (no end event)")
    report = acc.report()
    report.wall_clock_s = time.monotonic() - started
    return report
