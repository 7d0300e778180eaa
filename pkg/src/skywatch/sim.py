"""Deterministic ground-truth world: kinematics, actuation queues, rasterizer.

The world is a value: stepping returns a new WorldState and never mutates.
Robot motion uses the closed-form unicycle arc update so that stepping is
interval-additive, which keeps the determinism tests sharp.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import Homography, Polygon, Polyline, wrap_angle

# Palette (bit-exact external interface).
PAL_BACKGROUND = 0
PAL_ARENA = 1
PAL_MARKING = 2
PAL_OBSTACLE = 5
PAL_BODY = 8
PAL_FRONT_BASE = 16  # front marker = 16 + robot id
PAL_REAR_BASE = 64  # rear marker = 64 + robot id
MAX_ROBOT_ID = 31

FRAME_MAGIC = b"OVF1"


class NonPositiveDt(ValueError):
    pass


class UnknownRobot(KeyError):
    pass


class PastTime(ValueError):
    pass


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta is wrapped into (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def integrate_unicycle(pose: Pose2, v: float, omega: float, dt: float) -> Pose2:
    """Exact constant-(v, omega) update over dt."""
    if abs(omega) < 1e-9:
        return Pose2(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            pose.theta + omega * dt,
        )
    theta1 = pose.theta + omega * dt
    r = v / omega
    return Pose2(
        pose.x + r * (math.sin(theta1) - math.sin(pose.theta)),
        pose.y + r * (math.cos(pose.theta) - math.cos(theta1)),
        theta1,
    )


@dataclass(frozen=True)
class PendingCommand:
    apply_at: float
    seq: int  # insertion order; breaks apply_at ties last-writer-wins
    v: float
    omega: float


@dataclass(frozen=True)
class RobotState:
    id: int
    pose: Pose2
    applied_cmd: tuple[float, float] = (0.0, 0.0)
    pending: tuple[PendingCommand, ...] = ()
    v_max: float = 1.0
    omega_max: float = 2.0
    body_radius: float = 0.2
    front_marker_offset: float = 0.15
    rear_marker_offset: float = -0.15
    marker_radius: float = 0.06
    sched_count: int = 0

    def __post_init__(self):
        if not 0 <= self.id <= MAX_ROBOT_ID:
            raise ValueError(f"robot id must be 0..{MAX_ROBOT_ID}, got {self.id}")

    def marker_centers(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Ground positions of (front, rear) marker disks."""
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        f = (self.pose.x + self.front_marker_offset * c, self.pose.y + self.front_marker_offset * s)
        r = (self.pose.x + self.rear_marker_offset * c, self.pose.y + self.rear_marker_offset * s)
        return f, r


@dataclass(frozen=True)
class Obstacle:
    """Disk obstacle following a piecewise-linear (t, x, y) script."""

    radius: float
    script: np.ndarray  # (N, 3) rows of (t, x, y), t strictly increasing
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        s = np.asarray(self.script, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3 or len(s) < 1:
            raise ValueError("obstacle script needs (t, x, y) rows")
        if len(s) > 1 and np.any(np.diff(s[:, 0]) <= 0):
            raise ValueError("obstacle script times must increase")
        s.setflags(write=False)
        object.__setattr__(self, "script", s)
        object.__setattr__(self, "center", self.position_at(0.0) if self.center == (0.0, 0.0) else self.center)

    def position_at(self, t: float) -> tuple[float, float]:
        s = self.script
        x = float(np.interp(t, s[:, 0], s[:, 1]))
        y = float(np.interp(t, s[:, 0], s[:, 2]))
        return x, y

    def velocity_at(self, t: float) -> tuple[float, float]:
        s = self.script
        if len(s) < 2 or t >= s[-1, 0]:
            return 0.0, 0.0
        i = int(np.searchsorted(s[:, 0], t, side="right")) - 1
        i = max(0, min(i, len(s) - 2))
        dt = s[i + 1, 0] - s[i, 0]
        return float((s[i + 1, 1] - s[i, 1]) / dt), float((s[i + 1, 2] - s[i, 2]) / dt)


@dataclass(frozen=True)
class WorldState:
    t: float
    robots: tuple[RobotState, ...]
    obstacles: tuple[Obstacle, ...] = ()
    arena: Polygon | None = None
    ground_markings: tuple = ()

    def __post_init__(self):
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ValueError("robot ids must be unique")

    def robot(self, robot_id: int) -> RobotState:
        for r in self.robots:
            if r.id == robot_id:
                return r
        raise UnknownRobot(robot_id)


def step_world(world: WorldState, dt: float) -> WorldState:
    """Apply due commands, advance kinematics exactly, move obstacles."""
    if dt <= 0:
        raise NonPositiveDt(f"dt must be > 0, got {dt}")
    t_next = world.t + dt
    robots = []
    for r in world.robots:
        applied = r.applied_cmd
        pending = r.pending
        n_due = 0
        for p in pending:
            if p.apply_at <= world.t:
                n_due += 1
            else:
                break
        if n_due:
            last = pending[n_due - 1]
            applied = (last.v, last.omega)
            pending = pending[n_due:]
        pose = integrate_unicycle(r.pose, applied[0], applied[1], dt)
        robots.append(replace(r, pose=pose, applied_cmd=applied, pending=pending))
    obstacles = tuple(
        replace(o, center=o.position_at(t_next)) for o in world.obstacles
    )
    return replace(world, t=t_next, robots=tuple(robots), obstacles=obstacles)


def schedule_command(
    world: WorldState,
    robot_id: int,
    cmd: tuple[float, float],
    apply_at: float,
) -> WorldState:
    """Queue (v, omega) for a robot, clamped to its limits.

    Commands with equal apply_at resolve last-writer-wins.
    """
    if apply_at < world.t:
        raise PastTime(f"apply_at {apply_at} is before world time {world.t}")
    target = world.robot(robot_id)  # raises UnknownRobot
    v = min(max(cmd[0], -target.v_max), target.v_max)
    omega = min(max(cmd[1], -target.omega_max), target.omega_max)
    entry = PendingCommand(apply_at, target.sched_count, v, omega)
    pending = tuple(
        sorted((*target.pending, entry), key=lambda p: (p.apply_at, p.seq))
    )
    updated = replace(target, pending=pending, sched_count=target.sched_count + 1)
    robots = tuple(updated if r.id == robot_id else r for r in world.robots)
    return replace(world, robots=robots)


@dataclass(frozen=True)
class Frame:
    """Palette-indexed overhead image; pixels is (height, width) uint8."""

    width: int
    height: int
    pixels: np.ndarray
    t: float

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.uint8)
        if p.shape != (self.height, self.width):
            raise ValueError("pixel buffer shape mismatch")
        object.__setattr__(self, "pixels", p)


def dump_frame(frame: Frame) -> bytes:
    """Serialize: 'OVF1', width u32 LE, height u32 LE, t in us u32 LE, pixels."""
    header = FRAME_MAGIC + struct.pack(
        "<III", frame.width, frame.height, int(round(frame.t * 1e6))
    )
    return header + frame.pixels.tobytes()


def load_frame(data: bytes) -> Frame:
    if len(data) < 16 or data[:4] != FRAME_MAGIC:
        raise ValueError("not an OVF1 frame dump")
    width, height, t_us = struct.unpack("<III", data[4:16])
    if len(data) != 16 + width * height:
        raise ValueError("frame dump payload length mismatch")
    pixels = np.frombuffer(data[16:], dtype=np.uint8).reshape(height, width)
    return Frame(width, height, pixels.copy(), t_us / 1e6)


class FrameRenderer:
    """Rasterizer for a fixed camera: caches per-pixel ground coordinates.

    The ground position of every pixel center depends only on the
    homography and the frame size, so it is computed once; each frame then
    paints dynamic content into a copy of the prerendered static layers.
    """

    def __init__(
        self,
        h: Homography,
        width: int,
        height: int,
        arena: Polygon | None = None,
        ground_markings: Iterable = (),
        stroke_m: float = 0.05,
    ):
        self.h = h
        self.width = width
        self.height = height
        self.stroke_m = stroke_m
        inv = h.inverse().m
        xs = np.arange(width) + 0.5
        ys = np.arange(height) + 0.5
        px, py = np.meshgrid(xs, ys)
        w = inv[2, 0] * px + inv[2, 1] * py + inv[2, 2]
        bad = np.abs(w) < 1e-12
        w_safe = np.where(bad, 1.0, w)
        self.gx = (inv[0, 0] * px + inv[0, 1] * py + inv[0, 2]) / w_safe
        self.gy = (inv[1, 0] * px + inv[1, 1] * py + inv[1, 2]) / w_safe
        self.gx[bad] = np.inf
        self.gy[bad] = np.inf
        self._static = self._render_static(arena, tuple(ground_markings))

    def _segment_mask(self, a, b, half_width: float) -> np.ndarray:
        """Pixels whose ground point lies within half_width of segment ab."""
        ax, ay = a
        dx, dy = b[0] - a[0], b[1] - a[1]
        seg2 = dx * dx + dy * dy
        t = ((self.gx - ax) * dx + (self.gy - ay) * dy) / seg2
        np.clip(t, 0.0, 1.0, out=t)
        cx = ax + t * dx
        cy = ay + t * dy
        return (self.gx - cx) ** 2 + (self.gy - cy) ** 2 <= half_width**2

    def _polygon_mask(self, poly: Polygon) -> np.ndarray:
        """Even-odd fill of a polygon over the ground grid."""
        v = poly.vertices
        inside = np.zeros(self.gx.shape, dtype=bool)
        n = len(v)
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            crosses = (yi > self.gy) != (yj > self.gy)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = (xj - xi) * (self.gy - yi) / (yj - yi) + xi
            inside ^= crosses & (self.gx < x_at)
            j = i
        return inside

    def _render_static(self, arena, markings) -> np.ndarray:
        img = np.zeros((self.height, self.width), dtype=np.uint8)
        half = self.stroke_m / 2.0
        if arena is not None:
            for a, b in arena.edges():
                img[self._segment_mask(a, b, half)] = PAL_ARENA
        for m in markings:
            if isinstance(m, Polygon):
                img[self._polygon_mask(m)] = PAL_MARKING
            elif isinstance(m, Polyline):
                for i in range(len(m.points) - 1):
                    img[self._segment_mask(m.points[i], m.points[i + 1], half)] = PAL_MARKING
            else:
                raise TypeError(f"unsupported ground marking {type(m)!r}")
        return img

    def _disk_window(self, cx: float, cy: float, r: float):
        """Conservative pixel bounding box of a ground disk, or None."""
        from .geometry import project

        try:
            pts = [
                project(self.h, (cx + r * math.cos(a), cy + r * math.sin(a)))
                for a in np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
            ]
            pts.append(project(self.h, (cx, cy)))
        except Exception:
            return None
        us = [p[0] for p in pts]
        vs = [p[1] for p in pts]
        x0 = max(int(math.floor(min(us))) - 2, 0)
        x1 = min(int(math.ceil(max(us))) + 2, self.width)
        y0 = max(int(math.floor(min(vs))) - 2, 0)
        y1 = min(int(math.ceil(max(vs))) + 2, self.height)
        if x0 >= x1 or y0 >= y1:
            return None
        return x0, x1, y0, y1

    def _paint_disk(self, img, cx, cy, r, value):
        win = self._disk_window(cx, cy, r)
        if win is None:
            return
        x0, x1, y0, y1 = win
        gx = self.gx[y0:y1, x0:x1]
        gy = self.gy[y0:y1, x0:x1]
        mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r * r
        img[y0:y1, x0:x1][mask] = value

    def render(self, world: WorldState) -> Frame:
        img = self._static.copy()
        for o in world.obstacles:
            self._paint_disk(img, o.center[0], o.center[1], o.radius, PAL_OBSTACLE)
        for r in world.robots:
            self._paint_disk(img, r.pose.x, r.pose.y, r.body_radius, PAL_BODY)
            front, rear = r.marker_centers()
            self._paint_disk(img, rear[0], rear[1], r.marker_radius, PAL_REAR_BASE + r.id)
            self._paint_disk(img, front[0], front[1], r.marker_radius, PAL_FRONT_BASE + r.id)
        return Frame(self.width, self.height, img, world.t)


_RENDERER_CACHE: dict = {}


def render_frame(world: WorldState, h: Homography, width: int, height: int) -> Frame:
    """Rasterize the world as seen through h.

    Painted back-to-front: background, arena stroke, ground markings,
    obstacles, robot bodies, rear markers, front markers. Off-frame content
    is silently clipped.
    """
    arena_key = world.arena.vertices.tobytes() if world.arena is not None else b""
    marks_key = tuple(
        (type(m).__name__, (m.vertices if isinstance(m, Polygon) else m.points).tobytes())
        for m in world.ground_markings
    )
    key = (h.m.tobytes(), width, height, arena_key, marks_key)
    renderer = _RENDERER_CACHE.get(key)
    if renderer is None:
        if len(_RENDERER_CACHE) >= 8:
            _RENDERER_CACHE.clear()
        renderer = FrameRenderer(h, width, height, world.arena, world.ground_markings)
        _RENDERER_CACHE[key] = renderer
    return renderer.render(world)
