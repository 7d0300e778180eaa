"""Per-robot control laws: delay prediction, path following, wandering.

Everything here is pure; the wander mode state is passed in and returned
rather than stored, so robots can be evaluated in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .geometry import (
    Polygon,
    Polyline,
    distance_to_boundary,
    point_in_polygon,
    project_onto_polyline,
    reflect_heading,
    wrap_angle,
)
from .perception import Track
from .sim import Pose2, integrate_unicycle


class NegativeTau(ValueError):
    pass


class OutsideBoundary(ValueError):
    pass


@dataclass(frozen=True)
class ControlParams:
    v_nom: float = 0.5
    lookahead_m: float = 0.8
    goal_tol_m: float = 0.1
    k_theta: float = 2.0
    heading_tol_rad: float = 0.05
    horizon_s: float = 2.0
    margin_m: float = 0.3
    r_safe_m: float = 0.3
    tau_s: float = 0.0
    omega_max: float = 2.0
    v_max: float = 1.0

    def __post_init__(self):
        positive = {
            "v_nom": self.v_nom,
            "lookahead_m": self.lookahead_m,
            "goal_tol_m": self.goal_tol_m,
            "k_theta": self.k_theta,
            "heading_tol_rad": self.heading_tol_rad,
            "horizon_s": self.horizon_s,
            "margin_m": self.margin_m,
            "r_safe_m": self.r_safe_m,
            "omega_max": self.omega_max,
            "v_max": self.v_max,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.tau_s < 0:
            raise ValueError(f"tau_s must be non-negative, got {self.tau_s}")
        if self.lookahead_m <= self.goal_tol_m:
            raise ValueError("lookahead_m must exceed goal_tol_m")


@dataclass(frozen=True)
class Command:
    v: float
    omega: float
    estop: bool = False

    def __post_init__(self):
        if self.estop and (self.v != 0.0 or self.omega != 0.0):
            raise ValueError("estop commands must be (0, 0)")


STOP = Command(0.0, 0.0)


def predict_pose(track: Track, tau: float) -> Pose2:
    """Extrapolate the track estimate forward by the loop delay tau."""
    if tau < 0:
        raise NegativeTau(f"tau must be >= 0, got {tau}")
    if tau == 0:
        return track.pose_est
    v, omega = track.vel_est
    return integrate_unicycle(track.pose_est, v, omega, tau)


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def pure_pursuit(pose: Pose2, path: Polyline, p: ControlParams) -> Command:
    """Chase a lookahead point on the path; stop at the final point."""
    s, _ = project_onto_polyline(path, (pose.x, pose.y))
    total = path.total_length
    gx, gy = path.point_at(min(s + p.lookahead_m, total))
    end = path.points[-1]
    at_goal = (
        math.hypot(pose.x - end[0], pose.y - end[1]) <= p.goal_tol_m
        and s >= total - p.lookahead_m
    )
    if at_goal:
        return STOP
    dx = gx - pose.x
    dy = gy - pose.y
    c, sn = math.cos(pose.theta), math.sin(pose.theta)
    x_l = c * dx + sn * dy
    y_l = -sn * dx + c * dy
    d2 = x_l * x_l + y_l * y_l
    kappa = 0.0 if d2 < 1e-12 else 2.0 * y_l / d2
    return Command(p.v_nom, _clamp(p.v_nom * kappa, -p.omega_max, p.omega_max))


@dataclass(frozen=True)
class WanderState:
    mode: str = "CRUISE"  # CRUISE | TURN
    theta_star: float = 0.0


def _inside_eroded(pt, boundary: Polygon, margin: float) -> bool:
    return point_in_polygon(boundary, pt) and distance_to_boundary(boundary, pt) >= margin


def _first_crossed_edge(boundary: Polygon, a, b):
    """Direction angle of the boundary edge the segment a->b crosses first.

    Falls back to the edge nearest to b when the segment stays inside
    (probe inside the polygon but within the margin band).
    """
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    best_t = None
    best_phi = None
    nearest_phi = None
    nearest_d = math.inf
    for (ex0, ey0), (ex1, ey1) in boundary.edges():
        fx, fy = ex1 - ex0, ey1 - ey0
        phi = math.atan2(fy, fx)
        denom = dx * fy - dy * fx
        if abs(denom) > 1e-15:
            t = ((ex0 - ax) * fy - (ey0 - ay) * fx) / denom
            u = ((ex0 - ax) * dy - (ey0 - ay) * dx) / denom
            if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
                if best_t is None or t < best_t:
                    best_t = t
                    best_phi = phi
        mx, my = (ex0 + ex1) / 2.0, (ey0 + ey1) / 2.0
        d = math.hypot(b[0] - mx, b[1] - my)
        if d < nearest_d:
            nearest_d = d
            nearest_phi = phi
    return best_phi if best_phi is not None else nearest_phi


def boundary_reflect_policy(
    pose: Pose2,
    boundary: Polygon,
    p: ControlParams,
    mode_state: WanderState | None = None,
) -> tuple[Command, WanderState]:
    """Cruise until a probe point would leave the margin, then turn in place.

    The new heading is the specular reflection of the current heading about
    the edge ahead; if even the reflected probe exits (a corner), the robot
    turns around instead.
    """
    state = mode_state or WanderState()
    if not point_in_polygon(boundary, (pose.x, pose.y)):
        raise OutsideBoundary(f"pose ({pose.x:.3f}, {pose.y:.3f}) is outside the boundary")

    if state.mode == "TURN":
        err = wrap_angle(state.theta_star - pose.theta)
        if abs(err) >= p.heading_tol_rad:
            return Command(0.0, heading_controller(pose.theta, state.theta_star, p)), state
        state = replace(state, mode="CRUISE")

    reach = p.horizon_s * p.v_nom
    probe = (pose.x + reach * math.cos(pose.theta), pose.y + reach * math.sin(pose.theta))
    if _inside_eroded(probe, boundary, p.margin_m):
        return Command(p.v_nom, 0.0), state

    phi = _first_crossed_edge(boundary, (pose.x, pose.y), probe)
    theta_star = reflect_heading(pose.theta, phi)
    reflected_probe = (
        pose.x + reach * math.cos(theta_star),
        pose.y + reach * math.sin(theta_star),
    )
    if not _inside_eroded(reflected_probe, boundary, p.margin_m):
        theta_star = wrap_angle(pose.theta + math.pi)
    state = WanderState(mode="TURN", theta_star=theta_star)
    return Command(0.0, heading_controller(pose.theta, theta_star, p)), state


def heading_controller(theta: float, theta_star: float, p: ControlParams) -> float:
    return _clamp(p.k_theta * wrap_angle(theta_star - theta), -p.omega_max, p.omega_max)


def safety_governor(
    cmd: Command,
    ego: Track,
    others: Sequence[Track],
    obstacles: Sequence[tuple[tuple[float, float], tuple[float, float], float]],
    p: ControlParams,
    body_radius: float = 0.2,
) -> Command:
    """Stop if the commanded motion closes within r_safe_m of anything.

    obstacles are (center, velocity, radius) triples; other robots are
    predicted along their tracked velocities. The output is a plain stop,
    not a latched e-stop.
    """
    if not others and not obstacles:
        return cmd
    n = 10
    for i in range(n):
        s = p.horizon_s * i / (n - 1)
        ego_pose = integrate_unicycle(ego.pose_est, cmd.v, cmd.omega, s) if s > 0 else ego.pose_est
        for other in others:
            ov, ow = other.vel_est
            op = integrate_unicycle(other.pose_est, ov, ow, s) if s > 0 else other.pose_est
            sep = math.hypot(ego_pose.x - op.x, ego_pose.y - op.y) - 2.0 * body_radius
            if sep < p.r_safe_m:
                return STOP
        for (ox, oy), (ovx, ovy), orad in obstacles:
            cx = ox + ovx * s
            cy = oy + ovy * s
            sep = math.hypot(ego_pose.x - cx, ego_pose.y - cy) - body_radius - orad
            if sep < p.r_safe_m:
                return STOP
    return cmd
