"""Marker detection on palette frames and alpha-beta track filtering.

Robot identity rides on the palette values (front marker 16+id, rear
64+id), so association is a lookup by id rather than spatial assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import Homography, unproject, wrap_angle
from .sim import (
    MAX_ROBOT_ID,
    PAL_FRONT_BASE,
    PAL_REAR_BASE,
    Frame,
    Pose2,
)


class NonMonotonicTime(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    robot_id: int
    ground_pose: Pose2
    pixel_centroid_front: tuple[float, float]
    pixel_centroid_rear: tuple[float, float]
    pixel_bbox: tuple[float, float, float, float]  # min_x, min_y, max_x, max_y
    t: float


@dataclass(frozen=True)
class TrackerParams:
    alpha: float = 0.5
    beta: float = 0.2  # velocity gain per second of elapsed time
    gate_m: float = 0.5
    coast_max: int = 10


@dataclass(frozen=True)
class Track:
    """Filter state for one marker identity.

    vx, vy, theta_rate are the filter's world-frame rates; vel_est exposes
    them as body-frame (v, omega) for the controller.
    """

    robot_id: int
    pose_est: Pose2
    vx: float = 0.0
    vy: float = 0.0
    theta_rate: float = 0.0
    status: str = "tentative"  # tentative | confirmed | coasting
    hits: int = 1
    misses: int = 0
    last_update: float = 0.0

    @property
    def vel_est(self) -> tuple[float, float]:
        v = self.vx * math.cos(self.pose_est.theta) + self.vy * math.sin(self.pose_est.theta)
        return v, self.theta_rate


def _blob_centroid(pixels: np.ndarray, value: int, min_blob_px: int):
    """Centroid (px) and index bbox of the largest blob of a palette value.

    Labeling runs 4-connected on a cropped window around the matching
    pixels. Returns None when no component reaches min_blob_px.
    """
    rows, cols = np.nonzero(pixels == value)
    if len(rows) < min_blob_px:
        return None
    r0, r1 = rows.min(), rows.max() + 1
    c0, c1 = cols.min(), cols.max() + 1
    window = pixels[r0:r1, c0:c1] == value
    labels, n = ndimage.label(window)
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(sizes)) + 1
    if sizes[best - 1] < min_blob_px:
        return None
    wr, wc = np.nonzero(labels == best)
    cx = float(wc.mean()) + c0 + 0.5
    cy = float(wr.mean()) + r0 + 0.5
    bbox = (
        float(wc.min() + c0),
        float(wr.min() + r0),
        float(wc.max() + c0 + 1),
        float(wr.max() + r0 + 1),
    )
    return (cx, cy), bbox


def detect_markers(frame: Frame, h: Homography, min_blob_px: int = 4) -> list[Detection]:
    """Locate front/rear marker blob pairs and lift them to ground poses.

    Ids with only one marker visible are omitted. Output sorted by id.
    """
    counts = np.bincount(frame.pixels.ravel(), minlength=256)
    detections = []
    for robot_id in range(MAX_ROBOT_ID + 1):
        fv = PAL_FRONT_BASE + robot_id
        rv = PAL_REAR_BASE + robot_id
        if counts[fv] < min_blob_px or counts[rv] < min_blob_px:
            continue
        front = _blob_centroid(frame.pixels, fv, min_blob_px)
        rear = _blob_centroid(frame.pixels, rv, min_blob_px)
        if front is None or rear is None:
            continue
        (fc, fb), (rc, rb) = front, rear
        fg = unproject(h, fc)
        rg = unproject(h, rc)
        pose = Pose2(
            (fg[0] + rg[0]) / 2.0,
            (fg[1] + rg[1]) / 2.0,
            math.atan2(fg[1] - rg[1], fg[0] - rg[0]),
        )
        bbox = (
            min(fb[0], rb[0]),
            min(fb[1], rb[1]),
            max(fb[2], rb[2]),
            max(fb[3], rb[3]),
        )
        detections.append(Detection(robot_id, pose, fc, rc, bbox, frame.t))
    return detections


def _filter_update(track: Track, z: Pose2, t: float, p: TrackerParams) -> Track:
    dt = t - track.last_update
    px = track.pose_est.x + track.vx * dt
    py = track.pose_est.y + track.vy * dt
    pth = track.pose_est.theta + track.theta_rate * dt
    rx = z.x - px
    ry = z.y - py
    rth = wrap_angle(z.theta - pth)
    beta_dt = p.beta / dt if dt > 0 else 0.0
    return replace(
        track,
        pose_est=Pose2(px + p.alpha * rx, py + p.alpha * ry, pth + p.alpha * rth),
        vx=track.vx + beta_dt * rx,
        vy=track.vy + beta_dt * ry,
        theta_rate=track.theta_rate + beta_dt * rth,
        last_update=t,
    )


def _coast(track: Track, t: float) -> Track:
    dt = t - track.last_update
    pose = Pose2(
        track.pose_est.x + track.vx * dt,
        track.pose_est.y + track.vy * dt,
        track.pose_est.theta + track.theta_rate * dt,
    )
    return replace(track, pose_est=pose, last_update=t)


def update_tracks(
    tracks: list[Track],
    detections: list[Detection],
    t: float,
    p: TrackerParams = TrackerParams(),
) -> list[Track]:
    """One filter step: associate by id, update, coast, spawn, drop.

    A detection farther than gate_m from a track's prediction counts as a
    miss for that track and spawns a fresh tentative track, keeping the
    old hypothesis alive through its coast budget.
    """
    if any(tr.last_update >= t for tr in tracks):
        raise NonMonotonicTime(f"update at t={t} not after existing tracks")
    by_id: dict[int, Detection] = {d.robot_id: d for d in detections}
    # Gate against the newest track per id; older duplicates just coast.
    newest: dict[int, Track] = {}
    for tr in tracks:
        cur = newest.get(tr.robot_id)
        if cur is None or tr.last_update > cur.last_update:
            newest[tr.robot_id] = tr

    out: list[Track] = []
    spawned: list[Track] = []
    for tr in tracks:
        det = by_id.get(tr.robot_id)
        matched = det is not None and newest[tr.robot_id] is tr
        if matched:
            dt = t - tr.last_update
            pred = (tr.pose_est.x + tr.vx * dt, tr.pose_est.y + tr.vy * dt)
            dist = math.hypot(det.ground_pose.x - pred[0], det.ground_pose.y - pred[1])
            if dist > p.gate_m:
                matched = False
                by_id.pop(tr.robot_id)
                spawned.append(
                    Track(tr.robot_id, det.ground_pose, status="tentative", hits=1, misses=0, last_update=t)
                )
        if matched:
            det = by_id.pop(tr.robot_id)
            upd = _filter_update(tr, det.ground_pose, t, p)
            hits = 1 if (tr.status == "tentative" and tr.misses > 0) else tr.hits + 1
            status = tr.status
            if status == "coasting":
                status = "confirmed"
            elif status == "tentative" and hits >= 3:
                status = "confirmed"
            out.append(replace(upd, status=status, hits=hits, misses=0))
        else:
            if tr.misses + 1 > p.coast_max:
                continue
            coasted = _coast(tr, t)
            status = "coasting" if tr.status in ("confirmed", "coasting") else "tentative"
            out.append(replace(coasted, status=status, misses=tr.misses + 1))
    for robot_id in sorted(by_id):
        det = by_id[robot_id]
        spawned.append(Track(robot_id, det.ground_pose, status="tentative", hits=1, misses=0, last_update=t))
    return out + sorted(spawned, key=lambda tr: tr.robot_id)


def bbox_overlay(
    tracks: list[Track], h: Homography, body_radius: float = 0.2
) -> list[tuple[int, tuple[float, float, float, float]]]:
    """Projected body-disk bounding rectangles, 4 px of slack on each side.

    Tentative tracks are omitted; the overlay shows only settled tracks.
    """
    from .geometry import project_points

    out = []
    angles = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for tr in tracks:
        if tr.status not in ("confirmed", "coasting"):
            continue
        pts = ring * body_radius + (tr.pose_est.x, tr.pose_est.y)
        px = project_points(h, pts)
        out.append(
            (
                tr.robot_id,
                (
                    float(px[:, 0].min()) - 4.0,
                    float(px[:, 1].min()) - 4.0,
                    float(px[:, 0].max()) + 4.0,
                    float(px[:, 1].max()) + 4.0,
                ),
            )
        )
    return out
