"""Detector round-trip checks and tracker filter behavior."""

import math

import numpy as np
import pytest

from skywatch.geometry import Homography, wrap_angle
from skywatch.perception import (
    Detection,
    NonMonotonicTime,
    Track,
    TrackerParams,
    bbox_overlay,
    detect_markers,
    update_tracks,
)
from skywatch.sim import (
    PAL_BACKGROUND,
    PAL_REAR_BASE,
    Frame,
    Pose2,
    RobotState,
    WorldState,
    render_frame,
)

H100 = Homography(np.array([[100.0, 0, 0], [0, 100.0, 0], [0, 0, 1.0]]))


def render_robots(poses_by_id, t=0.0):
    robots = tuple(RobotState(id=i, pose=p) for i, p in poses_by_id.items())
    return render_frame(WorldState(t=t, robots=robots), H100, 640, 480)


class TestDetect:
    def test_empty_frame(self):
        f = Frame(64, 48, np.zeros((48, 64), dtype=np.uint8), 0.0)
        assert detect_markers(f, H100) == []

    def test_round_trip_accuracy(self):
        rng = np.random.default_rng(11)
        px_ground = 1.0 / 100.0
        for _ in range(100):
            pose = Pose2(
                rng.uniform(0.5, 5.9), rng.uniform(0.5, 4.3), rng.uniform(-math.pi, math.pi)
            )
            dets = detect_markers(render_robots({4: pose}), H100)
            assert len(dets) == 1
            d = dets[0]
            assert d.robot_id == 4
            err = math.hypot(d.ground_pose.x - pose.x, d.ground_pose.y - pose.y)
            assert err <= px_ground
            assert abs(wrap_angle(d.ground_pose.theta - pose.theta)) <= math.radians(2.0)

    def test_two_robots(self):
        dets = detect_markers(
            render_robots({7: Pose2(2.0, 2.0, 0.3), 2: Pose2(4.0, 3.0, -1.0)}), H100
        )
        assert [d.robot_id for d in dets] == [2, 7]

    def test_single_marker_omitted(self):
        f = render_robots({5: Pose2(3.0, 2.0, 0.0)})
        pixels = f.pixels.copy()
        pixels[pixels == PAL_REAR_BASE + 5] = PAL_BACKGROUND
        assert detect_markers(Frame(f.width, f.height, pixels, f.t), H100) == []

    def test_min_blob_filters_specks(self):
        pixels = np.zeros((48, 64), dtype=np.uint8)
        pixels[10, 10] = 16
        pixels[10, 11] = 16
        pixels[20, 20] = 64
        pixels[20, 21] = 64
        assert detect_markers(Frame(64, 48, pixels, 0.0), H100) == []
        pixels[9:12, 9:12] = 16
        pixels[19:22, 19:22] = 64
        dets = detect_markers(Frame(64, 48, pixels, 0.0), H100)
        assert len(dets) == 1 and dets[0].robot_id == 0

    def test_bbox_contains_centroids(self):
        dets = detect_markers(render_robots({1: Pose2(2.5, 2.5, 1.1)}), H100)
        d = dets[0]
        x0, y0, x1, y1 = d.pixel_bbox
        for cx, cy in (d.pixel_centroid_front, d.pixel_centroid_rear):
            assert x0 <= cx <= x1
            assert y0 <= cy <= y1

    def test_frame_time_carried(self):
        dets = detect_markers(render_robots({0: Pose2(2.0, 2.0, 0.0)}, t=3.25), H100)
        assert dets[0].t == 3.25


def det(robot_id, x, y, theta, t):
    return Detection(robot_id, Pose2(x, y, theta), (0, 0), (0, 0), (0, 0, 1, 1), t)


class TestTracker:
    def test_stationary_convergence(self):
        tracks = []
        for k in range(20):
            tracks = update_tracks(tracks, [det(0, 1.0, 2.0, 0.5, 0.1 * k)], 0.1 * k)
        (tr,) = tracks
        assert tr.status == "confirmed"
        v, omega = tr.vel_est
        assert abs(v) <= 1e-3
        assert abs(omega) <= 1e-3
        assert tr.pose_est.x == pytest.approx(1.0)

    def test_confirmation_needs_three_consecutive_hits(self):
        tracks = update_tracks([], [det(0, 0, 0, 0, 0.0)], 0.0)
        assert tracks[0].status == "tentative"
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.1)], 0.1)
        assert tracks[0].status == "tentative"
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.2)], 0.2)
        assert tracks[0].status == "confirmed"

    def test_miss_resets_tentative_streak(self):
        tracks = update_tracks([], [det(0, 0, 0, 0, 0.0)], 0.0)
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.1)], 0.1)
        tracks = update_tracks(tracks, [], 0.2)  # miss
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.3)], 0.3)
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.4)], 0.4)
        assert tracks[0].status == "tentative"
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.5)], 0.5)
        assert tracks[0].status == "confirmed"

    def test_pass_through_gains(self):
        p = TrackerParams(alpha=1.0, beta=0.0)
        tracks = update_tracks([], [det(0, 0.0, 0.0, 0.0, 0.0)], 0.0, p)
        z = det(0, 0.37, -0.21, 0.9, 0.1)
        tracks = update_tracks(tracks, [z], 0.1, p)
        tr = tracks[0]
        assert tr.pose_est.x == pytest.approx(0.37)
        assert tr.pose_est.y == pytest.approx(-0.21)
        assert tr.pose_est.theta == pytest.approx(0.9)

    def test_moving_target_velocity_estimate(self):
        tracks = []
        for k in range(40):
            t = 0.1 * k
            tracks = update_tracks(tracks, [det(0, 1.0 * t, 0.0, 0.0, t)], t)
        v, omega = tracks[0].vel_est
        assert v == pytest.approx(1.0, abs=0.05)
        assert omega == pytest.approx(0.0, abs=0.05)

    def test_coasting_extrapolates(self):
        tracks = []
        for k in range(10):
            t = 0.1 * k
            tracks = update_tracks(tracks, [det(0, 1.0 * t, 0.0, 0.0, t)], t)
        x_before = tracks[0].pose_est.x
        vx = tracks[0].vx
        tracks = update_tracks(tracks, [], 1.0)
        tr = tracks[0]
        assert tr.status == "coasting"
        assert tr.misses == 1
        assert tr.pose_est.x == pytest.approx(x_before + vx * 0.1)

    def test_coasting_reconfirms_on_hit(self):
        tracks = []
        for k in range(5):
            tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.1 * k)], 0.1 * k)
        tracks = update_tracks(tracks, [], 0.5)
        assert tracks[0].status == "coasting"
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.6)], 0.6)
        assert tracks[0].status == "confirmed"
        assert tracks[0].misses == 0

    def test_gate_violation_coasts_and_respawns(self):
        tracks = []
        for k in range(5):
            tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.1 * k)], 0.1 * k)
        tracks = update_tracks(tracks, [det(0, 1.0, 0.0, 0.0, 0.5)], 0.5)
        assert len(tracks) == 2
        old, new = tracks
        assert old.status == "coasting" and old.misses == 1
        assert new.status == "tentative"
        assert new.pose_est.x == pytest.approx(1.0)

    def test_dropped_after_coast_budget(self):
        p = TrackerParams(coast_max=3)
        tracks = update_tracks([], [det(0, 0, 0, 0, 0.0)], 0.0, p)
        for k in range(1, 4):
            tracks = update_tracks(tracks, [], 0.1 * k, p)
            assert len(tracks) == 1
        tracks = update_tracks(tracks, [], 0.4, p)
        assert tracks == []

    def test_non_monotonic_time_rejected(self):
        tracks = update_tracks([], [det(0, 0, 0, 0, 1.0)], 1.0)
        with pytest.raises(NonMonotonicTime):
            update_tracks(tracks, [], 1.0)

    def test_heading_filter_is_wrap_safe(self):
        # Headings sweep through +pi; estimates must not jump by > pi.
        tracks = []
        prev = None
        for k in range(60):
            t = 0.1 * k
            theta = wrap_angle(math.pi - 0.4 + 0.05 * k)
            tracks = update_tracks(tracks, [det(0, 0.0, 0.0, theta, t)], t)
            cur = tracks[0].pose_est.theta
            if prev is not None:
                assert abs(wrap_angle(cur - prev)) < math.pi / 2
            prev = cur

    def test_new_id_spawns_separate_track(self):
        tracks = update_tracks([], [det(0, 0, 0, 0, 0.0)], 0.0)
        tracks = update_tracks(tracks, [det(0, 0, 0, 0, 0.1), det(3, 5, 5, 0, 0.1)], 0.1)
        assert sorted(tr.robot_id for tr in tracks) == [0, 3]


class TestOverlay:
    def test_rectangle_size(self):
        tr = Track(0, Pose2(3.2, 2.4, 0.0), status="confirmed", hits=3)
        boxes = bbox_overlay([tr], H100, body_radius=0.2)
        (robot_id, (x0, y0, x1, y1)) = boxes[0]
        assert robot_id == 0
        assert x1 - x0 == pytest.approx(48.0, abs=0.5)
        assert y1 - y0 == pytest.approx(48.0, abs=0.5)
        assert (x0 + x1) / 2 == pytest.approx(320.0, abs=0.5)

    def test_tentative_omitted(self):
        tr = Track(0, Pose2(1, 1, 0), status="tentative")
        assert bbox_overlay([tr], H100) == []

    def test_coasting_included(self):
        tr = Track(2, Pose2(1, 1, 0), status="coasting", misses=2)
        assert len(bbox_overlay([tr], H100)) == 1

    def test_empty(self):
        assert bbox_overlay([], H100) == []
