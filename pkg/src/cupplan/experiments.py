"""Batch experiments behind the CLI subcommands: calibration study, tracking
noise sweep, the bb epipolar/triangulation study, and the AR axis-error
study. Everything is seeded and returns plain rows ready for CSV."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import arsim, calib, stereo, track
from .geom import ProjectiveCamera, RigidTransform, compose
from .implant import make_component
from .scene import (
    PAPER_DETECTOR,
    CArmGeometry,
    bb_centers,
    bb_phantom_spec,
    default_app_frame,
    default_marker_pose,
    default_rgbd_mount,
    ground_truth_cup_pose,
    make_station,
)

# ---------------------------------------------------------------------------
# calibration study


@dataclass(frozen=True)
class CalibRow:
    seed: int
    rms_residual_mm: float
    rotation_error_deg: float
    translation_error_mm: float
    reproj_a_px: float
    reproj_b_px: float


def calib_study(
    n_poses: int = 22,
    noise_3d_mm: float = 0.5,
    noise_px: float = 0.5,
    seeds: list[int] | None = None,
    geometry: CArmGeometry | None = None,
) -> list[CalibRow]:
    geometry = geometry or CArmGeometry()
    cam_x = geometry.ap_camera()
    mount = default_rgbd_mount()  # rgb -> xray
    pose_rgb = compose(mount.invert().with_frames("xray@ap", "rgb@ap"), cam_x.pose)
    cam_rgb = ProjectiveCamera(
        intrinsics=calib_rgb_intrinsics(), pose=pose_rgb
    )
    ground_truth = mount.with_frames("rgb@ap", "xray@ap")
    board = calib.BoardSpec()
    rows = []
    for seed in seeds or [0]:
        sim = calib.simulate_checkerboard_views(
            board,
            n_poses,
            ground_truth,
            cam_rgb,
            cam_x,
            noise_3d_mm=noise_3d_mm,
            noise_px=noise_px,
            seed=seed,
        )
        result = calib.register_rigid(sim.correspondences)
        delta = compose(result.transform.invert(), ground_truth)
        world_pts = cam_rgb.pose.invert().apply(sim.correspondences.points_a)
        # reprojection of the (noisy) reconstructed corners against the
        # noisy pixel detections, per camera
        r_a = calib.reprojection_error(cam_rgb, world_pts, sim.pixels_a)
        r_b = calib.reprojection_error(cam_x, world_pts, sim.pixels_b)
        rows.append(
            CalibRow(
                seed=seed,
                rms_residual_mm=result.rms_residual_mm,
                rotation_error_deg=delta.rotation_angle_deg(),
                translation_error_mm=float(np.linalg.norm(delta.t)),
                reproj_a_px=r_a,
                reproj_b_px=r_b,
            )
        )
    return rows


def calib_rgb_intrinsics():
    from .geom import PinholeIntrinsics

    return PinholeIntrinsics(fx=900.0, fy=900.0, cx=639.5, cy=359.5, width=1280, height=720)


# ---------------------------------------------------------------------------
# tracking sweep


@dataclass(frozen=True)
class TrackRow:
    angle_deg: float
    seed: int
    rotation_err_deg: float
    translation_err_mm: float


def track_sweep(
    angles_deg: list[float],
    noise: track.MarkerNoise,
    seeds: list[int],
    axis: str = "orbital",
    geometry: CArmGeometry | None = None,
) -> list[TrackRow]:
    """Relative-pose error between the AP station and a rotated station under
    marker pose noise."""
    geometry = geometry or CArmGeometry()
    marker = default_marker_pose(geometry)
    station_a = make_station(geometry, axis, 0.0)
    rows = []
    for angle in angles_deg:
        station_b = make_station(geometry, axis, angle)
        true_rel = compose(station_b.xray_cam.pose, station_a.xray_cam.pose.invert())
        for seed in seeds:
            obs_a = track.simulate_marker_observation(station_a, marker, noise, seed=seed * 2 + 1)
            obs_b = track.simulate_marker_observation(station_b, marker, noise, seed=seed * 2 + 2)
            est = track.relative_xray_pose(obs_a, obs_b, station_a.rgbd_to_xray)
            delta = compose(est.invert().with_frames(true_rel.to_frame, true_rel.from_frame), true_rel)
            rows.append(
                TrackRow(
                    angle_deg=angle,
                    seed=seed,
                    rotation_err_deg=delta.rotation_angle_deg(),
                    translation_err_mm=float(np.linalg.norm(delta.t)),
                )
            )
    return rows


# ---------------------------------------------------------------------------
# bb epipolar / triangulation study


@dataclass(frozen=True)
class EpipolarRow:
    series: str
    station_angle_deg: float
    bb_id: int
    seed: int
    epipolar_px: float
    triangulated_x_mm: float
    triangulated_y_mm: float
    triangulated_z_mm: float
    error_mm: float


def epipolar_study(
    noise: track.MarkerNoise,
    seeds: list[int],
    geometry: CArmGeometry | None = None,
    orbital_angles: list[float] | None = None,
    cranial_angles: list[float] | None = None,
) -> list[EpipolarRow]:
    """bb phantom experiment: orbital and cranial station series, each paired
    against the AP reference. Pixels are analytic bb projections through the
    true cameras; the stereo geometry comes from the marker-tracked relative
    pose, so every error is a tracking effect."""
    geometry = geometry or PAPER_DETECTOR
    app = default_app_frame(geometry)
    spec = bb_phantom_spec(app)
    bbs = bb_centers(spec)
    marker = default_marker_pose(geometry)

    if orbital_angles is None:
        orbital_angles = list(np.arange(-50.0, 50.0 + 1e-9, 10.0))
    if cranial_angles is None:
        cranial_angles = list(np.arange(-40.0, 40.0 + 1e-9, 10.0))

    rows = []
    for series, angles in (("orbital", orbital_angles), ("cranial", cranial_angles)):
        ref = make_station(geometry, series, 0.0)
        for angle in angles:
            if angle == 0.0:
                continue
            station = make_station(geometry, series, angle)
            for seed in seeds:
                obs_a = track.simulate_marker_observation(
                    ref, marker, noise, seed=seed * 4 + (1 if series == "orbital" else 3)
                )
                obs_b = track.simulate_marker_observation(
                    station, marker, noise, seed=seed * 4 + (2 if series == "orbital" else 4)
                )
                est_rel = track.relative_xray_pose(obs_a, obs_b, ref.rgbd_to_xray)
                est_cam_b = ProjectiveCamera(
                    station.xray_cam.intrinsics,
                    compose(est_rel, ref.xray_cam.pose),
                )
                pair = stereo.StereoPair(ref.xray_cam, est_cam_b, est_rel)
                f = stereo.fundamental_matrix(pair)
                from .geom import project

                px_a = project(ref.xray_cam, bbs)
                px_b = project(station.xray_cam, bbs)
                for i in range(len(bbs)):
                    d = stereo.epipolar_distance(f, px_a[i], px_b[i])
                    tri = stereo.triangulate_midpoint(pair, px_a[i], px_b[i])
                    rows.append(
                        EpipolarRow(
                            series=series,
                            station_angle_deg=float(angle),
                            bb_id=i,
                            seed=seed,
                            epipolar_px=d,
                            triangulated_x_mm=float(tri.point[0]),
                            triangulated_y_mm=float(tri.point[1]),
                            triangulated_z_mm=float(tri.point[2]),
                            error_mm=float(np.linalg.norm(tri.point - bbs[i])),
                        )
                    )
    return rows


def epipolar_summary(rows: list[EpipolarRow]) -> dict:
    d = np.array([r.epipolar_px for r in rows])
    e = np.array([r.error_mm for r in rows])
    return {
        "n": len(rows),
        "epipolar_px_mean": float(d.mean()),
        "epipolar_px_std": float(d.std()),
        "triangulation_rmse_mm": float(np.sqrt(np.mean(e**2))),
    }


# ---------------------------------------------------------------------------
# AR axis-error study


@dataclass(frozen=True)
class ArRow:
    pose_id: int
    axis_deg: float
    tip_mm: float


def ar_study(
    n_poses: int = 10,
    depth_sigma_mm: float = 1.0,
    seed: int = 0,
    geometry: CArmGeometry | None = None,
) -> list[ArRow]:
    """Place the simulated impactor at the planned pose plus a small random
    offset, run cloud -> subtract -> axis fit, and score against the plan."""
    geometry = geometry or CArmGeometry()
    app = default_app_frame(geometry)
    truth = ground_truth_cup_pose(app)
    _, impactor = make_component(54.0)
    station = make_station(geometry, "orbital", 0.0)

    plan_in_xray = compose(station.xray_cam.pose, truth.pose)  # cup -> xray@ap
    xray_to_rgbd = station.rgbd_to_xray.invert().with_frames("xray@ap", "rgbd@ap")
    base_rgbd = arsim.cup_to_rgbd(plan_in_xray, xray_to_rgbd)

    sensor = arsim.SensorGrid(depth_sigma_mm=depth_sigma_mm)
    reference = arsim.empty_reference_frame(sensor)
    rng = np.random.default_rng(seed)
    rows = []
    for pose_id in range(n_poses):
        # vary the planned pose; the simulated operator aligns perfectly, so
        # the residual errors are pure sensing + fitting effects
        axis = rng.normal(size=3)
        angle = rng.uniform(0.0, 10.0)
        dt = rng.normal(scale=20.0, size=3)
        planned = compose(
            RigidTransform.from_axis_angle(
                axis, angle, dt, base_rgbd.to_frame, base_rgbd.to_frame
            ),
            base_rgbd,
        )
        state = arsim.AlignmentState(planned_pose=planned, impactor=impactor, live_pose=planned)
        frame = arsim.simulate_impactor_cloud(
            impactor, planned, sensor, seed=int(rng.integers(0, 2**31))
        )
        moving = arsim.background_subtract(frame, reference, threshold_mm=5.0)
        fit = arsim.fit_principal_axis(moving)
        err = arsim.alignment_error(state, fit.axis, fit.centroid)
        rows.append(ArRow(pose_id=pose_id, axis_deg=err.axis_deg, tip_mm=err.tip_mm))
    return rows
