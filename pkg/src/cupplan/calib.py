"""Rigid co-calibration between the X-ray and RGB(D) cameras.

The calibration input is a set of matched 3D checkerboard-corner locations
expressed in both camera frames; the output is the closed-form least-squares
rigid transform between them (orthogonal Procrustes on the cross-covariance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, LengthMismatch
from .geom import ProjectiveCamera, RigidTransform, project


@dataclass(frozen=True)
class CorrespondenceSet3D:
    """Index-matched 3D points in two frames (a maps to b)."""

    points_a: np.ndarray  # (N, 3) mm, frame A
    points_b: np.ndarray  # (N, 3) mm, frame B
    frame_a: str = "rgb"
    frame_b: str = "xray"

    def __post_init__(self):
        pa = np.atleast_2d(np.asarray(self.points_a, float))
        pb = np.atleast_2d(np.asarray(self.points_b, float))
        if pa.shape != pb.shape:
            raise LengthMismatch(f"{pa.shape[0]} points in A vs {pb.shape[0]} in B")
        if pa.shape[0] < 3:
            raise DegenerateConfiguration("need at least 3 correspondences")
        _check_not_collinear(pa)
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)

    def to_json_dict(self) -> dict:
        return {"a_mm": self.points_a.tolist(), "b_mm": self.points_b.tolist()}

    @classmethod
    def from_json_dict(cls, d: dict, frame_a: str = "rgb", frame_b: str = "xray"):
        return cls(np.asarray(d["a_mm"], float), np.asarray(d["b_mm"], float), frame_a, frame_b)


def _check_not_collinear(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if len(s) < 2 or s[1] <= 1e-6:
        raise DegenerateConfiguration("points are (near-)collinear")


@dataclass(frozen=True)
class CalibrationResult:
    transform: RigidTransform  # frame A -> frame B
    rms_residual_mm: float
    per_camera_reprojection_px: tuple[float, float] | None = None

    def to_json_dict(self) -> dict:
        d = {
            "transform": self.transform.to_json_dict(),
            "rms_residual_mm": self.rms_residual_mm,
        }
        if self.per_camera_reprojection_px is not None:
            d["per_camera_reprojection_px"] = list(self.per_camera_reprojection_px)
        return d


def register_rigid(c: CorrespondenceSet3D) -> CalibrationResult:
    """Closed-form rigid transform minimizing sum ||T a_i - b_i||^2.

    Centroid subtraction, SVD of the cross-covariance, reflection corrected so
    det(R) = +1.
    """
    a, b = c.points_a, c.points_b
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    transform = RigidTransform.from_matrix(r, t, c.frame_a, c.frame_b)
    residuals = transform.apply(a) - b
    rms = float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))
    return CalibrationResult(transform=transform, rms_residual_mm=rms)


def reprojection_error(
    cam: ProjectiveCamera, world_points: np.ndarray, measured_px: np.ndarray
) -> float:
    """Mean Euclidean pixel distance between projections and measurements."""
    world_points = np.atleast_2d(np.asarray(world_points, float))
    measured_px = np.atleast_2d(np.asarray(measured_px, float))
    if world_points.shape[0] != measured_px.shape[0]:
        raise LengthMismatch("point and measurement counts differ")
    proj = project(cam, world_points)
    return float(np.mean(np.linalg.norm(proj - measured_px, axis=1)))


@dataclass(frozen=True)
class BoardSpec:
    rows: int = 6
    cols: int = 8
    square_mm: float = 25.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("board needs at least 2x2 corners")
        if self.square_mm <= 0:
            raise ValueError("square size must be positive")

    def corners(self) -> np.ndarray:
        """Corner grid in the board frame, z = 0, (rows*cols, 3) mm."""
        ii, jj = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.stack(
            [jj.ravel() * self.square_mm, ii.ravel() * self.square_mm, np.zeros(ii.size)], axis=1
        )


@dataclass(frozen=True)
class CheckerboardSim:
    """Synthetic calibration acquisition under a known ground-truth transform."""

    correspondences: CorrespondenceSet3D
    pixels_a: np.ndarray  # (N, 2) noisy detections in camera A
    pixels_b: np.ndarray  # (N, 2) noisy detections in camera B
    ground_truth: RigidTransform  # frame A -> frame B


def simulate_checkerboard_views(
    board: BoardSpec,
    n_poses: int,
    ground_truth: RigidTransform,
    cam_a: ProjectiveCamera,
    cam_b: ProjectiveCamera,
    noise_3d_mm: float = 0.0,
    noise_px: float = 0.0,
    seed: int = 0,
) -> CheckerboardSim:
    """Generate matched corner sets in both camera frames.

    The board is posed randomly in front of camera A for each view; corner
    locations in frame B follow from the ground-truth transform, then both
    sides get independent isotropic 3D noise; ``noise_3d_mm`` is the rms
    magnitude of each corner's displacement vector (per-axis sigma is
    noise_3d_mm / sqrt(3)). Pixel measurements are the projections of the
    noiseless corners plus pixel noise. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    pts_a = []
    for _ in range(n_poses):
        axis = rng.normal(size=3)
        angle = rng.uniform(-25.0, 25.0)
        center = np.array(
            [rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(400, 800)]
        )
        board_pose = RigidTransform.from_axis_angle(axis, angle, center, "board", cam_a.pose.to_frame)
        corners = board.corners() - board.corners().mean(axis=0)
        pts_a.append(board_pose.apply(corners))
    pts_a = np.concatenate(pts_a, axis=0)
    pts_b = ground_truth.apply(pts_a)

    world_from_a = cam_a.pose.invert()
    pts_world = world_from_a.apply(pts_a)
    px_a = project(cam_a, pts_world)
    px_b = project(cam_b, pts_world)

    sigma_axis = noise_3d_mm / np.sqrt(3.0)
    noisy_a = pts_a + rng.normal(scale=1.0, size=pts_a.shape) * sigma_axis
    noisy_b = pts_b + rng.normal(scale=1.0, size=pts_b.shape) * sigma_axis
    px_a = px_a + rng.normal(scale=1.0, size=px_a.shape) * noise_px
    px_b = px_b + rng.normal(scale=1.0, size=px_b.shape) * noise_px

    corr = CorrespondenceSet3D(noisy_a, noisy_b, cam_a.pose.to_frame, cam_b.pose.to_frame)
    return CheckerboardSim(corr, px_a, px_b, ground_truth)
