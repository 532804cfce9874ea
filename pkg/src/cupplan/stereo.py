"""Two-view geometry: fundamental matrix from calibrated poses, epipolar
distances, and midpoint triangulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline, FrameMismatch, ParallelRays
from .geom import ProjectiveCamera, RigidTransform, backproject_ray, compose


@dataclass(frozen=True)
class StereoPair:
    cam_a: ProjectiveCamera
    cam_b: ProjectiveCamera
    relative: RigidTransform  # frame of cam_a -> frame of cam_b

    def __post_init__(self):
        if (
            self.relative.from_frame != self.cam_a.pose.to_frame
            or self.relative.to_frame != self.cam_b.pose.to_frame
        ):
            raise FrameMismatch("relative pose labels do not match the cameras")

    @classmethod
    def from_cameras(cls, cam_a: ProjectiveCamera, cam_b: ProjectiveCamera) -> "StereoPair":
        rel = compose(cam_b.pose, cam_a.pose.invert())
        return cls(cam_a, cam_b, rel)


@dataclass(frozen=True)
class EpipolarLine:
    """Normalized pixel line a*u + b*v + c = 0 with a^2 + b^2 = 1."""

    a: float
    b: float
    c: float

    @classmethod
    def from_coefficients(cls, coeffs: np.ndarray) -> "EpipolarLine":
        a, b, c = np.asarray(coeffs, float)
        n = float(np.hypot(a, b))
        if n < 1e-15:
            raise DegenerateBaseline("epipolar line degenerate")
        return cls(a / n, b / n, c / n)

    def distance(self, px: np.ndarray) -> float:
        u, v = np.asarray(px, float)
        return float(abs(self.a * u + self.b * v + self.c))


def _skew(t: np.ndarray) -> np.ndarray:
    return np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0.0]])


def fundamental_matrix(pair: StereoPair) -> np.ndarray:
    """F = K_b^-T [t]x R K_a^-1 with x_b = R x_a + t, so x_b^T F x_a = 0."""
    r = pair.relative.rotation_matrix
    t = pair.relative.t
    if np.linalg.norm(t) < 1e-6:
        raise DegenerateBaseline("baseline (near-)zero")
    ka = pair.cam_a.intrinsics.matrix()
    kb = pair.cam_b.intrinsics.matrix()
    f = np.linalg.inv(kb).T @ _skew(t) @ r @ np.linalg.inv(ka)
    return f / np.linalg.norm(f)


def epipolar_line(f: np.ndarray, px_a: np.ndarray) -> EpipolarLine:
    u, v = np.asarray(px_a, float)
    return EpipolarLine.from_coefficients(f @ np.array([u, v, 1.0]))


def epipolar_distance(f: np.ndarray, px_a: np.ndarray, px_b: np.ndarray) -> float:
    """Perpendicular pixel distance from px_b to the epipolar line of px_a."""
    return epipolar_line(f, px_a).distance(px_b)


@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray  # mm, world frame
    ray_gap_mm: float  # length of the common perpendicular segment


def triangulate_midpoint(
    pair: StereoPair, px_a: np.ndarray, px_b: np.ndarray
) -> TriangulationResult:
    """Midpoint of the common perpendicular between the two backprojected rays."""
    ra = backproject_ray(pair.cam_a, px_a)
    rb = backproject_ray(pair.cam_b, px_b)
    da, db = ra.direction, rb.direction
    cross = np.cross(da, db)
    denom = float(np.dot(cross, cross))
    if np.sqrt(denom) < 1e-4:  # sin of the angle between unit rays
        raise ParallelRays("rays (near-)parallel")
    w = rb.origin - ra.origin
    # solve for the closest points ra(s), rb(t)
    s = float(np.dot(np.cross(w, db), cross)) / denom
    t = float(np.dot(np.cross(w, da), cross)) / denom
    pa = ra.point_at(s)
    pb = rb.point_at(t)
    return TriangulationResult(point=(pa + pb) / 2, ray_gap_mm=float(np.linalg.norm(pa - pb)))
