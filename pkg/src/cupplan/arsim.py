"""AR alignment stage: pose chain into the RGBD frame, simulated depth-sensor
point clouds of the impactor, background subtraction, principal-axis fitting,
and alignment scoring against the committed plan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatch,
    IllConditioned,
    NothingVisible,
    TooFewPoints,
)
from .geom import RigidTransform, axis_angle_between, compose
from .implant import ImpactorModel


def cup_to_rgbd(
    plan_pose_in_xray: RigidTransform, xray_to_rgbd: RigidTransform
) -> RigidTransform:
    """Chain the committed plan (cup -> X-ray) through the mount calibration
    (X-ray -> RGBD) into the RGBD frame."""
    return compose(xray_to_rgbd, plan_pose_in_xray)


@dataclass(frozen=True)
class SensorGrid:
    """Angular sampling grid of the depth sensor (rays from the RGBD origin
    through a pinhole-like direction fan)."""

    fov_h_deg: float = 70.0
    fov_v_deg: float = 55.0
    n_u: int = 320
    n_v: int = 240
    depth_sigma_mm: float = 0.0
    dropout_probability: float = 0.0

    def directions(self) -> np.ndarray:
        """(n_v * n_u, 3) unit ray directions in the sensor frame."""
        au = np.deg2rad(np.linspace(-self.fov_h_deg / 2, self.fov_h_deg / 2, self.n_u))
        av = np.deg2rad(np.linspace(-self.fov_v_deg / 2, self.fov_v_deg / 2, self.n_v))
        tu, tv = np.meshgrid(np.tan(au), np.tan(av), indexing="xy")
        d = np.stack([tu, tv, np.ones_like(tu)], axis=-1).reshape(-1, 3)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class PointCloudFrame:
    points: np.ndarray  # (N, 3) mm, RGBD frame
    timestamp: float
    is_reference: bool
    grid_shape: tuple[int, int]  # (n_v, n_u)
    cell_indices: np.ndarray  # (N,) flat grid cell per point
    depths: np.ndarray  # (N,) distance along the sensor ray, mm

    def __post_init__(self):
        p = np.asarray(self.points, float).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "cell_indices", np.asarray(self.cell_indices, np.int64))
        object.__setattr__(self, "depths", np.asarray(self.depths, float))

    def save_ply(self, path) -> None:
        from pathlib import Path

        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(self.points)}",
            "property float x",
            "property float y",
            "property float z",
            "end_header",
        ]
        lines += [f"{p[0]:.4f} {p[1]:.4f} {p[2]:.4f}" for p in self.points]
        Path(path).write_text("\n".join(lines) + "\n")


def _ray_cylinder_hits(
    origins: np.ndarray, dirs: np.ndarray, radius: float, z_lo: float, z_hi: float
) -> np.ndarray:
    """Nearest positive hit parameter per ray against a capped cylinder along
    the local z axis; NaN where the ray misses."""
    eps = 1e-9
    ox, oy, oz = origins[:, 0], origins[:, 1], origins[:, 2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    best = np.full(len(dirs), np.nan)

    a = dx * dx + dy * dy
    b = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4 * a * c
    ok = (disc >= 0) & (a > eps)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2 * a)
            z = oz + t * dz
            valid = ok & (t > eps) & (z >= z_lo) & (z <= z_hi)
            best = np.fmin(best, np.where(valid, t, np.nan))
        for z_cap in (z_lo, z_hi):
            t = (z_cap - oz) / np.where(np.abs(dz) < eps, np.nan, dz)
            px = ox + t * dx
            py = oy + t * dy
            valid = np.isfinite(t) & (t > eps) & (px * px + py * py <= radius * radius)
            best = np.fmin(best, np.where(valid, t, np.nan))
    return best


def simulate_impactor_cloud(
    impactor: ImpactorModel,
    true_pose: RigidTransform,  # cup frame -> RGBD frame
    sensor: SensorGrid = SensorGrid(),
    seed: int = 0,
    timestamp: float = 0.0,
    is_reference: bool = False,
) -> PointCloudFrame:
    """Visible-surface samples of the impactor cylinder: sensor rays are
    intersected with the capped cylinder, nearest hits kept (self-occlusion
    respected), depth perturbed along the ray. Deterministic per seed."""
    dirs = sensor.directions()
    inv = true_pose.invert()
    o_local = np.broadcast_to(inv.t, dirs.shape)
    d_local = inv.rotate(dirs)
    z_hi = float(impactor.base_point[2])
    z_lo = float(impactor.tip_point[2])
    t = _ray_cylinder_hits(o_local, d_local, impactor.radius, z_lo, z_hi)
    hit = np.isfinite(t)
    if not np.any(hit):
        raise NothingVisible("no sensor ray hits the impactor")

    rng = np.random.default_rng(seed)
    depths = t[hit]
    if sensor.depth_sigma_mm > 0:
        depths = depths + rng.normal(scale=sensor.depth_sigma_mm, size=depths.shape)
    cells = np.nonzero(hit)[0]
    if sensor.dropout_probability > 0:
        keep = rng.random(len(cells)) >= sensor.dropout_probability
        depths, cells = depths[keep], cells[keep]
    points = depths[:, None] * dirs[cells]
    return PointCloudFrame(
        points=points,
        timestamp=timestamp,
        is_reference=is_reference,
        grid_shape=(sensor.n_v, sensor.n_u),
        cell_indices=cells,
        depths=depths,
    )


def empty_reference_frame(sensor: SensorGrid, timestamp: float = 0.0) -> PointCloudFrame:
    """Static-scene reference with no returns (free space)."""
    return PointCloudFrame(
        points=np.zeros((0, 3)),
        timestamp=timestamp,
        is_reference=True,
        grid_shape=(sensor.n_v, sensor.n_u),
        cell_indices=np.zeros(0, np.int64),
        depths=np.zeros(0),
    )


def background_subtract(
    frame: PointCloudFrame, reference: PointCloudFrame, threshold_mm: float
) -> PointCloudFrame:
    """Keep points whose along-ray depth differs from the reference depth at
    the same grid cell by more than the threshold; cells empty in the
    reference keep their points."""
    if not reference.is_reference:
        raise ValueError("reference frame must be flagged is_reference")
    if frame.grid_shape != reference.grid_shape:
        raise GridMismatch(f"{frame.grid_shape} vs {reference.grid_shape}")
    n_cells = reference.grid_shape[0] * reference.grid_shape[1]
    ref_depth = np.full(n_cells, np.nan)
    ref_depth[reference.cell_indices] = reference.depths
    rd = ref_depth[frame.cell_indices]
    keep = np.isnan(rd) | (np.abs(frame.depths - rd) > threshold_mm)
    return PointCloudFrame(
        points=frame.points[keep],
        timestamp=frame.timestamp,
        is_reference=False,
        grid_shape=frame.grid_shape,
        cell_indices=frame.cell_indices[keep],
        depths=frame.depths[keep],
    )


@dataclass(frozen=True)
class PrincipalAxisFit:
    axis: np.ndarray  # unit, sign-canonicalized toward sensor +Z
    centroid: np.ndarray  # mm


def fit_principal_axis(cloud: PointCloudFrame) -> PrincipalAxisFit:
    """Dominant axis of the cloud (largest covariance eigenvector) plus a
    point on that axis.

    For tube-like clouds the raw point centroid lies on the sampled surface
    side, not on the axis; a circle fit in the perpendicular plane re-centers
    it when the cross-section has usable spread.
    """
    pts = cloud.points
    if len(pts) < 3:
        raise TooFewPoints(f"{len(pts)} points")
    centroid = pts.mean(axis=0)
    cov = np.cov((pts - centroid).T)
    evals, evecs = np.linalg.eigh(cov)
    if evals[-2] < 0 or evals[-1] <= 1.5 * max(evals[-2], 1e-30):
        raise IllConditioned("covariance spectrum too isotropic")
    axis = evecs[:, -1]
    if axis[2] < 0:
        axis = -axis
    center = _recenter_on_axis(pts, centroid, axis)
    return PrincipalAxisFit(axis=axis, centroid=center)


def _recenter_on_axis(pts: np.ndarray, centroid: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Algebraic (Kasa) circle fit of the cross-section in the plane
    perpendicular to the axis; falls back to the raw centroid for clouds with
    no radial spread (e.g. points on a line)."""
    u = np.cross(axis, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(axis, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    rel = pts - centroid
    x = rel @ u
    y = rel @ v
    if np.std(np.hypot(x, y)) + np.hypot(x, y).mean() < 1e-6:
        return centroid
    a = np.stack([2 * x, 2 * y, np.ones_like(x)], axis=1)
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy = sol[0], sol[1]
    # reject wild extrapolation when the arc is too shallow to constrain it
    if np.hypot(cx, cy) > 10.0 * (np.hypot(x, y).max() + 1e-9):
        return centroid
    return centroid + cx * u + cy * v


@dataclass(frozen=True)
class AlignmentState:
    planned_pose: RigidTransform  # cup frame -> RGBD frame (via the plan chain)
    impactor: ImpactorModel
    live_pose: RigidTransform | None = None  # simulation ground truth
    current_axis_error_deg: float = 0.0
    current_tip_error_mm: float = 0.0

    def planned_axis(self) -> np.ndarray:
        return self.planned_pose.rotate(self.impactor.axis_direction())

    def planned_tip(self) -> np.ndarray:
        return self.planned_pose.apply(self.impactor.tip_point)


@dataclass(frozen=True)
class AlignmentErrors:
    axis_deg: float
    tip_mm: float


def alignment_error(
    state: AlignmentState, fitted_axis: np.ndarray, fitted_centroid: np.ndarray
) -> AlignmentErrors:
    """Axis-angle error between the fitted and planned impactor axes, plus the
    distance from the planned tip point to the fitted line."""
    axis_deg = axis_angle_between(fitted_axis, state.planned_axis())
    a = np.asarray(fitted_axis, float)
    a = a / np.linalg.norm(a)
    w = state.planned_tip() - np.asarray(fitted_centroid, float)
    tip_mm = float(np.linalg.norm(w - np.dot(w, a) * a))
    return AlignmentErrors(axis_deg=axis_deg, tip_mm=tip_mm)
