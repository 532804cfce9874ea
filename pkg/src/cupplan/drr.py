"""Synthetic radiographs: voxel phantom construction, fixed-step ray-cast
line integrals through the attenuation volume, and C-arm orbit generation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import BadRange, SpecOutOfBounds
from .geom import ProjectiveCamera, RigidTransform, compose

ORBIT_AXES = {"orbital": np.array([0.0, 1.0, 0.0]), "cranial": np.array([1.0, 0.0, 0.0])}


@dataclass(frozen=True)
class VoxelVolume:
    """Scalar attenuation grid (1/mm). `origin` is the world position of the
    center of voxel (0, 0, 0); data is indexed (ix, iy, iz)."""

    spacing: np.ndarray  # (3,) mm
    origin: np.ndarray  # (3,) mm
    data: np.ndarray  # (nx, ny, nz) float32

    def __post_init__(self):
        sp = np.asarray(self.spacing, float).reshape(3)
        org = np.asarray(self.origin, float).reshape(3)
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 2:
            raise ValueError("volume needs at least 2 voxels per axis")
        if np.any(sp <= 0):
            raise ValueError("spacing must be positive")
        if np.any(data < 0):
            raise ValueError("attenuation must be non-negative")
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "origin", org)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """AABB of the voxel extents (half a voxel beyond the center grid)."""
        lo = self.origin - self.spacing / 2
        hi = self.origin + (np.array(self.dims) - 0.5) * self.spacing
        return lo, hi

    def save(self, json_path: str | Path) -> None:
        json_path = Path(json_path)
        raw_name = json_path.with_suffix(".raw").name
        header = {
            "dims": list(self.dims),
            "spacing_mm": self.spacing.tolist(),
            "origin_mm": self.origin.tolist(),
            "dtype": "f32le",
            "data": raw_name,
        }
        json_path.write_text(json.dumps(header, indent=2))
        self.data.astype("<f4").tofile(json_path.parent / raw_name)

    @classmethod
    def load(cls, json_path: str | Path) -> "VoxelVolume":
        json_path = Path(json_path)
        header = json.loads(json_path.read_text())
        if header["dtype"] != "f32le":
            raise ValueError(f"unsupported dtype {header['dtype']}")
        data = np.fromfile(json_path.parent / header["data"], dtype="<f4")
        data = data.reshape(header["dims"])
        return cls(np.asarray(header["spacing_mm"]), np.asarray(header["origin_mm"]), data)


# ---------------------------------------------------------------------------
# phantom primitives


@dataclass(frozen=True)
class BbSphere:
    center: tuple[float, float, float]
    diameter_mm: float = 1.5
    attenuation: float = 2.0


@dataclass(frozen=True)
class HemiShell:
    """Hemispherical shell; the dome lies on the side opposite `axis` (the
    opening faces along +axis)."""

    center: tuple[float, float, float]
    inner_radius_mm: float
    outer_radius_mm: float
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    attenuation: float = 0.06

    def __post_init__(self):
        if not 0 <= self.inner_radius_mm < self.outer_radius_mm:
            raise ValueError("shell radii must satisfy 0 <= inner < outer")


@dataclass(frozen=True)
class PhantomSpec:
    """Desk-scale stand-in for the cadaver anatomy: a soft-tissue block, a
    reamed-acetabulum shell, radiopaque bb markers, and optionally a metal cup
    at the ground-truth pose."""

    block_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    block_size: tuple[float, float, float] = (180.0, 180.0, 180.0)
    block_attenuation: float = 0.02
    shell: HemiShell | None = None
    bbs: tuple[BbSphere, ...] = ()
    metal_cup: HemiShell | None = None

    def __post_init__(self):
        c = np.asarray(self.block_center, float)
        half = np.asarray(self.block_size, float) / 2
        for bb in self.bbs:
            if np.any(np.abs(np.asarray(bb.center) - c) > half):
                raise SpecOutOfBounds(f"bb at {bb.center} outside the block")


def build_phantom(
    spec: PhantomSpec,
    dims: tuple[int, int, int] = (256, 256, 256),
    spacing: float | tuple[float, float, float] = 1.0,
    origin: np.ndarray | None = None,
) -> VoxelVolume:
    """Voxelize the phantom: each voxel sums the attenuations of all
    primitives whose solid contains the voxel center."""
    dims = tuple(int(d) for d in dims)
    sp = np.broadcast_to(np.asarray(spacing, float), (3,)).astype(float)
    if origin is None:
        origin = np.asarray(spec.block_center, float) - (np.array(dims) - 1) * sp / 2
    origin = np.asarray(origin, float)

    data = np.zeros(dims, dtype=np.float32)
    xs = origin[0] + np.arange(dims[0]) * sp[0]
    ys = origin[1] + np.arange(dims[1]) * sp[1]
    c = np.asarray(spec.block_center, float)
    half = np.asarray(spec.block_size, float) / 2

    # slab loop over z keeps the coordinate grids small
    for iz in range(dims[2]):
        z = origin[2] + iz * sp[2]
        px, py = np.meshgrid(xs, ys, indexing="ij")
        pz = np.full_like(px, z)
        slab = np.zeros(px.shape, dtype=np.float32)

        inside_block = (
            (np.abs(px - c[0]) <= half[0])
            & (np.abs(py - c[1]) <= half[1])
            & (np.abs(pz - c[2]) <= half[2])
        )
        slab += spec.block_attenuation * inside_block

        for shell in (spec.shell, spec.metal_cup):
            if shell is None:
                continue
            sc = np.asarray(shell.center, float)
            ax = np.asarray(shell.axis, float)
            ax = ax / np.linalg.norm(ax)
            dx, dy, dz = px - sc[0], py - sc[1], pz - sc[2]
            r2 = dx * dx + dy * dy + dz * dz
            dome = dx * ax[0] + dy * ax[1] + dz * ax[2] <= 0
            in_shell = (
                (r2 >= shell.inner_radius_mm**2) & (r2 <= shell.outer_radius_mm**2) & dome
            )
            slab += shell.attenuation * in_shell

        for bb in spec.bbs:
            bc = np.asarray(bb.center, float)
            r2 = (px - bc[0]) ** 2 + (py - bc[1]) ** 2 + (pz - bc[2]) ** 2
            slab += bb.attenuation * (r2 <= (bb.diameter_mm / 2) ** 2)

        data[:, :, iz] = slab
    return VoxelVolume(sp, origin, data)


# ---------------------------------------------------------------------------
# DRR rendering


@dataclass(frozen=True)
class XrayImage:
    pixels: np.ndarray  # (height, width) intensity in [0, 1]; 1 = air
    camera: ProjectiveCamera

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 1:
            raise ValueError("intensities must be finite and in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_uint16(self) -> np.ndarray:
        return np.round(self.pixels.astype(np.float64) * 65535).astype(np.uint16)

    def save_pgm(self, path: str | Path) -> None:
        arr = self.to_uint16()
        with open(path, "wb") as f:
            f.write(f"P5\n{self.width} {self.height}\n65535\n".encode())
            f.write(arr.astype(">u2").tobytes())

    def save_png(self, path: str | Path) -> None:
        from PIL import Image

        Image.fromarray(self.to_uint16()).save(path)


def _ray_integrals(
    vol: VoxelVolume, origins: np.ndarray, dirs: np.ndarray, step_mm: float
) -> np.ndarray:
    """Fixed-step trilinear line integrals of attenuation for unit-direction
    rays; rays missing the volume integrate to zero."""
    lo, hi = vol.bounds()
    # nudge exactly axis-parallel components so the slab test stays finite
    safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    t_lo = (lo - origins) / safe
    t_hi = (hi - origins) / safe
    t0 = np.maximum(np.max(np.minimum(t_lo, t_hi), axis=1), 0.0)
    t1 = np.min(np.maximum(t_lo, t_hi), axis=1)
    span = np.maximum(t1 - t0, 0.0)

    n_steps = np.ceil(span / step_mm).astype(int)
    n_max = int(n_steps.max(initial=0))
    out = np.zeros(len(origins))
    if n_max == 0:
        return out

    k = np.arange(n_max)
    ts = t0[:, None] + (k[None, :] + 0.5) * step_mm
    valid = k[None, :] < n_steps[:, None]
    pts = origins[:, None, :] + ts[:, :, None] * dirs[:, None, :]
    idx = (pts - vol.origin) / vol.spacing  # voxel-index coordinates
    coords = idx.reshape(-1, 3).T
    mu = map_coordinates(vol.data, coords, order=1, mode="constant", cval=0.0, prefilter=False)
    mu = mu.reshape(len(origins), n_max)
    out = step_mm * np.sum(mu * valid, axis=1)
    return out


def raycast_drr(
    vol: VoxelVolume,
    cam: ProjectiveCamera,
    step_mm: float | None = None,
    row_chunk: int = 32,
) -> XrayImage:
    """Render a radiograph: per pixel, exp(-integral of attenuation) along the
    backprojected ray (air = 1)."""
    if step_mm is None:
        step_mm = float(min(vol.spacing)) / 2
    if step_mm > min(vol.spacing) / 2 + 1e-12:
        raise ValueError("step_mm must be <= min(spacing)/2")
    k = cam.intrinsics
    cam_to_world = cam.pose.invert()
    origin = cam_to_world.t
    r = cam_to_world.rotation_matrix

    u = np.arange(k.width)
    img = np.empty((k.height, k.width), dtype=np.float32)
    for v0 in range(0, k.height, row_chunk):
        v = np.arange(v0, min(v0 + row_chunk, k.height))
        uu, vv = np.meshgrid(u, v, indexing="xy")
        d_cam = np.stack(
            [(uu - k.cx) / k.fx, (vv - k.cy) / k.fy, np.ones_like(uu, dtype=float)], axis=-1
        )
        d_world = d_cam.reshape(-1, 3) @ r.T
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        origins = np.broadcast_to(origin, d_world.shape)
        integrals = _ray_integrals(vol, origins, d_world, step_mm)
        img[v0 : v0 + len(v), :] = np.exp(-integrals).reshape(len(v), k.width)
    return XrayImage(np.clip(img, 0.0, 1.0), cam)


# ---------------------------------------------------------------------------
# orbits


def angle_sequence(start_deg: float, end_deg: float, step_deg: float) -> np.ndarray:
    if step_deg <= 0:
        raise BadRange("step must be positive")
    span = end_deg - start_deg
    if span <= 0:
        raise BadRange("end must exceed start")
    n = span / step_deg
    if abs(n - round(n)) > 1e-9:
        raise BadRange(f"step {step_deg} does not divide range {span}")
    return start_deg + step_deg * np.arange(int(round(n)) + 1)


def rotate_camera_about(
    base_cam: ProjectiveCamera,
    axis: np.ndarray,
    angle_deg: float,
    rotation_center: np.ndarray,
    frame_suffix: str = "",
) -> ProjectiveCamera:
    """Rotate a camera rigidly about an axis through `rotation_center`."""
    center = np.asarray(rotation_center, float)
    world = base_cam.pose.from_frame
    rot = RigidTransform.from_axis_angle(axis, angle_deg, np.zeros(3), world, world)
    rot = RigidTransform(rot.q, center - rot.rotation_matrix @ center, world, world)
    new_frame = base_cam.pose.to_frame + frame_suffix
    pose = compose(base_cam.pose.with_frames(world, new_frame), rot.invert())
    return ProjectiveCamera(base_cam.intrinsics, pose)


def generate_orbit(
    base_cam: ProjectiveCamera,
    axis: str,
    start_deg: float,
    end_deg: float,
    step_deg: float,
    rotation_center: np.ndarray,
) -> list[ProjectiveCamera]:
    """Cameras along a C-arm orbit about the iso-center; angle 0 is the base
    (AP) view and the source-to-detector geometry is preserved."""
    if axis not in ORBIT_AXES:
        raise BadRange(f"axis must be one of {sorted(ORBIT_AXES)}")
    angles = angle_sequence(start_deg, end_deg, step_deg)
    return [
        rotate_camera_about(
            base_cam, ORBIT_AXES[axis], a, rotation_center, frame_suffix=f"/{axis}{a:+g}"
        )
        for a in angles
    ]
