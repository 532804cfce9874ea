"""Rigid-body and pinhole-camera algebra.

Conventions (fixed package-wide):
  - right-handed coordinates, millimetres
  - camera looks down its +Z axis
  - image origin top-left, u to the right, v down
  - quaternions are scalar-first (w, x, y, z) and kept unit-norm
  - every transform carries frame labels checked at composition time
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, FrameMismatch, ZeroVector

_EPS_DEPTH = 1e-6


# ---------------------------------------------------------------------------
# quaternion helpers (scalar-first)

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ZeroVector("quaternion has zero norm")
    q = q / n
    # canonical sign: w >= 0, so identical rotations compare equal
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ZeroVector("rotation axis has zero norm")
    axis = axis / n
    h = 0.5 * angle_rad
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RigidTransform:
    """Frame-tagged 6-DOF pose mapping points of `from_frame` into `to_frame`."""

    q: np.ndarray  # unit quaternion (w, x, y, z)
    t: np.ndarray  # translation, mm
    from_frame: str
    to_frame: str

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(self.q))
        t = np.asarray(self.t, dtype=float).reshape(3).copy()
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        self.q.setflags(write=False)

    # construction -----------------------------------------------------------

    @classmethod
    def identity(cls, frame: str, to_frame: str | None = None) -> "RigidTransform":
        return cls(np.array([1.0, 0, 0, 0]), np.zeros(3), frame, to_frame or frame)

    @classmethod
    def from_matrix(
        cls, rotation: np.ndarray, translation, from_frame: str, to_frame: str
    ) -> "RigidTransform":
        return cls(matrix_to_quat(rotation), np.asarray(translation, float), from_frame, to_frame)

    @classmethod
    def from_axis_angle(
        cls, axis, angle_deg: float, translation, from_frame: str, to_frame: str
    ) -> "RigidTransform":
        q = quat_from_axis_angle(np.asarray(axis, float), np.deg2rad(angle_deg))
        return cls(q, np.asarray(translation, float), from_frame, to_frame)

    # algebra ----------------------------------------------------------------

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.t
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map point(s) of shape (3,) or (N, 3) into the target frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix.T + self.t

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vector(s); no translation."""
        return np.asarray(vectors, dtype=float) @ self.rotation_matrix.T

    def invert(self) -> "RigidTransform":
        qi = quat_conjugate(self.q)
        ti = -quat_to_matrix(qi) @ self.t
        return RigidTransform(qi, ti, self.to_frame, self.from_frame)

    def with_frames(self, from_frame: str, to_frame: str) -> "RigidTransform":
        """Relabel without changing the geometry (e.g. per-station copies)."""
        return RigidTransform(self.q, self.t, from_frame, to_frame)

    def rotation_angle_deg(self) -> float:
        return float(np.rad2deg(2.0 * np.arccos(np.clip(abs(self.q[0]), -1.0, 1.0))))

    # serialization ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "from": self.from_frame,
            "to": self.to_frame,
            "q": [float(v) for v in self.q],
            "t_mm": [float(v) for v in self.t],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.asarray(d["q"], float), np.asarray(d["t_mm"], float), d["from"], d["to"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, s: str) -> "RigidTransform":
        return cls.from_json_dict(json.loads(s))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Chain two transforms: the result applies b first, then a."""
    if b.to_frame != a.from_frame:
        raise FrameMismatch(
            f"cannot chain {b.from_frame}->{b.to_frame} into {a.from_frame}->{a.to_frame}"
        )
    q = quat_multiply(a.q, b.q)
    t = a.rotation_matrix @ b.t + a.t
    return RigidTransform(q, t, b.from_frame, a.to_frame)


def compose_chain(*transforms: RigidTransform) -> RigidTransform:
    """compose(t0, t1, ..., tn): tn applied first."""
    out = transforms[0]
    for nxt in transforms[1:]:
        out = compose(out, nxt)
    return out


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pixel_spacing: float = 1.0  # mm / pixel on the detector

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_json_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "pixel_spacing_mm": self.pixel_spacing,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PinholeIntrinsics":
        return cls(
            fx=d["fx"],
            fy=d["fy"],
            cx=d["cx"],
            cy=d["cy"],
            width=d["width"],
            height=d["height"],
            pixel_spacing=d.get("pixel_spacing_mm", 1.0),
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit

    def __post_init__(self):
        o = np.asarray(self.origin, float).reshape(3)
        d = np.asarray(self.direction, float).reshape(3)
        n = np.linalg.norm(d)
        if n < 1e-9:
            raise ZeroVector("ray direction has zero norm")
        d = d / n
        o.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def point_at(self, s: float) -> np.ndarray:
        return self.origin + s * self.direction


@dataclass(frozen=True)
class ProjectiveCamera:
    """Pinhole camera: intrinsics plus a world -> camera pose."""

    intrinsics: PinholeIntrinsics
    pose: RigidTransform = field(default_factory=lambda: RigidTransform.identity("world", "camera"))

    @property
    def center(self) -> np.ndarray:
        """Camera center (source position) in the world frame."""
        return self.pose.invert().t

    def to_json_dict(self) -> dict:
        return {"intrinsics": self.intrinsics.to_json_dict(), "pose": self.pose.to_json_dict()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ProjectiveCamera":
        return cls(
            PinholeIntrinsics.from_json_dict(d["intrinsics"]),
            RigidTransform.from_json_dict(d["pose"]),
        )


def project(cam: ProjectiveCamera, p_world: np.ndarray) -> np.ndarray:
    """Project world point(s) (3,) or (N, 3) to pixel coordinates."""
    p = cam.pose.apply(p_world)
    z = p[..., 2]
    if np.any(z <= _EPS_DEPTH):
        raise BehindCamera("point at non-positive depth")
    k = cam.intrinsics
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def backproject_ray(cam: ProjectiveCamera, px: np.ndarray) -> Ray:
    """World-frame ray from the camera center through a pixel."""
    px = np.asarray(px, float).reshape(2)
    if not np.all(np.isfinite(px)):
        raise ValueError("pixel coordinates must be finite")
    k = cam.intrinsics
    d_cam = np.array([(px[0] - k.cx) / k.fx, (px[1] - k.cy) / k.fy, 1.0])
    cam_to_world = cam.pose.invert()
    return Ray(cam_to_world.t, cam_to_world.rotate(d_cam))


def axis_angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Sign-invariant angle between two axes, degrees in [0, 90]."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-9 or nv < 1e-9:
        raise ZeroVector("axis has (near-)zero norm")
    c = abs(float(np.dot(u, v)) / (nu * nv))
    return float(np.rad2deg(np.arccos(np.clip(c, 0.0, 1.0))))
