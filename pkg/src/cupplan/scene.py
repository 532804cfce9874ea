"""Default desk-scale scene: C-arm geometry, anatomical frame, ground-truth
cup pose, and the bb phantom. Everything here is configuration shared by the
CLI, the experiments, and the service; all values can be overridden."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .drr import BbSphere, HemiShell, PhantomSpec, rotate_camera_about
from .geom import PinholeIntrinsics, ProjectiveCamera, RigidTransform
from .implant import AnglePair, APPFrame, CupPose, axis_from_angles
from .track import CArmStation, SensorFrustum

WORLD = "world"


@dataclass(frozen=True)
class CArmGeometry:
    """Mobile C-arm approximation; the AP X-ray camera sits at the world
    origin looking down +Z with the iso-center on its principal axis."""

    source_iso_mm: float = 600.0
    source_detector_mm: float = 1000.0
    detector_px: int = 512
    pixel_spacing_mm: float = 0.44

    def intrinsics(self) -> PinholeIntrinsics:
        f = self.source_detector_mm / self.pixel_spacing_mm
        c = (self.detector_px - 1) / 2
        return PinholeIntrinsics(
            fx=f,
            fy=f,
            cx=c,
            cy=c,
            width=self.detector_px,
            height=self.detector_px,
            pixel_spacing=self.pixel_spacing_mm,
        )

    def iso_center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.source_iso_mm])

    def ap_camera(self) -> ProjectiveCamera:
        pose = RigidTransform.identity(WORLD, "xray@ap")
        return ProjectiveCamera(self.intrinsics(), pose)

    def station_camera(self, axis: str, angle_deg: float) -> ProjectiveCamera:
        if angle_deg == 0.0:
            return self.ap_camera()
        from .drr import ORBIT_AXES

        return rotate_camera_about(
            self.ap_camera(),
            ORBIT_AXES[axis],
            angle_deg,
            self.iso_center(),
            frame_suffix=f"/{axis}{angle_deg:+g}",
        )


PAPER_DETECTOR = CArmGeometry(detector_px=1024, pixel_spacing_mm=0.22)


def default_app_frame(geometry: CArmGeometry | None = None) -> APPFrame:
    """Supine patient under an AP view: patient-left = +x, superior = -y,
    anterior = -z (toward the source); origin at the iso-center."""
    geometry = geometry or CArmGeometry()
    rot = np.diag([1.0, -1.0, -1.0])
    return APPFrame(RigidTransform.from_matrix(rot, geometry.iso_center(), "app", WORLD))


GROUND_TRUTH_ANGLES = AnglePair(40.0, 25.0)


def ground_truth_cup_pose(
    app: APPFrame, angles: AnglePair = GROUND_TRUTH_ANGLES, center_app: np.ndarray | None = None
) -> CupPose:
    """Cup centered at the acetabulum (default: the APP origin) with its axis
    at the requested angles; roll chosen so the pose is deterministic."""
    axis_app = axis_from_angles(angles)
    z = axis_app
    seed = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(seed, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r_app = np.stack([x, y, z], axis=1)
    center = np.zeros(3) if center_app is None else np.asarray(center_app, float)
    pose_app = RigidTransform.from_matrix(r_app, center, "cup", "app")
    world = app.pose
    from .geom import compose

    return CupPose(compose(world, pose_app))


def default_rgbd_mount() -> RigidTransform:
    """RGBD camera rigidly mounted beside the detector, tilted so it looks at
    the surgical site near the iso-center."""
    tilt = RigidTransform.from_axis_angle([0.0, 1.0, 0.0], 8.0, np.zeros(3), "rgbd", "xray")
    offset = np.array([50.0, 0.0, 120.0])
    return RigidTransform(tilt.q, offset, "rgbd", "xray")


def make_station(
    geometry: CArmGeometry,
    axis: str,
    angle_deg: float,
    rgbd_to_xray: RigidTransform | None = None,
    frustum: SensorFrustum | None = None,
) -> CArmStation:
    cam = geometry.station_camera(axis, angle_deg)
    sid = cam.pose.to_frame.removeprefix("xray@")
    return CArmStation(
        station_id=sid,
        xray_cam=cam,
        rgbd_to_xray=(rgbd_to_xray or default_rgbd_mount()),
        orbital_angle_deg=angle_deg if axis == "orbital" else 0.0,
        cranial_angle_deg=angle_deg if axis == "cranial" else 0.0,
        frustum=frustum or SensorFrustum(),
    )


def default_marker_pose(geometry: CArmGeometry | None = None) -> RigidTransform:
    """World-fixed cubic marker on the bed near the phantom, outside the
    X-ray field of view."""
    geometry = geometry or CArmGeometry()
    pos = geometry.iso_center() + np.array([150.0, 80.0, 0.0])
    return RigidTransform.from_axis_angle([0.0, 0.0, 1.0], 30.0, pos, "marker", WORLD)


def bb_phantom_spec(app: APPFrame, seed: int = 7) -> PhantomSpec:
    """Soft-tissue block with a reamed-acetabulum shell and 9 bbs placed
    inside and near the acetabulum."""
    rng = np.random.default_rng(seed)
    center_w = app.pose.t
    shell = HemiShell(
        center=tuple(center_w),
        inner_radius_mm=27.0,
        outer_radius_mm=33.0,
        axis=tuple(app.axis_to_world(axis_from_angles(GROUND_TRUTH_ANGLES))),
        attenuation=0.06,
    )
    bbs = []
    for _ in range(9):
        offset = rng.uniform(-40.0, 40.0, size=3)
        bbs.append(BbSphere(center=tuple(center_w + offset), diameter_mm=1.5, attenuation=2.0))
    return PhantomSpec(
        block_center=tuple(center_w),
        block_size=(180.0, 180.0, 180.0),
        block_attenuation=0.02,
        shell=shell,
        bbs=tuple(bbs),
    )


def bb_centers(spec: PhantomSpec) -> np.ndarray:
    return np.array([bb.center for bb in spec.bbs])


@dataclass(frozen=True)
class ScenePreset:
    """Named bundle of geometry + phantom + ground truth used by the CLI and
    the session service."""

    name: str
    geometry: CArmGeometry = field(default_factory=CArmGeometry)
    separation_axis: str = "orbital"
    separation_deg: float = 20.0
    cup_diameter_mm: float = 54.0
    mesh_resolution: int = 64
    volume_dims: tuple[int, int, int] = (192, 192, 192)
    volume_spacing_mm: float = 1.0

    def with_overrides(self, **kw) -> "ScenePreset":
        return replace(self, **kw)


PRESETS = {
    "user-study-20deg": ScenePreset(name="user-study-20deg", separation_deg=20.0),
    "user-study-45deg": ScenePreset(name="user-study-45deg", separation_deg=45.0),
    "quick": ScenePreset(
        name="quick",
        geometry=CArmGeometry(detector_px=128, pixel_spacing_mm=1.76),
        separation_deg=20.0,
        mesh_resolution=32,
        volume_dims=(64, 64, 64),
        volume_spacing_mm=3.0,
    ),
}
