"""Acetabular cup and impactor geometry.

Cup frame: origin at the hemisphere center, +Z along the opening axis; the
dome occupies z in [-R, 0] and the rim circle lies in the z = 0 plane. The
impactor is a cylinder attached at the pole, extending along -Z.

Angle convention (radiographic, relative to the anterior-pelvic-plane frame
with x = patient-left, y = superior, z = anterior):
  axis(RI, RA) = (sin RI cos RA, -cos RI cos RA, sin RA)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadResolution, EmptyContour, GimbalDegenerate
from .geom import (
    ProjectiveCamera,
    RigidTransform,
    project,
    quat_from_axis_angle,
    quat_multiply,
)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (N, 3) mm
    normals: np.ndarray  # (N, 3) unit
    triangles: np.ndarray  # (M, 3) vertex indices

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, float))
        object.__setattr__(self, "normals", np.asarray(self.normals, float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, np.int64))

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)
        return np.unique(np.sort(e, axis=1), axis=0)

    def save_ply(self, path: str | Path) -> None:
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(self.vertices)}",
            "property float x",
            "property float y",
            "property float z",
            "property float nx",
            "property float ny",
            "property float nz",
            f"element face {len(self.triangles)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for v, n in zip(self.vertices, self.normals):
            lines.append(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {n[0]:.6f} {n[1]:.6f} {n[2]:.6f}")
        for t in self.triangles:
            lines.append(f"3 {t[0]} {t[1]} {t[2]}")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class CupModel:
    outer_radius: float
    resolution: int
    mesh: TriangleMesh
    hemisphere_vertex_count: int  # leading vertices of the mesh lie on the sphere


@dataclass(frozen=True)
class ImpactorModel:
    radius: float
    length: float
    mesh: TriangleMesh
    # both in the cup frame; the axis is collinear with the cup +Z axis
    base_point: np.ndarray  # attachment at the cup pole
    tip_point: np.ndarray  # free end, grasped by the operator

    def axis_direction(self) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])


def _grid_mesh(rows: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stitch equal-length vertex rows into a quad-split triangle strip."""
    ncol = len(rows[0])
    verts = np.concatenate(rows, axis=0)
    tris = []
    for i in range(len(rows) - 1):
        for j in range(ncol - 1):
            a = i * ncol + j
            b = a + 1
            c = a + ncol
            d = c + 1
            tris.append([a, c, b])
            tris.append([b, c, d])
    return verts, np.asarray(tris, np.int64)


def make_component(
    cup_diameter_mm: float, mesh_resolution: int = 32
) -> tuple[CupModel, ImpactorModel]:
    """Cup hemisphere (closed by a rim disk) and its attached impactor
    cylinder, both in the cup frame."""
    if cup_diameter_mm <= 0:
        raise ValueError("diameter must be positive")
    if mesh_resolution < 8:
        raise BadResolution("resolution must be >= 8 segments")
    res = int(mesh_resolution)
    radius = cup_diameter_mm / 2.0
    rings = res // 2
    psi = np.linspace(0.0, 2 * np.pi, res + 1)  # seam duplicated

    rows = []
    for i in range(rings + 1):
        theta = (i / rings) * (np.pi / 2)  # 0 at the pole (-Z), pi/2 at the rim
        s, c = np.sin(theta), np.cos(theta)
        row = np.stack(
            [radius * s * np.cos(psi), radius * s * np.sin(psi), -radius * c * np.ones_like(psi)],
            axis=1,
        )
        rows.append(row)
    verts, tris = _grid_mesh(rows)
    n_hemi = len(verts)
    normals = verts / np.linalg.norm(verts, axis=1, keepdims=True)

    # rim disk: fan from a center vertex in the z = 0 plane (outward normal +Z)
    center_idx = len(verts)
    verts = np.concatenate([verts, np.zeros((1, 3))], axis=0)
    normals = np.concatenate([normals, np.array([[0.0, 0.0, 1.0]])], axis=0)
    rim_start = (rings) * (res + 1)
    fan = [[center_idx, rim_start + j, rim_start + j + 1] for j in range(res)]
    tris = np.concatenate([tris, np.asarray(fan, np.int64)], axis=0)

    cup = CupModel(
        outer_radius=radius,
        resolution=res,
        mesh=TriangleMesh(verts, normals, tris),
        hemisphere_vertex_count=n_hemi,
    )

    imp_radius, imp_length = 5.0, 300.0
    z_hi = -radius
    z_lo = z_hi - imp_length
    ring = np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=1)
    row_lo = imp_radius * ring + np.array([0, 0, z_lo])
    row_hi = imp_radius * ring + np.array([0, 0, z_hi])
    cverts, ctris = _grid_mesh([row_lo, row_hi])
    cnormals = np.concatenate([ring, ring], axis=0)
    # end caps
    cap_lo = len(cverts)
    cap_hi = cap_lo + 1
    cverts = np.concatenate([cverts, [[0, 0, z_lo], [0, 0, z_hi]]], axis=0)
    cnormals = np.concatenate([cnormals, [[0, 0, -1.0], [0, 0, 1.0]]], axis=0)
    ncol = res + 1
    cap_tris = [[cap_lo, j + 1, j] for j in range(res)]
    cap_tris += [[cap_hi, ncol + j, ncol + j + 1] for j in range(res)]
    ctris = np.concatenate([ctris, np.asarray(cap_tris, np.int64)], axis=0)

    impactor = ImpactorModel(
        radius=imp_radius,
        length=imp_length,
        mesh=TriangleMesh(cverts, cnormals, ctris),
        base_point=np.array([0.0, 0.0, z_hi]),
        tip_point=np.array([0.0, 0.0, z_lo]),
    )
    return cup, impactor


# ---------------------------------------------------------------------------
# angle algebra


@dataclass(frozen=True)
class AnglePair:
    inclination_deg: float  # abduction, RI
    anteversion_deg: float  # RA

    def __post_init__(self):
        if not (0.0 <= self.inclination_deg < 180.0):
            raise ValueError("inclination must be in [0, 180)")
        if not (-90.0 < self.anteversion_deg < 90.0):
            raise ValueError("anteversion must be in (-90, 90)")


@dataclass(frozen=True)
class APPFrame:
    """Anterior pelvic plane frame: x = patient-left, y = superior, z = anterior."""

    pose: RigidTransform  # APP -> world

    def axis_to_world(self, axis_app: np.ndarray) -> np.ndarray:
        return self.pose.rotate(axis_app)

    def axis_from_world(self, axis_world: np.ndarray) -> np.ndarray:
        return self.pose.invert().rotate(axis_world)


def axis_from_angles(a: AnglePair) -> np.ndarray:
    ri = np.deg2rad(a.inclination_deg)
    ra = np.deg2rad(a.anteversion_deg)
    return np.array([np.sin(ri) * np.cos(ra), -np.cos(ri) * np.cos(ra), np.sin(ra)])


def angles_from_axis(axis: np.ndarray) -> AnglePair:
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    if np.hypot(axis[0], axis[1]) < 1e-9:
        raise GimbalDegenerate("axis (anti)parallel to anterior; inclination undefined")
    ra = np.rad2deg(np.arcsin(np.clip(axis[2], -1.0, 1.0)))
    ri = np.rad2deg(np.arctan2(axis[0], -axis[1]))
    if ri < 0:
        ri += 360.0
    if ri >= 180.0:
        # fold the antipodal representation back into range
        ri -= 180.0
        ra = -ra
    return AnglePair(float(ri), float(ra))


@dataclass(frozen=True)
class CupPose:
    pose: RigidTransform  # cup -> world

    @property
    def center(self) -> np.ndarray:
        return self.pose.t

    def axis_world(self) -> np.ndarray:
        return self.pose.rotate(np.array([0.0, 0.0, 1.0]))

    def angles(self, app: APPFrame) -> AnglePair:
        return angles_from_axis(app.axis_from_world(self.axis_world()))


# ---------------------------------------------------------------------------
# projection and silhouettes


def project_component(
    model: CupModel | ImpactorModel, cup_pose: CupPose, cams: list[ProjectiveCamera]
) -> list[np.ndarray]:
    """Per-camera pixel positions of every mesh vertex."""
    world_v = cup_pose.pose.apply(model.mesh.vertices)
    return [project(cam, world_v) for cam in cams]


def silhouette_vertices(
    model: CupModel | ImpactorModel, cup_pose: CupPose, cam: ProjectiveCamera, tau: float = 0.12
) -> np.ndarray:
    """Indices of vertices whose viewing ray is nearly tangent to the surface."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must be in (0, 1)")
    world_v = cup_pose.pose.apply(model.mesh.vertices)
    world_n = cup_pose.pose.rotate(model.mesh.normals)
    rays = world_v - cam.center
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    dots = np.abs(np.sum(rays * world_n, axis=1))
    idx = np.nonzero(dots < tau)[0]
    if len(idx) == 0:
        raise EmptyContour(f"no silhouette vertices at tau={tau}")
    return idx


def silhouette_contour(
    model: CupModel | ImpactorModel, cup_pose: CupPose, cam: ProjectiveCamera, tau: float = 0.12
) -> list[np.ndarray]:
    """Silhouette as ordered pixel polylines, chained by mesh adjacency."""
    idx = silhouette_vertices(model, cup_pose, cam, tau)
    world_v = cup_pose.pose.apply(model.mesh.vertices[idx])
    px = project(cam, world_v)
    px_by_vertex = {int(v): px[i] for i, v in enumerate(idx)}

    selected = set(int(v) for v in idx)
    adj: dict[int, set[int]] = {v: set() for v in selected}
    for a, b in model.mesh.edges():
        a, b = int(a), int(b)
        if a in selected and b in selected:
            adj[a].add(b)
            adj[b].add(a)

    polylines = []
    visited: set[int] = set()
    order = sorted(selected)
    for start in order:
        if start in visited:
            continue
        # component members
        comp = []
        stack = [start]
        seen = {start}
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        visited |= seen
        # walk from an endpoint if the component is an open chain
        endpoints = [v for v in comp if len(adj[v] & seen) <= 1]
        cur = min(endpoints) if endpoints else min(comp)
        chain = [cur]
        used = {cur}
        while True:
            nxt = [w for w in sorted(adj[cur]) if w in seen and w not in used]
            if not nxt:
                break
            cur = nxt[0]
            chain.append(cur)
            used.add(cur)
        polylines.append(np.array([px_by_vertex[v] for v in chain]))
    return polylines


def contour_points(
    model: CupModel | ImpactorModel, cup_pose: CupPose, cam: ProjectiveCamera, tau: float = 0.12
) -> np.ndarray:
    """Unordered silhouette pixel set (the planner's distance metric input)."""
    idx = silhouette_vertices(model, cup_pose, cam, tau)
    return project(cam, cup_pose.pose.apply(model.mesh.vertices[idx]))


def preset_orientation(
    desired: AnglePair, app_in_world: APPFrame, current: CupPose
) -> CupPose:
    """Re-orient the cup so its axis hits the requested angles, keeping the
    translation and resolving the free roll by the minimal rotation from the
    current pose."""
    target_world = app_in_world.axis_to_world(axis_from_angles(desired))
    current_world = current.axis_world()
    c = float(np.clip(np.dot(current_world, target_world), -1.0, 1.0))
    cross = np.cross(current_world, target_world)
    s = np.linalg.norm(cross)
    if s < 1e-12:
        if c > 0:
            return current
        # antiparallel: rotate 180 degrees about any perpendicular axis
        perp = np.cross(current_world, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(current_world, [0.0, 1.0, 0.0])
        q_align = quat_from_axis_angle(perp, np.pi)
    else:
        q_align = quat_from_axis_angle(cross / s, float(np.arctan2(s, c)))
    q = quat_multiply(q_align, current.pose.q)
    return CupPose(
        RigidTransform(q, current.pose.t, current.pose.from_frame, current.pose.to_frame)
    )
