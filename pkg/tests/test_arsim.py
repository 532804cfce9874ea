import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cupplan.arsim import (
    AlignmentState,
    PointCloudFrame,
    SensorGrid,
    alignment_error,
    background_subtract,
    cup_to_rgbd,
    empty_reference_frame,
    fit_principal_axis,
    simulate_impactor_cloud,
)
from cupplan.errors import (
    FrameMismatch,
    GridMismatch,
    IllConditioned,
    NothingVisible,
    TooFewPoints,
)
from cupplan.geom import RigidTransform, compose, quat_from_axis_angle
from cupplan.implant import make_component

from test_geom import random_transform


@pytest.fixture(scope="module")
def impactor():
    return make_component(54.0)[1]


def side_on_pose(depth=600.0):
    # cup +Z mapped to sensor +X: the shaft lies across the view
    q = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2)
    return RigidTransform(q, np.array([150.0, 0.0, depth]), "cup", "rgbd")


def make_frame(points, cells, depths, grid=(4, 4), is_reference=False):
    return PointCloudFrame(
        points=np.asarray(points, float).reshape(-1, 3),
        timestamp=0.0,
        is_reference=is_reference,
        grid_shape=grid,
        cell_indices=np.asarray(cells, np.int64),
        depths=np.asarray(depths, float),
    )


class TestCupToRgbd:
    def test_identity_mount_relabels(self):
        plan = RigidTransform.from_axis_angle(
            [0, 1, 0], 30.0, np.array([1.0, 2.0, 3.0]), "cup", "xray"
        )
        out = cup_to_rgbd(plan, RigidTransform.identity("xray", "rgbd"))
        assert (out.from_frame, out.to_frame) == ("cup", "rgbd")
        assert np.allclose(out.matrix(), plan.matrix(), atol=1e-12)

    def test_chain_invert_chain_is_identity(self):
        rng = np.random.default_rng(0)
        plan = random_transform(rng, "cup", "xray")
        mount = random_transform(rng, "xray", "rgbd")
        out = cup_to_rgbd(plan, mount)
        back = compose(mount.invert(), out)
        r = compose(back, plan.invert().with_frames("xray", "cup"))
        assert r.rotation_angle_deg() < 1e-9
        assert np.linalg.norm(r.t) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_matrix_composition(self, seed):
        rng = np.random.default_rng(seed)
        plan = random_transform(rng, "cup", "xray")
        mount = random_transform(rng, "xray", "rgbd")
        out = cup_to_rgbd(plan, mount)
        assert np.allclose(out.matrix(), mount.matrix() @ plan.matrix(), atol=1e-9)

    def test_frame_mismatch(self):
        plan = RigidTransform.identity("cup", "xray")
        with pytest.raises(FrameMismatch):
            cup_to_rgbd(plan, RigidTransform.identity("rgbd", "xray"))


class TestCloudSimulator:
    def test_zero_noise_shaft_points_on_surface(self, impactor):
        pose = side_on_pose()
        cloud = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=0)
        local = pose.invert().apply(cloud.points)
        z_lo = impactor.tip_point[2]
        z_hi = impactor.base_point[2]
        shaft = (local[:, 2] > z_lo + 1e-6) & (local[:, 2] < z_hi - 1e-6)
        on_caps = ~shaft
        r = np.hypot(local[shaft, 0], local[shaft, 1])
        assert len(r) > 100
        assert np.all(np.abs(r - impactor.radius) < 1e-6)
        assert np.all(np.hypot(local[on_caps, 0], local[on_caps, 1]) <= impactor.radius + 1e-6)

    def test_only_near_half_of_surface_visible(self, impactor):
        pose = side_on_pose()
        cloud = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=0)
        inv = pose.invert()
        local = inv.apply(cloud.points)
        sensor_local = inv.t  # sensor origin in cylinder coordinates
        for p in local:
            radial = p - np.array([0.0, 0.0, p[2]])
            toward = sensor_local[:2] - np.zeros(2)
            # outward radial never points away from the sensor side
            assert radial[:2] @ toward > -1e-6 * np.linalg.norm(toward)

    def test_determinism(self, impactor):
        pose = side_on_pose()
        grid = SensorGrid(depth_sigma_mm=1.0, dropout_probability=0.1)
        a = simulate_impactor_cloud(impactor, pose, grid, seed=11)
        b = simulate_impactor_cloud(impactor, pose, grid, seed=11)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.cell_indices, b.cell_indices)

    def test_depth_noise_perturbs_along_ray(self, impactor):
        pose = side_on_pose()
        clean = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=3)
        noisy = simulate_impactor_cloud(
            impactor, pose, SensorGrid(depth_sigma_mm=1.0), seed=3
        )
        assert np.array_equal(clean.cell_indices, noisy.cell_indices)
        # same rays, displaced radially from the origin
        delta = noisy.depths - clean.depths
        assert np.std(delta) == pytest.approx(1.0, rel=0.2)
        dirs = clean.points / clean.depths[:, None]
        assert np.allclose(noisy.points, dirs * noisy.depths[:, None], atol=1e-9)

    def test_nothing_visible(self, impactor):
        behind = RigidTransform(
            np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, -2000.0]), "cup", "rgbd"
        )
        with pytest.raises(NothingVisible):
            simulate_impactor_cloud(impactor, behind, SensorGrid())

    def test_dropout_removes_points(self, impactor):
        pose = side_on_pose()
        full = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=4)
        sparse = simulate_impactor_cloud(
            impactor, pose, SensorGrid(dropout_probability=0.5), seed=4
        )
        assert 0 < len(sparse.points) < len(full.points)

    def test_ply_export(self, impactor, tmp_path):
        cloud = simulate_impactor_cloud(impactor, side_on_pose(), SensorGrid(), seed=0)
        p = tmp_path / "cloud.ply"
        cloud.save_ply(p)
        text = p.read_text().splitlines()
        assert text[0] == "ply"
        assert f"element vertex {len(cloud.points)}" in text


class TestBackgroundSubtract:
    def _wall(self, is_reference=True):
        cells = np.arange(16)
        depths = np.full(16, 900.0)
        pts = np.column_stack([np.zeros(16), np.zeros(16), depths])
        return make_frame(pts, cells, depths, is_reference=is_reference)

    def test_frame_equals_reference_empty(self):
        ref = self._wall()
        frame = self._wall(is_reference=False)
        out = background_subtract(frame, ref, threshold_mm=20.0)
        assert len(out.points) == 0

    def test_object_cells_returned_exactly(self):
        ref = self._wall()
        depths = np.full(16, 900.0)
        depths[[5, 6]] = 500.0  # an object in front of the wall in two cells
        pts = np.column_stack([np.zeros(16), np.zeros(16), depths])
        frame = make_frame(pts, np.arange(16), depths)
        out = background_subtract(frame, ref, threshold_mm=20.0)
        assert sorted(out.cell_indices.tolist()) == [5, 6]

    def test_infinite_threshold_empty(self):
        ref = self._wall()
        depths = np.full(16, 900.0)
        depths[3] = 100.0
        pts = np.column_stack([np.zeros(16), np.zeros(16), depths])
        frame = make_frame(pts, np.arange(16), depths)
        out = background_subtract(frame, ref, threshold_mm=np.inf)
        assert len(out.points) == 0

    def test_cells_empty_in_reference_kept(self, impactor):
        grid = SensorGrid()
        cloud = simulate_impactor_cloud(impactor, side_on_pose(), grid, seed=0)
        out = background_subtract(cloud, empty_reference_frame(grid), threshold_mm=20.0)
        assert np.array_equal(out.points, cloud.points)

    def test_output_subset_of_input(self, impactor):
        grid = SensorGrid()
        cloud = simulate_impactor_cloud(impactor, side_on_pose(), grid, seed=1)
        ref = simulate_impactor_cloud(
            impactor, side_on_pose(640.0), grid, seed=2, is_reference=True
        )
        out = background_subtract(cloud, ref, threshold_mm=15.0)
        in_set = {tuple(p) for p in cloud.points}
        assert all(tuple(p) in in_set for p in out.points)

    def test_grid_mismatch(self):
        ref = self._wall()
        frame = make_frame(np.zeros((1, 3)), [0], [500.0], grid=(8, 8))
        with pytest.raises(GridMismatch):
            background_subtract(frame, ref, 20.0)

    def test_reference_flag_required(self):
        frame = self._wall(is_reference=False)
        with pytest.raises(ValueError):
            background_subtract(frame, frame, 20.0)


class TestAxisFit:
    def test_line_cloud_recovers_direction(self):
        t = np.linspace(0, 300, 60)
        d = np.array([0.2, -0.4, 1.0])
        d = d / np.linalg.norm(d)
        pts = np.array([100.0, -50.0, 400.0]) + t[:, None] * d
        frame = make_frame(pts, np.arange(60), np.linalg.norm(pts, axis=1), grid=(8, 8))
        fit = fit_principal_axis(frame)
        assert abs(abs(fit.axis @ d) - 1.0) < 1e-9

    def test_sign_canonical_toward_positive_z(self):
        t = np.linspace(0, 300, 60)
        pts = np.array([0.0, 0.0, 700.0]) - t[:, None] * np.array([0.0, 0.0, 1.0])
        frame = make_frame(pts, np.arange(60), pts[:, 2], grid=(8, 8))
        assert fit_principal_axis(frame).axis[2] > 0

    def test_noiseless_cylinder_within_tolerance(self, impactor):
        pose = side_on_pose()
        cloud = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=0)
        fit = fit_principal_axis(cloud)
        true_axis = pose.rotate(np.array([0.0, 0.0, 1.0]))
        ang = np.rad2deg(np.arccos(np.clip(abs(fit.axis @ true_axis), -1, 1)))
        assert ang < 0.2

    def test_recentering_lands_on_axis(self, impactor):
        pose = side_on_pose()
        cloud = simulate_impactor_cloud(impactor, pose, SensorGrid(), seed=0)
        fit = fit_principal_axis(cloud)
        local = pose.invert().apply(fit.centroid)
        assert np.hypot(local[0], local[1]) < 0.5  # near the true axis, not the surface

    def test_noisy_axis_error_envelope(self, impactor):
        pose = side_on_pose()
        state = AlignmentState(planned_pose=pose, impactor=impactor)
        bad = 0
        for seed in range(40):
            cloud = simulate_impactor_cloud(
                impactor, pose, SensorGrid(depth_sigma_mm=1.0), seed=seed
            )
            fit = fit_principal_axis(cloud)
            if alignment_error(state, fit.axis, fit.centroid).axis_deg >= 1.0:
                bad += 1
        assert bad <= 2

    def test_rotation_equivariance(self, impactor):
        cloud = simulate_impactor_cloud(impactor, side_on_pose(), SensorGrid(), seed=0)
        rot = RigidTransform.from_axis_angle([0.3, 1, 0.1], 25.0, np.zeros(3), "rgbd", "rgbd")
        moved = make_frame(
            rot.apply(cloud.points),
            cloud.cell_indices,
            cloud.depths,
            grid=cloud.grid_shape,
        )
        a = fit_principal_axis(cloud).axis
        b = fit_principal_axis(moved).axis
        assert abs(abs(b @ rot.rotate(a)) - 1.0) < 1e-6

    def test_too_few_points(self):
        frame = make_frame(np.zeros((2, 3)), [0, 1], [1.0, 1.0])
        with pytest.raises(TooFewPoints):
            fit_principal_axis(frame)

    def test_isotropic_blob_ill_conditioned(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(scale=10.0, size=(200, 3)) + [0, 0, 500.0]
        frame = make_frame(pts, np.arange(200), pts[:, 2], grid=(20, 20))
        with pytest.raises(IllConditioned):
            fit_principal_axis(frame)


class TestAlignmentError:
    def test_perfect_alignment(self, impactor):
        pose = side_on_pose()
        state = AlignmentState(planned_pose=pose, impactor=impactor)
        axis = pose.rotate(np.array([0.0, 0.0, 1.0]))
        center = pose.apply(np.array([0.0, 0.0, -150.0]))
        e = alignment_error(state, axis, center)
        assert e.axis_deg < 1e-6
        assert e.tip_mm < 1e-6

    def test_rotation_lever_arm(self, impactor):
        pose = side_on_pose()
        state = AlignmentState(planned_pose=pose, impactor=impactor)
        center = pose.apply(np.array([0.0, 0.0, -150.0]))
        lever = np.linalg.norm(state.planned_tip() - center)
        tilt = RigidTransform.from_axis_angle([0, 1, 0], 2.0, np.zeros(3), "rgbd", "rgbd")
        tilted_axis = tilt.rotate(pose.rotate(np.array([0.0, 0.0, 1.0])))
        e = alignment_error(state, tilted_axis, center)
        assert e.axis_deg == pytest.approx(2.0, abs=1e-9)
        assert e.tip_mm == pytest.approx(lever * np.sin(np.deg2rad(2.0)), rel=1e-6)

    def test_perpendicular_shift(self, impactor):
        pose = side_on_pose()
        state = AlignmentState(planned_pose=pose, impactor=impactor)
        axis = pose.rotate(np.array([0.0, 0.0, 1.0]))
        perp = pose.rotate(np.array([1.0, 0.0, 0.0]))
        center = pose.apply(np.array([0.0, 0.0, -150.0])) + 5.0 * perp
        e = alignment_error(state, axis, center)
        assert e.axis_deg < 1e-6
        assert e.tip_mm == pytest.approx(5.0, abs=1e-9)


class TestEndToEndChain:
    def test_zero_noise_full_chain(self, impactor):
        pose = side_on_pose()
        state = AlignmentState(planned_pose=pose, impactor=impactor, live_pose=pose)
        grid = SensorGrid()
        cloud = simulate_impactor_cloud(impactor, pose, grid, seed=0)
        fg = background_subtract(cloud, empty_reference_frame(grid), threshold_mm=20.0)
        fit = fit_principal_axis(fg)
        e = alignment_error(state, fit.axis, fit.centroid)
        assert e.axis_deg < 0.3
        assert e.tip_mm < 1.0
