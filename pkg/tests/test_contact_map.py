import numpy as np
import pytest

from graspprior.contact_map import (AnalyticScorePredictor, ObjectPointCloud,
                                    OracleContactPredictor, contact_map,
                                    load_cloud, maps_for_grasp,
                                    projection_contact_map, save_cloud)
from graspprior.gripper import DegenerateContactError, GraspPose, GripperSpec
from graspprior.sdf import bake_grid, sphere

C1 = np.array([-1.0, 0.0, 0.0])
C2 = np.array([1.0, 0.0, 0.0])


def test_cloud_validation():
    with pytest.raises(ValueError):
        ObjectPointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        ObjectPointCloud(np.array([[0.0, np.inf, 0.0]]))
    with pytest.raises(ValueError):
        ObjectPointCloud(np.zeros((2, 3)), normals=np.ones((2, 3)))  # not unit


def test_contact_map_nearest_contact():
    pts = np.array([[-1.0, 0.5, 0.0],   # nearer c1
                    [0.9, 0.0, 0.0],    # nearer c2
                    [0.0, 0.0, 0.0]])   # equidistant
    d = contact_map(pts, C1, C2)
    assert d == pytest.approx([0.5, 0.1, 1.0])


def test_projection_map_line_distance():
    pts = np.array([[0.3, 0.7, 0.0],
                    [5.0, 0.0, 0.2],
                    [-2.0, 0.0, 0.0]])  # on the line, beyond c1
    pd = projection_contact_map(pts, C1, C2)
    assert pd == pytest.approx([0.7, 0.2, 0.0], abs=1e-15)


def test_projection_equals_d_sin_theta():
    # PD = D * sin(angle between p - c_near and the contact line)
    rng = np.random.default_rng(29)
    pts = rng.normal(size=(500, 3))
    d = contact_map(pts, C1, C2)
    pd = projection_contact_map(pts, C1, C2)
    u = (C2 - C1) / np.linalg.norm(C2 - C1)
    for p, di, pdi in zip(pts, d, pd):
        near = C1 if np.linalg.norm(p - C1) <= np.linalg.norm(p - C2) else C2
        r = p - near
        sin_th = np.linalg.norm(np.cross(r, u)) / np.linalg.norm(r)
        assert abs(pdi - di * sin_th) < 1e-12
    assert np.all(pd <= d + 1e-12)


def test_projection_rejects_coincident_contacts():
    with pytest.raises(DegenerateContactError):
        projection_contact_map(np.zeros((1, 3)), C1, C1)


def test_maps_for_grasp_consistent_with_primitives():
    spec = GripperSpec()
    g = GraspPose(np.array([0.0, 0.0, 0.1]), np.eye(3), 0.06)
    cloud = ObjectPointCloud(np.random.default_rng(31).normal(size=(50, 3)) * 0.05)
    from graspprior.gripper import contacts
    c1, c2 = contacts(spec, g)
    vals = maps_for_grasp(cloud, spec, g)
    assert np.array_equal(vals.d, contact_map(cloud, c1, c2))
    assert np.array_equal(vals.pd, projection_contact_map(cloud, c1, c2))


def test_oracle_predictor_ignores_query_pose():
    spec = GripperSpec()
    target = GraspPose(np.zeros(3), np.eye(3), 0.06)
    pred = OracleContactPredictor(target, spec)
    cloud = ObjectPointCloud(np.random.default_rng(37).normal(size=(20, 3)) * 0.05)
    a = pred(None, cloud, GraspPose(np.array([0.0, 0.0, 0.5]), np.eye(3), 0.02))
    b = pred(None, cloud, target)
    assert np.array_equal(a.d, b.d)
    assert np.array_equal(a.pd, b.pd)


def test_score_predictor_orders_good_and_bad_grasps():
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    spec = GripperSpec(w_max=2.6, finger_depth=1.2, finger_thickness=0.05)
    pred = AnalyticScorePredictor(grid, None, None, spec)
    good = GraspPose(np.array([-1.2, 0.0, 0.0]), np.eye(3), 2.05)
    # same closing line but shifted far off-center: worse antipodal alignment
    skew = GraspPose(np.array([-1.2, 0.0, 0.6]), np.eye(3), 2.05)
    s_good, s_skew = pred(good), pred(skew)
    assert 0.0 <= s_skew < s_good <= 1.0
    assert s_good > 0.95


def test_score_predictor_zero_for_degenerate_width():
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    spec = GripperSpec(w_max=2.6, finger_depth=1.2, finger_thickness=0.05)
    pred = AnalyticScorePredictor(grid, None, None, spec)
    assert pred(GraspPose(np.array([-1.2, 0.0, 0.0]), np.eye(3), 0.0)) == 0.0


def test_cloud_io_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    pts = rng.normal(size=(30, 3))
    normals = rng.normal(size=(30, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cloud = ObjectPointCloud(pts, normals, object_id=3)
    path = tmp_path / "c.csv"
    save_cloud(cloud, path)
    back = load_cloud(path)
    assert np.array_equal(back.points, cloud.points)       # repr round-trips exactly
    assert np.array_equal(back.normals, cloud.normals)
    assert back.object_id == 3
    path2 = tmp_path / "c2.csv"
    save_cloud(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_cloud_io_without_normals(tmp_path):
    cloud = ObjectPointCloud(np.random.default_rng(43).normal(size=(5, 3)))
    path = tmp_path / "n.csv"
    save_cloud(cloud, path)
    back = load_cloud(path)
    assert back.normals is None
    assert np.array_equal(back.points, cloud.points)


def test_cloud_io_rejects_wrong_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        load_cloud(path)
