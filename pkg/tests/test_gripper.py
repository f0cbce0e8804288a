import json

import numpy as np
import pytest

from graspprior.geometry import rotation_from_axis_angle
from graspprior.gripper import (GraspPose, GripperSpec, InvalidGraspError,
                                annotate_contacts, collision_depth,
                                contact_jacobians, contacts, gripper_cloud,
                                load_grasps, save_grasps)
from graspprior.sdf import bake_grid, sphere


def identity_grasp(w=0.06, t=(0.0, 0.0, 0.0)):
    return GraspPose(np.array(t, dtype=float), np.eye(3), w)


def test_spec_defaults_and_body_samples():
    spec = GripperSpec()
    assert spec.w_max == 0.10
    assert spec.body_samples.shape[1] == 3
    # deterministic: same spec gives the same sample set
    assert np.array_equal(spec.body_samples, GripperSpec().body_samples)


def test_spec_rejects_bad_geometry():
    with pytest.raises(ValueError):
        GripperSpec(w_max=0.0)


def test_grasp_rejects_non_rotation_and_bad_score():
    with pytest.raises(InvalidGraspError):
        GraspPose(np.zeros(3), np.ones((3, 3)), 0.05)
    with pytest.raises(InvalidGraspError):
        GraspPose(np.zeros(3), np.eye(3), 0.05, score=1.5)


def test_contacts_identity_pose():
    spec = GripperSpec()
    c1, c2 = contacts(spec, identity_grasp(w=0.06))
    assert np.allclose(c1, [spec.finger_depth, -0.03, 0.0])
    assert np.allclose(c2, [spec.finger_depth, +0.03, 0.0])


def test_contacts_rotated_translated():
    spec = GripperSpec()
    Rz = rotation_from_axis_angle(np.array([0, 0, np.pi / 2]))
    g = GraspPose(np.array([1.0, 2.0, 3.0]), Rz, 0.04)
    c1, c2 = contacts(spec, g)
    # local (fd, -w/2, 0) maps to t + (w/2, fd, 0) under a quarter turn
    assert np.allclose(c1, [1.0 + 0.02, 2.0 + spec.finger_depth, 3.0], atol=1e-12)
    assert np.allclose(c2, [1.0 - 0.02, 2.0 + spec.finger_depth, 3.0], atol=1e-12)


def test_contacts_rejects_out_of_range_width():
    spec = GripperSpec()
    with pytest.raises(InvalidGraspError):
        contacts(spec, identity_grasp(w=0.2))


def test_contact_jacobians_match_finite_differences():
    spec = GripperSpec()
    rng = np.random.default_rng(13)
    for _ in range(20):
        aa = rng.normal(size=3) * 0.5
        g = GraspPose(rng.normal(size=3) * 0.1,
                      rotation_from_axis_angle(aa), rng.uniform(0.02, 0.08))
        J1, J2 = contact_jacobians(spec, g)
        h = 1e-7
        for k in range(7):
            e = np.zeros(7)
            e[k] = h

            def c_at(delta):
                gp = GraspPose(
                    g.t + delta[0:3],
                    rotation_from_axis_angle(delta[3:6]) @ g.R,
                    g.w + delta[6])
                return contacts(spec, gp)

            p1, p2 = c_at(e)
            m1, m2 = c_at(-e)
            assert np.allclose(J1[:, k], (p1 - m1) / (2 * h), atol=1e-6)
            assert np.allclose(J2[:, k], (p2 - m2) / (2 * h), atol=1e-6)


def test_annotate_contacts_sphere_normals():
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    c1 = np.array([-1.0, 0.0, 0.0])
    c2 = np.array([1.0, 0.0, 0.0])
    pair = annotate_contacts(c1, c2, grid)
    assert abs(pair.d1) < 5e-3 and abs(pair.d2) < 5e-3
    assert np.dot(pair.n1, [-1, 0, 0]) > 0.999
    assert np.dot(pair.n2, [1, 0, 0]) > 0.999


def test_gripper_cloud_is_posed_body():
    spec = GripperSpec()
    g = GraspPose(np.array([0.0, 0.0, 1.0]), np.eye(3), 0.05)
    cloud = gripper_cloud(spec, g)
    assert np.allclose(cloud, spec.body_samples + [0, 0, 1])


def test_collision_depth_plane():
    spec = GripperSpec()
    g = identity_grasp(w=0.05, t=(0.0, 0.0, 1.0))
    # body lowest point sits at z = 1 - thickness/2; plane at that height
    low = 1.0 + float(np.min(spec.body_samples[:, 2]))
    assert collision_depth(spec, g, plane_z=low) == pytest.approx(0.0, abs=1e-12)
    assert collision_depth(spec, g, plane_z=low + 0.01) == pytest.approx(0.01)
    assert collision_depth(spec, g, plane_z=low - 0.01) == pytest.approx(-0.01)


def test_collision_depth_grid_obstacle():
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    spec = GripperSpec()
    far = GraspPose(np.array([0.0, 0.0, 1.3]), np.eye(3), 0.05)
    near = GraspPose(np.array([0.0, 0.0, 0.9]), np.eye(3), 0.05)
    assert collision_depth(spec, far, obstacles=[(grid, np.eye(3), np.zeros(3))]) < 0
    assert collision_depth(spec, near, obstacles=[(grid, np.eye(3), np.zeros(3))]) > 0


def test_collision_depth_empty_scene():
    assert collision_depth(GripperSpec(), identity_grasp()) == -np.inf


def test_grasp_io_roundtrip_and_key_order(tmp_path):
    rng = np.random.default_rng(17)
    grasps = [GraspPose(rng.normal(size=3),
                        rotation_from_axis_angle(rng.normal(size=3) * 0.3),
                        rng.uniform(0.01, 0.09),
                        score=rng.uniform(0, 1), object_id=i)
              for i in range(5)]
    path = tmp_path / "g.jsonl"
    save_grasps(grasps, path)
    back = load_grasps(path)
    assert len(back) == 5
    for a, b in zip(grasps, back):
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.R, b.R)
        assert a.w == b.w and a.score == b.score and a.object_id == b.object_id
    first = path.read_text().splitlines()[0]
    assert list(json.loads(first).keys()) == ["object_id", "t", "R", "w", "score"]
    # writing the loaded grasps back reproduces the file byte for byte
    path2 = tmp_path / "g2.jsonl"
    save_grasps(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_grasp_io_extra_fields(tmp_path):
    g = identity_grasp()
    path = tmp_path / "e.jsonl"
    save_grasps([g], path, extra=[{"j_final": 0.25}])
    row = json.loads(path.read_text().splitlines()[0])
    assert row["j_final"] == 0.25
    assert len(load_grasps(path)) == 1
