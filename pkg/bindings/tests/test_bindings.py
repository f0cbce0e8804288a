"""Unit tests for the flat-array binding layer."""
import numpy as np
import pytest

gb = pytest.importorskip("graspprior_bindings")

from graspprior.contact_map import AnalyticScorePredictor
from graspprior.gripper import GripperSpec
from graspprior.pcr import PcrConfig, pcr_value_and_grad, weighted_batch
from graspprior.scene import gen_scene, sample_grasp_candidates, save_scene
from graspprior.sdf import save_grid

SPEC = GripperSpec()


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("scene") / "scene"
    save_scene(gen_scene(0, 2, resolution=32, cloud_points=256), path)
    return path


@pytest.fixture(scope="module")
def handle(scene_dir):
    return gb.load_scene(scene_dir)


@pytest.fixture(scope="module")
def grasps(handle):
    scene = handle._scene
    rng = np.random.default_rng(0)
    out = []
    for obj in scene.objects:
        pred = AnalyticScorePredictor(obj.grid, obj.shape.R, obj.shape.t,
                                      SPEC, scene.obstacles(), plane_z=0.0)
        out.extend(sample_grasp_candidates(obj.cloud, 5, SPEC,
                                           seed=int(rng.integers(2 ** 32)),
                                           score_predictor=pred))
    assert len(out) == 10
    return out


def test_row_width_constant():
    assert gb.ROW_WIDTH == 16


def test_encode_decode_roundtrip(grasps):
    rows = gb.encode_grasps(grasps)
    assert rows.shape == (len(grasps), 16)
    back = gb.decode_grasps(rows)
    for g, h in zip(grasps, back):
        assert np.array_equal(g.t, h.t) and np.array_equal(g.R, h.R)
        assert g.w == h.w and g.score == h.score and g.object_id == h.object_id


def test_empty_batches(handle):
    empty = np.zeros((0, 16))
    res = gb.pcr_batch(empty, handle)
    assert res.r_a.shape == (0,) and res.grad.shape == (0, 7)
    ref = gb.refine_batch(empty, handle)
    assert ref.grasps.shape == (0, 16) and ref.j_final.shape == (0,)


def test_bad_shape_rejected(handle):
    with pytest.raises(ValueError):
        gb.pcr_batch(np.zeros((3, 15)), handle)


def test_pcr_batch_matches_primary(handle, grasps):
    scene = handle._scene
    res = gb.pcr_batch(gb.encode_grasps(grasps), handle)
    assert np.all(res.errors == gb.OK)
    cfg = PcrConfig()
    values = []
    for i, g in enumerate(grasps):
        obj = scene.object_by_id(g.object_id)
        t = pcr_value_and_grad(g, SPEC, obj.grid, obj.shape.R, obj.shape.t, cfg)
        assert res.r_a[i] == t.r_a and res.r_c[i] == t.r_c and res.r_s[i] == t.r_s
        assert np.array_equal(res.grad[i], t.grad)
        values.append(t.value)
    r_i, _ = weighted_batch(values, [g.score for g in grasps])
    assert np.array_equal(res.r_weighted, r_i)


def test_pcr_batch_single_grid_handle(handle, grasps, tmp_path):
    scene = handle._scene
    obj = scene.objects[0]
    save_grid(obj.grid, tmp_path / "grid.bin")
    sdf = gb.load_sdf(tmp_path / "grid.bin")
    sub = [g for g in grasps if g.object_id == obj.object_id]
    rows = gb.encode_grasps(sub)
    a = gb.pcr_batch(rows, sdf, obj_R=obj.shape.R, obj_t=obj.shape.t)
    b = gb.pcr_batch(rows, handle)
    assert np.array_equal(a.r_a, b.r_a) and np.array_equal(a.grad, b.grad)


def test_malformed_row_flagged_batch_returned(handle, grasps):
    rows = gb.encode_grasps(grasps)
    rows[1, 3:12] = 0.0          # rotation block no longer orthonormal
    rows[3, 14] = 99.0           # unknown object id
    res = gb.pcr_batch(rows, handle)
    assert res.errors[1] == gb.MALFORMED_ROW
    assert res.errors[3] == gb.MALFORMED_ROW
    assert np.isnan(res.r_a[1]) and np.all(np.isnan(res.grad[3]))
    good = [i for i in range(len(grasps)) if i not in (1, 3)]
    assert np.all(res.errors[good] == gb.OK)
    assert np.all(np.isfinite(res.r_a[good]))


def test_interleaved_configs_do_not_interact(handle, grasps):
    rows = gb.encode_grasps(grasps)
    a1 = gb.pcr_batch(rows, handle, theta=0.02)
    b = gb.pcr_batch(rows, handle, theta=0.035, mu=0.001)
    a2 = gb.pcr_batch(rows, handle, theta=0.02)
    assert np.array_equal(a1.r_c, a2.r_c) and np.array_equal(a1.grad, a2.grad)
    assert not np.array_equal(a1.r_c, b.r_c)


def test_refine_batch_self_identity(handle, grasps):
    # own-contact targets and a score ceiling already met: J = 0 at the input,
    # so the reported pose is the input itself
    g = max(grasps, key=lambda g: g.score)
    assert g.score > 0.0
    rows = gb.encode_grasps([g])
    res = gb.refine_batch(rows, handle, predictor="self",
                          t_max_score=0.9 * g.score, iterations=5)
    assert res.errors[0] == gb.OK
    # the reported pose re-applies the zero update, which renormalizes the
    # rotation; equality therefore holds to the last ulp, not bitwise
    assert np.max(np.abs(res.grasps[0] - rows[0])) <= 1e-15
    assert res.j_initial[0] <= 1e-15 and res.j_final[0] <= res.j_initial[0]


def test_refine_batch_monotone(handle, grasps):
    rows = gb.encode_grasps(grasps[:3])
    res = gb.refine_batch(rows, handle, iterations=10)
    assert np.all(res.errors == gb.OK)
    assert np.all(res.j_final <= res.j_initial)


def test_refine_batch_bad_row_and_selector(handle, grasps):
    rows = gb.encode_grasps(grasps[:2])
    rows[0, 12] = -1.0  # negative width
    res = gb.refine_batch(rows, handle, iterations=2)
    assert res.errors[0] == gb.MALFORMED_ROW
    assert np.array_equal(res.grasps[0], rows[0])
    assert np.isnan(res.j_final[0]) and res.errors[1] == gb.OK
    with pytest.raises(ValueError):
        gb.refine_batch(rows, handle, predictor="nope")
