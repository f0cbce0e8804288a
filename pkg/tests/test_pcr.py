import numpy as np
import pytest

from graspprior.gripper import ContactPair, DegenerateContactError, GraspPose, GripperSpec
from graspprior.pcr import (PcrConfig, ZeroWeightError, antipodal_term,
                            distance_terms, pcr_value_and_grad,
                            total_loss_hook, weighted_batch)
from graspprior.sdf import bake_grid, sphere

SQ2 = np.sqrt(2.0) / 2.0


def pair_with(n1, n2, d1=0.01, d2=0.01):
    return ContactPair(np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]),
                       np.asarray(n1, float), np.asarray(n2, float), d1, d2)


# --- antipodal term ---

def test_antipodal_zero_for_perfectly_opposed_normals():
    pair = pair_with([-1, 0, 0], [1, 0, 0])
    assert antipodal_term(pair) == pytest.approx(0.0, abs=1e-15)


def test_antipodal_two_for_inverted_normals():
    pair = pair_with([1, 0, 0], [-1, 0, 0])
    assert antipodal_term(pair) == pytest.approx(2.0, abs=1e-15)


def test_antipodal_45_degree_oracle():
    # both normals at 45 deg to the contact line: 1 - cos(pi/4) computed offline
    pair = pair_with([-SQ2, SQ2, 0], [SQ2, SQ2, 0])
    assert antipodal_term(pair) == pytest.approx(0.29289321881345254, abs=1e-15)


def test_antipodal_rejects_coincident_contacts():
    pair = ContactPair(np.zeros(3), np.zeros(3),
                       np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]), 0.0, 0.0)
    with pytest.raises(DegenerateContactError):
        antipodal_term(pair)


# --- hinge terms and the dead band ---

def test_dead_band_sum_is_constant():
    cfg = PcrConfig()
    base = None
    for d in np.linspace(cfg.mu, cfg.theta, 47):
        r_c, r_s = distance_terms(pair_with([-1, 0, 0], [1, 0, 0], d, d), cfg)
        total = r_c + r_s
        if base is None:
            base = total
        assert abs(total - base) < 1e-15
    assert base == pytest.approx(2 * (cfg.theta - cfg.mu), abs=1e-15)


def test_hinges_strictly_monotone_outside_band():
    cfg = PcrConfig()
    below = [sum(distance_terms(pair_with([-1, 0, 0], [1, 0, 0], d, d), cfg))
             for d in np.linspace(-0.01, cfg.mu - 1e-6, 20)]
    above = [sum(distance_terms(pair_with([-1, 0, 0], [1, 0, 0], d, d), cfg))
             for d in np.linspace(cfg.theta + 1e-6, 0.05, 20)]
    assert all(a > b for a, b in zip(below, below[1:]))  # decreasing toward band
    assert all(b > a for a, b in zip(above, above[1:]))  # increasing away from it


def test_config_requires_dead_band():
    with pytest.raises(ValueError):
        PcrConfig(theta=0.005, mu=0.005)


# --- batch weighting ---

def test_weighted_batch_scale_invariance():
    rng = np.random.default_rng(23)
    terms = rng.uniform(0, 2, 64)
    scores = rng.uniform(0.1, 1.0, 64)
    r_ref, mean_ref = weighted_batch(terms, scores)
    for lam in (0.1, 1.0, 10.0):
        r_i, mean = weighted_batch(terms, lam * scores)
        assert np.allclose(r_i, r_ref, rtol=0, atol=1e-12)
        assert mean == pytest.approx(mean_ref, abs=1e-12)


def test_weighted_batch_uniform_scores_reduce_to_plain_mean():
    terms = np.array([1.0, 2.0, 3.0])
    r_i, mean = weighted_batch(terms, np.full(3, 0.5))
    assert np.allclose(r_i, terms)
    assert mean == pytest.approx(2.0)


def test_weighted_batch_rejects_all_zero_scores():
    with pytest.raises(ZeroWeightError):
        weighted_batch([1.0, 1.0], [0.0, 0.0])


def test_total_loss_hook():
    cfg = PcrConfig()
    assert total_loss_hook(1.0, 2.0, cfg) == pytest.approx(1.0 + cfg.phi * 2.0)


# --- full value-and-gradient path ---

def test_pcr_on_sphere_symmetric_grasp():
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    spec = GripperSpec(w_max=2.6, finger_depth=1.2, finger_thickness=0.05)
    # closing axis through the center: contacts at (0, -w/2, 0) and (0, w/2, 0)
    g = GraspPose(np.array([-1.2, 0.0, 0.0]), np.eye(3), 2.05)
    terms = pcr_value_and_grad(g, spec, grid, cfg=PcrConfig())
    assert terms.r_a < 1e-3           # contact line is radial on a sphere
    assert terms.r_c == pytest.approx(0.0)  # contacts clear of the collision band
    assert terms.r_s > 0.0            # but outside the surface band
    # symmetry: no preference along the approach or out-of-plane axes
    assert abs(terms.grad[0]) < 1e-6 and abs(terms.grad[2]) < 1e-6
    # widening moves both contacts outward, increasing the surface penalty
    assert terms.grad[6] == pytest.approx(1.0, rel=1e-2)


def test_pcr_gradient_matches_finite_differences():
    from graspprior.csjo import apply_params
    grid = bake_grid([sphere(1.0)], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)
    spec = GripperSpec(w_max=2.6, finger_depth=1.2, finger_thickness=0.05)
    g = GraspPose(np.array([-1.2, 0.013, 0.021]), np.eye(3), 2.03)
    terms = pcr_value_and_grad(g, spec, grid, cfg=PcrConfig())
    h = 1e-6
    fd = np.zeros(7)
    for k in range(7):
        e = np.zeros(7)
        e[k] = h
        hi = pcr_value_and_grad(apply_params(g, e), spec, grid, cfg=PcrConfig())
        lo = pcr_value_and_grad(apply_params(g, -e), spec, grid, cfg=PcrConfig())
        fd[k] = (hi.value - lo.value) / (2 * h)
    assert np.linalg.norm(terms.grad - fd) < 1e-5 * max(np.linalg.norm(fd), 1.0)
