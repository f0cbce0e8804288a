"""Finite-difference self-checks for the regularizer and refinement gradients.

Cases are sampled around unit-scale primitives baked at res 64 and rejected
when they sit close to a hinge kink, a residual sign flip, or a grid cell
face, where one-sided behaviour would contaminate the comparison.
"""
from dataclasses import dataclass

import numpy as np

from .contact_map import AnalyticScorePredictor, OracleContactPredictor
from .csjo import CsjoConfig, apply_params, objective, objective_grad
from .geometry import rotation_from_axis_angle
from .gripper import GraspPose, GripperSpec, contacts, world_to_object
from .pcr import PcrConfig, pcr_value_and_grad
from .scene import sample_surface
from .sdf import bake_grid, box, cylinder, sphere

FD_STEP = 1e-5
TOLERANCE = 1e-3

SHAPES = {
    "sphere": sphere(1.0),
    "box": box(0.8, 0.7, 0.6),
    "cylinder": cylinder(0.7, 0.8),
}
_RADIUS = {"sphere": 1.0, "box": 0.7, "cylinder": 0.75}


def _grid_for(kind):
    return bake_grid([SHAPES[kind]], -1.5 * np.ones(3), 1.5 * np.ones(3), 64)


def _check_spec():
    # unit-scale jaw, fingers long enough to reach around the test primitives
    return GripperSpec(w_max=2.6, finger_depth=1.2, finger_thickness=0.05)


def _random_rotation(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_from_axis_angle(axis * rng.uniform(0.0, np.pi * 0.9))


def _random_grasp(rng, kind, spec):
    rc = _RADIUS[kind]
    R = _random_rotation(rng)
    w = 2.0 * rng.uniform(rc - 0.03, rc + 0.03)
    offset = rng.normal(size=3)
    offset *= rng.uniform(0.0, 0.02) / np.linalg.norm(offset)
    mid = offset
    t = mid - R @ np.array([spec.finger_depth, 0.0, 0.0])
    return GraspPose(t, R, min(w, spec.w_max), 1.0, 0)


def _contacts_clean(g, spec, grid, cfg, margin=5e-4):
    """Reject grasps near hinge thresholds, cell faces or degenerate normals."""
    c1, c2 = contacts(spec, g)
    if np.linalg.norm(c2 - c1) < 1e-3:
        return False
    for c in (c1, c2):
        q = world_to_object(c, np.eye(3), np.zeros(3))
        if np.any(q < grid.origin + 2 * grid.spacing) or \
                np.any(q > grid.upper - 2 * grid.spacing):
            return False
        if grid.face_distance(q) < margin:
            return False
        if np.linalg.norm(grid.gradient(q)) < 0.1:
            return False
        d = grid.query(q)
        if abs(d - cfg.theta) < 2e-4 or abs(d - cfg.mu) < 2e-4:
            return False
    return True


def _rel_error(analytic, fd):
    return float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-6))


def _fd_grad(fun, step=FD_STEP):
    grad = np.zeros(7)
    for k in range(7):
        e = np.zeros(7)
        e[k] = step
        grad[k] = (fun(e) - fun(-e)) / (2.0 * step)
    return grad


@dataclass
class GradcheckReport:
    cases_pcr: int
    cases_csjo: int
    max_rel_error_pcr: float
    max_rel_error_csjo: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return (self.max_rel_error_pcr <= self.tolerance
                and self.max_rel_error_csjo <= self.tolerance)

    def as_dict(self):
        return {
            "cases_pcr": self.cases_pcr,
            "cases_csjo": self.cases_csjo,
            "max_rel_error_pcr": self.max_rel_error_pcr,
            "max_rel_error_csjo": self.max_rel_error_csjo,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def check_pcr_case(g, spec, grid, cfg, corrupt=0.0):
    terms = pcr_value_and_grad(g, spec, grid, cfg=cfg)

    def value_at(delta):
        return pcr_value_and_grad(apply_params(g, delta), spec, grid, cfg=cfg).value

    fd = _fd_grad(value_at)
    return _rel_error(terms.grad + corrupt, fd)


def _csjo_case_clean(params, g0, cloud, contact_pred, score_pred, spec, grid, cfg):
    from .contact_map import contact_map as cmap, projection_contact_map as pmap
    g = apply_params(g0, params, spec)
    if not (1e-3 < g.w < spec.w_max - 1e-3):
        return False
    if not _contacts_clean(g, spec, grid, PcrConfig(), margin=5e-4):
        return False
    c1, c2 = contacts(spec, g)
    target = contact_pred(None, cloud, g)
    s1 = np.linalg.norm(cloud.points - c1, axis=1)
    s2 = np.linalg.norm(cloud.points - c2, axis=1)
    d = np.minimum(s1, s2)
    pd = pmap(cloud, c1, c2)
    if np.min(np.abs(s1 - s2)) < 5e-5 or np.min(pd) < 5e-5:
        return False
    if np.min(np.abs(d - target.d)) < 5e-5 or np.min(np.abs(pd - target.pd)) < 5e-5:
        return False
    s_hat = float(score_pred(g))
    if abs(s_hat - cfg.t_max_score) < 1e-3 or s_hat < 1e-3:
        return False
    from .gripper import collision_depth
    depth = collision_depth(spec, g, score_pred.obstacles, score_pred.plane_z)
    if abs(depth) < 2e-3 or abs(depth - 0.01) < 2e-3:
        return False
    if np.linalg.norm(params[0:3]) < 1e-4:
        return False
    return True


def run_gradcheck(seed: int, n_cases: int, corrupt: float = 0.0) -> GradcheckReport:
    """n_cases per shape for each of the two gradient paths."""
    rng = np.random.default_rng(seed)
    spec = _check_spec()
    cfg = PcrConfig()
    ccfg = CsjoConfig()
    max_pcr = 0.0
    max_csjo = 0.0
    total_pcr = 0
    total_csjo = 0
    for kind in SHAPES:
        grid = _grid_for(kind)
        cloud = sample_surface(SHAPES[kind], 128, 0.0,
                               seed=int(rng.integers(2 ** 32)))
        score_pred = AnalyticScorePredictor(grid, None, None, spec)

        done = 0
        budget = 200 * n_cases
        while done < n_cases:
            budget -= 1
            if budget < 0:
                raise RuntimeError(f"case sampling stalled for {kind} (pcr)")
            g = _random_grasp(rng, kind, spec)
            if not _contacts_clean(g, spec, grid, cfg):
                continue
            max_pcr = max(max_pcr, check_pcr_case(g, spec, grid, cfg, corrupt))
            done += 1
            total_pcr += 1

        done = 0
        budget = 200 * n_cases
        while done < n_cases:
            budget -= 1
            if budget < 0:
                raise RuntimeError(f"case sampling stalled for {kind} (csjo)")
            g0 = _random_grasp(rng, kind, spec)
            target = apply_params(g0, np.concatenate([
                rng.uniform(-0.02, 0.02, 3), rng.uniform(-0.1, 0.1, 3),
                rng.uniform(-0.02, 0.02, 1)]), spec)
            contact_pred = OracleContactPredictor(target, spec)
            params = np.concatenate([
                rng.uniform(-3e-3, 3e-3, 3), rng.uniform(-0.05, 0.05, 3),
                rng.uniform(-2e-3, 2e-3, 1)])
            if not _csjo_case_clean(params, g0, cloud, contact_pred,
                                    score_pred, spec, grid, ccfg):
                continue
            analytic = objective_grad(params, g0, cloud, contact_pred,
                                      score_pred, spec, ccfg) + corrupt
            fd = _fd_grad(lambda e: objective(
                params + e, g0, cloud, contact_pred, score_pred, spec, ccfg).j)
            max_csjo = max(max_csjo, _rel_error(analytic, fd))
            done += 1
            total_csjo += 1
    return GradcheckReport(total_pcr, total_csjo, max_pcr, max_csjo)
