"""Contact-score joint optimization: objective, analytic gradient, Adam loop.

Poses are optimized in a local 7-parameter chart around the initial grasp:
translation offset dt, axis-angle rotation increment daa (left-applied to the
initial rotation), and width offset dw.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .contact_map import ContactMapValues, ObjectPointCloud
from .geometry import renormalize_rotation, rotation_from_axis_angle
from .gripper import (DegenerateContactError, DegenerateNormalError, GraspPose,
                      GripperSpec, InvalidGraspError, contact_jacobians,
                      contacts, gripper_cloud)


class RefinementFailedError(RuntimeError):
    """Every iterate was degenerate; no refined pose can be reported."""


@dataclass(frozen=True)
class CsjoConfig:
    alpha: float = 0.2          # weight of the projection-map residual
    beta: float = 0.01          # weight of the score term
    gamma: float = 5.0          # weight (1/m) of the translation offset
    t_max_score: float = 1.0    # score ceiling T; J_s = T - min(T, S)
    learning_rate: float = 1e-3
    iterations: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fd_step: float = 1e-4       # fallback step for the score gradient

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0 or self.t_max_score <= 0:
            raise ValueError("weights must be non-negative and t_max_score positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class ObjectiveBreakdown:
    j: float
    j_c: float
    j_s: float
    delta_t: float


@dataclass
class RefineTrace:
    entries: List[Tuple[np.ndarray, Optional[ObjectiveBreakdown]]]
    best_index: int


def apply_params(g0: GraspPose, params, spec: GripperSpec = None) -> GraspPose:
    """Pose reached from g0 by the 7-vector (dt, daa, dw); width clamped to spec."""
    params = np.asarray(params, dtype=float)
    R = renormalize_rotation(rotation_from_axis_angle(params[3:6]) @ g0.R)
    w = g0.w + params[6]
    if spec is not None:
        w = min(max(w, 0.0), spec.w_max)
    return GraspPose(g0.t + params[0:3], R, w, g0.score, g0.object_id)


def _map_terms(cloud, c1, c2):
    pts = cloud.points
    r1 = pts - c1
    r2 = pts - c2
    s1 = np.sqrt(np.einsum("ij,ij->i", r1, r1))
    s2 = np.sqrt(np.einsum("ij,ij->i", r2, r2))
    d = np.minimum(s1, s2)
    u = c2 - c1
    L = np.linalg.norm(u)
    uhat = u / L
    proj = r1 @ uhat
    v = r1 - proj[:, None] * uhat
    pd = np.sqrt(np.einsum("ij,ij->i", v, v))
    return s1, s2, d, pd, r1, uhat, L, proj, v


def objective(params, g0: GraspPose, cloud: ObjectPointCloud, contact_pred,
              score_pred, spec: GripperSpec, cfg: CsjoConfig) -> ObjectiveBreakdown:
    """J = mean|D - D^| + alpha * mean|PD - PD^| + beta * J_s + gamma * ||dt||."""
    params = np.asarray(params, dtype=float)
    g = apply_params(g0, params, spec)
    c1, c2 = contacts(spec, g)
    if np.linalg.norm(c2 - c1) < 1e-6:
        raise DegenerateContactError("contacts coincide during optimization")
    target: ContactMapValues = contact_pred(gripper_cloud(spec, g), cloud, g)
    _, _, d, pd, _, _, _, _, _ = _map_terms(cloud, c1, c2)
    j_c = float(np.mean(np.abs(d - target.d))
                + cfg.alpha * np.mean(np.abs(pd - target.pd)))
    s_hat = float(score_pred(g))
    j_s = cfg.t_max_score - min(cfg.t_max_score, s_hat)
    delta_t = float(np.linalg.norm(params[0:3]))
    j = j_c + cfg.beta * j_s + cfg.gamma * delta_t
    return ObjectiveBreakdown(j, j_c, j_s, delta_t)


def _fd_probe_arrays(params, g0, spec, cfg, center):
    """Center pose plus the 14 central-difference probes as raw pose arrays.

    Probes along dt and dw leave the rotation increment untouched, so the
    center rotation is reused for those twelve rows.
    """
    h = cfg.fd_step
    t = np.empty((15, 3))
    t[:] = center.t
    R = np.empty((15, 3, 3))
    R[:] = center.R
    w = np.full(15, center.w)
    row = 1
    for k in range(7):
        for sgn in (h, -h):
            if k < 3:
                t[row, k] += sgn
            elif k < 6:
                e = params[3:6].copy()
                e[k - 3] += sgn
                R[row] = renormalize_rotation(rotation_from_axis_angle(e) @ g0.R)
            else:
                wv = g0.w + params[6] + sgn
                if spec is not None:
                    wv = min(max(wv, 0.0), spec.w_max)
                w[row] = wv
            row += 1
    return t, R, w


def _score_fd_grad(params, g0, score_pred, spec, cfg):
    """Central-difference score gradient for predictors without an array API."""
    center = apply_params(g0, params, spec)
    t, R, w = _fd_probe_arrays(params, g0, spec, cfg, center)
    arrays = getattr(score_pred, "score_arrays", None)
    if arrays is not None:
        scores = np.asarray(arrays(t, R, w), dtype=float)[1:]
    else:
        scores = np.array([float(score_pred(
            GraspPose(t[i], R[i], w[i], g0.score, g0.object_id)))
            for i in range(1, 15)])
    return (scores[0::2] - scores[1::2]) / (2.0 * cfg.fd_step)


def _value_and_grad(params, g0: GraspPose, cloud: ObjectPointCloud, contact_pred,
                    score_pred, spec: GripperSpec, cfg: CsjoConfig):
    """Objective breakdown and its gradient in a single shared pass.

    Map residuals are differentiated analytically with the predictions held
    constant; the score gradient comes from the predictor when it provides
    one, else from central finite differences.
    """
    params = np.asarray(params, dtype=float)
    g = apply_params(g0, params, spec)
    c1, c2 = contacts(spec, g)
    if np.linalg.norm(c2 - c1) < 1e-6:
        raise DegenerateContactError("contacts coincide during optimization")
    target = contact_pred(gripper_cloud(spec, g), cloud, g)
    s1, s2, d, pd, r1, uhat, L, proj, v = _map_terms(cloud, c1, c2)
    n = len(cloud)
    j_c = float(np.mean(np.abs(d - target.d))
                + cfg.alpha * np.mean(np.abs(pd - target.pd)))

    # accumulated dJ/dc1 and dJ/dc2 over the point residuals
    a1 = np.zeros(3)
    a2 = np.zeros(3)

    r2 = r1 - L * uhat  # p - c2
    sign_d = np.sign(d - target.d)
    near1 = s1 <= s2
    safe1 = near1 & (s1 > 1e-12)
    safe2 = ~near1 & (s2 > 1e-12)
    w1 = np.where(safe1, sign_d / np.maximum(s1, 1e-300), 0.0) / n
    w2 = np.where(safe2, sign_d / np.maximum(s2, 1e-300), 0.0) / n
    a1 += -(w1[:, None] * r1).sum(axis=0)
    a2 += -(w2[:, None] * r2).sum(axis=0)

    sign_pd = np.sign(pd - target.pd)
    safe_pd = pd > 1e-12
    vhat = np.where(safe_pd[:, None], v / np.maximum(pd, 1e-300)[:, None], 0.0)
    coef = np.where(safe_pd, sign_pd, 0.0) * cfg.alpha / n
    a1 += ((coef * (proj / L - 1.0))[:, None] * vhat).sum(axis=0)
    a2 += ((-coef * proj / L)[:, None] * vhat).sum(axis=0)

    J1, J2 = contact_jacobians(spec, g, aa_offset=params[3:6])
    grad = a1 @ J1 + a2 @ J2

    s_grad = getattr(score_pred, "gradient", None)
    arrays = getattr(score_pred, "score_arrays", None)
    if s_grad is None and arrays is not None:
        # one fused array batch: center pose + the 14 finite-difference probes
        scores = np.asarray(arrays(*_fd_probe_arrays(params, g0, spec, cfg, g)),
                            dtype=float)
        s_hat = float(scores[0])
        if s_hat < cfg.t_max_score:
            fd = (scores[1::2] - scores[2::2]) / (2.0 * cfg.fd_step)
            grad = grad - cfg.beta * fd
    else:
        s_hat = float(score_pred(g))
        if s_hat < cfg.t_max_score:
            if s_grad is not None:
                grad = grad - cfg.beta * np.asarray(s_grad(params, g0), dtype=float)
            else:
                grad = grad - cfg.beta * _score_fd_grad(params, g0, score_pred,
                                                        spec, cfg)
    j_s = cfg.t_max_score - min(cfg.t_max_score, s_hat)

    dt = params[0:3]
    norm_dt = np.linalg.norm(dt)
    if norm_dt > 0.0:
        grad = grad + np.concatenate([cfg.gamma * dt / norm_dt, np.zeros(4)])
    delta_t = float(norm_dt)
    j = j_c + cfg.beta * j_s + cfg.gamma * delta_t
    return ObjectiveBreakdown(j, j_c, j_s, delta_t), grad


def objective_grad(params, g0: GraspPose, cloud: ObjectPointCloud, contact_pred,
                   score_pred, spec: GripperSpec, cfg: CsjoConfig) -> np.ndarray:
    """Gradient of the objective w.r.t. the 7 pose parameters."""
    return _value_and_grad(params, g0, cloud, contact_pred, score_pred,
                           spec, cfg)[1]


def adam_step(params, grad, state, cfg: CsjoConfig, step_index: int):
    """One bias-corrected Adam update; state is the (m, v) moment pair."""
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    m, v = state
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad
    m_hat = m / (1.0 - cfg.adam_beta1 ** step_index)
    v_hat = v / (1.0 - cfg.adam_beta2 ** step_index)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new_params, (m, v)


_DEGENERATE = (DegenerateContactError, DegenerateNormalError, InvalidGraspError)


def refine(g0: GraspPose, cloud: ObjectPointCloud, contact_pred, score_pred,
           spec: GripperSpec, cfg: CsjoConfig = CsjoConfig()):
    """Iteratively minimize the objective with Adam; return the best iterate.

    The trace holds iterations + 1 entries (initial state included); the
    reported pose is the lowest-J valid iterate, so its J never exceeds the
    initial value. Degenerate iterates stay in the trace with no breakdown.
    """
    params = np.zeros(7)
    state = (np.zeros(7), np.zeros(7))
    entries: List[Tuple[np.ndarray, Optional[ObjectiveBreakdown]]] = []
    stalled = False
    for it in range(cfg.iterations + 1):
        if stalled:
            entries.append((params.copy(), None))
            continue
        try:
            bd, grad = _value_and_grad(params, g0, cloud, contact_pred,
                                       score_pred, spec, cfg)
        except _DEGENERATE:
            entries.append((params.copy(), None))
            stalled = True
            continue
        entries.append((params.copy(), bd))
        if it < cfg.iterations:
            params, state = adam_step(params, grad, state, cfg, it + 1)

    valid = [i for i, (_, bd) in enumerate(entries) if bd is not None]
    if not valid:
        raise RefinementFailedError("all iterates degenerate")
    best = min(valid, key=lambda i: entries[i][1].j)
    trace = RefineTrace(entries, best)
    return apply_params(g0, entries[best][0], spec), trace
