"""Physical constraint regularizers: antipodal, collision and surface terms,
score-weighted batch aggregation, and the exact chain-rule gradient through
the gripper kinematics and the interpolated SDF.
"""
from dataclasses import dataclass, field

import numpy as np

from .gripper import (ContactPair, DegenerateContactError, DegenerateNormalError,
                      GraspPose, GripperSpec, contact_jacobians, contacts,
                      world_to_object)
from .sdf import SdfGrid


class ZeroWeightError(ValueError):
    """All grasp scores are zero; Eq-style weighting is undefined."""


@dataclass(frozen=True)
class PcrConfig:
    theta: float = 0.02        # collision threshold (m): contacts kept at least this far out
    mu: float = 0.005          # surface threshold (m): contacts pulled within this band
    phi: float = 0.1           # regularizer weight in the loss hook
    eps_contact: float = 1e-6  # minimum contact separation for the cosine terms

    def __post_init__(self):
        if not (self.theta > self.mu >= 0.0):
            raise ValueError("need theta > mu >= 0 (non-empty dead band)")
        if self.phi < 0 or self.eps_contact <= 0:
            raise ValueError("phi must be >= 0 and eps_contact > 0")


@dataclass
class PcrTerms:
    r_a: float
    r_c: float
    r_s: float
    r_weighted: float
    grad: np.ndarray = field(default_factory=lambda: np.zeros(7))

    @property
    def value(self) -> float:
        return self.r_a + self.r_c + self.r_s


def antipodal_term(pair: ContactPair, eps_contact: float = 1e-6) -> float:
    """1 - mean cosine alignment of the contact line with the two normals; in [0, 2]."""
    u = pair.c2 - pair.c1
    norm = np.linalg.norm(u)
    if norm < eps_contact:
        raise DegenerateContactError("contacts coincide; antipodal term undefined")
    uhat = u / norm
    return 1.0 - 0.5 * (np.dot(uhat, pair.n2) + np.dot(-uhat, pair.n1))


def distance_terms(pair: ContactPair, cfg: PcrConfig):
    """Hinge penalties keeping both contact distances inside [mu, theta]."""
    r_c = max(0.0, cfg.theta - pair.d1) + max(0.0, cfg.theta - pair.d2)
    r_s = max(0.0, pair.d1 - cfg.mu) + max(0.0, pair.d2 - cfg.mu)
    return r_c, r_s


def weighted_batch(terms, scores, M=None):
    """Score-weighted per-grasp regularizers and their batch mean.

    R_i = s_i * terms_i / mean(s); scaling all scores by a positive constant
    leaves every R_i unchanged. Scores are divided by their maximum before any
    other arithmetic, so the cancellation is bitwise whenever the scaled
    scores are themselves exactly representable.
    """
    terms = np.asarray(terms, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if M is None:
        M = len(scores)
    if M < 1 or len(scores) == 0:
        raise ValueError("batch must contain at least one grasp")
    top = float(np.max(scores))
    if top <= 0.0:
        raise ZeroWeightError("all grasp scores are zero")
    u = scores / top
    mean_u = float(np.sum(u)) / M
    if mean_u <= 0.0:
        raise ZeroWeightError("all grasp scores are zero")
    r_i = u * terms / mean_u
    return r_i, float(np.sum(r_i)) / M


def total_loss_hook(external_loss: float, r: float, cfg: PcrConfig) -> float:
    """Total loss for an external training objective: L + phi * R."""
    return float(external_loss) + cfg.phi * float(r)


def _surface_data(c, grid: SdfGrid, obj_R, obj_t):
    """SDF value, world-frame raw gradient, and world normal-derivative matrix at c."""
    q = world_to_object(c, obj_R, obj_t)
    d = grid.query(q)
    g = grid.gradient(q)
    gnorm = np.linalg.norm(g)
    if gnorm < 1e-9:
        raise DegenerateNormalError("SDF gradient vanishes at contact")
    ghat = g / gnorm
    H = grid.hessian(q)
    # dn_world/dc_world for the unit normal n = R_o normalize(grad f)
    M = obj_R @ ((np.eye(3) - np.outer(ghat, ghat)) @ H / gnorm) @ obj_R.T
    return float(d), obj_R @ g, obj_R @ ghat, M


def pcr_value_and_grad(g: GraspPose, spec: GripperSpec, grid: SdfGrid,
                       obj_R=None, obj_t=None, cfg: PcrConfig = PcrConfig(),
                       aa_offset=None) -> PcrTerms:
    """All three regularizer terms plus the gradient w.r.t. (dt, d axis-angle, dw).

    The gradient is the exact derivative of the interpolated field inside each
    cell, including the curvature of the interpolant through the unit normals.
    """
    obj_R = np.eye(3) if obj_R is None else np.asarray(obj_R, dtype=float)
    obj_t = np.zeros(3) if obj_t is None else np.asarray(obj_t, dtype=float)
    c1, c2 = contacts(spec, g)
    u = c2 - c1
    L = np.linalg.norm(u)
    if L < cfg.eps_contact:
        raise DegenerateContactError("contacts coincide")
    uhat = u / L

    d1, grad1, n1, M1 = _surface_data(c1, grid, obj_R, obj_t)
    d2, grad2, n2, M2 = _surface_data(c2, grid, obj_R, obj_t)
    J1, J2 = contact_jacobians(spec, g, aa_offset)

    r_a = 1.0 - 0.5 * (np.dot(uhat, n2) - np.dot(uhat, n1))
    r_c = max(0.0, cfg.theta - d1) + max(0.0, cfg.theta - d2)
    r_s = max(0.0, d1 - cfg.mu) + max(0.0, d2 - cfg.mu)

    P_u = (np.eye(3) - np.outer(uhat, uhat)) / L
    grad = -0.5 * ((n2 - n1) @ P_u @ (J2 - J1)
                   + (uhat @ M2) @ J2 - (uhat @ M1) @ J1)
    for d, gr, J in ((d1, grad1, J1), (d2, grad2, J2)):
        if cfg.theta - d > 0.0:
            grad = grad - gr @ J
        if d - cfg.mu > 0.0:
            grad = grad + gr @ J

    value = r_a + r_c + r_s
    return PcrTerms(float(r_a), float(r_c), float(r_s), float(value), grad)


def pcr_value(g, spec, grid, obj_R=None, obj_t=None, cfg=PcrConfig()) -> float:
    """Scalar r_a + r_c + r_s; used by finite-difference checks."""
    terms = pcr_value_and_grad(g, spec, grid, obj_R, obj_t, cfg)
    return terms.value
