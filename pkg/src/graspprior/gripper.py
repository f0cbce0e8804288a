"""Parallel-jaw gripper: grasp poses, contact kinematics, body cloud, collisions.

Gripper frame convention: x-hat is the approach axis, y-hat the closing axis,
the pose origin sits at the gripper base. Fingertip-pad centres are at
(finger_depth, +/- w/2, 0) in the gripper frame.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import hat, is_rotation, so3_left_jacobian
from .sdf import SdfGrid


class InvalidGraspError(ValueError):
    """Width outside [0, w_max] or an otherwise malformed pose."""


class DegenerateNormalError(ValueError):
    """SDF gradient too small to define a surface normal."""


class DegenerateContactError(ValueError):
    """Contacts too close together for the contact line to be defined."""


@dataclass(frozen=True)
class GripperSpec:
    w_max: float = 0.10
    finger_depth: float = 0.02
    finger_thickness: float = 0.01
    body_samples: np.ndarray = None  # (N, 3) points in the gripper frame

    def __post_init__(self):
        if self.w_max <= 0 or self.finger_depth < 0:
            raise ValueError("w_max must be positive and finger_depth non-negative")
        if self.body_samples is None:
            object.__setattr__(self, "body_samples",
                               _jaw_silhouette(self.w_max, self.finger_depth,
                                               self.finger_thickness))
        samples = np.asarray(self.body_samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 3 or samples.shape[0] == 0 \
                or not np.all(np.isfinite(samples)):
            raise ValueError("body_samples must be a non-empty finite (N, 3) array")
        object.__setattr__(self, "body_samples", samples)


def _jaw_silhouette(w_max, finger_depth, thickness, n=256):
    """Deterministic sample points on a two-finger silhouette (base bar + fingers)."""
    pts = []
    half = w_max / 2 + thickness / 2
    n_finger = n * 3 // 8
    n_base = n - 2 * n_finger
    xs = np.linspace(0.0, finger_depth + thickness, n_finger // 4 + 1)
    zs = np.linspace(-thickness / 2, thickness / 2, 4)
    for side in (-half, half):
        k = 0
        for x in xs:
            for z in zs:
                if k >= n_finger:
                    break
                pts.append([x, side, z])
                k += 1
    ys = np.linspace(-half, half, n_base // 2)
    for y in ys:
        pts.append([-thickness, y, 0.0])
        pts.append([-2 * thickness, y, 0.0])
    return np.array(pts[:n])


@dataclass
class GraspPose:
    t: np.ndarray
    R: np.ndarray
    w: float
    score: float = 1.0
    object_id: int = -1

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if not is_rotation(self.R):
            raise InvalidGraspError("grasp rotation is not orthonormal")
        if not (0.0 <= self.score <= 1.0):
            raise InvalidGraspError("grasp score must lie in [0, 1]")


@dataclass
class ContactPair:
    c1: np.ndarray
    c2: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    d1: float
    d2: float


def _local_contacts(spec: GripperSpec, w: float):
    return (np.array([spec.finger_depth, -w / 2, 0.0]),
            np.array([spec.finger_depth, +w / 2, 0.0]))


def contacts(spec: GripperSpec, g: GraspPose):
    """World positions (c1, c2) of the fingertip-pad centres."""
    if not (0.0 <= g.w <= spec.w_max):
        raise InvalidGraspError(f"width {g.w} outside [0, {spec.w_max}]")
    l1, l2 = _local_contacts(spec, g.w)
    return g.t + g.R @ l1, g.t + g.R @ l2


def contact_jacobians(spec: GripperSpec, g: GraspPose, aa_offset=None):
    """3x7 Jacobians of (c1, c2) w.r.t. (dt, d axis-angle, dw).

    With aa_offset None the rotation block is the local increment at the
    current R; otherwise it differentiates w.r.t. the components of the given
    absolute axis-angle offset (left Jacobian chain).
    """
    l1, l2 = _local_contacts(spec, g.w)
    Jl = None if aa_offset is None else so3_left_jacobian(aa_offset)
    ey = 0.5 * g.R[:, 1]
    out = []
    for lc, sign in ((l1, -1.0), (l2, +1.0)):
        J = np.zeros((3, 7))
        J[0, 0] = J[1, 1] = J[2, 2] = 1.0
        x, y, z = g.R @ lc
        W = np.array([[0.0, z, -y], [-z, 0.0, x], [y, -x, 0.0]])  # -hat
        J[:, 3:6] = W if Jl is None else W @ Jl
        J[:, 6] = sign * ey
        out.append(J)
    return out[0], out[1]


def world_to_object(p, obj_R, obj_t):
    return (np.asarray(p, dtype=float) - obj_t) @ obj_R


def annotate_contacts(c1, c2, grid: SdfGrid, obj_R=None, obj_t=None) -> ContactPair:
    """Fill SDF distances and unit outward normals at the two contact points."""
    obj_R = np.eye(3) if obj_R is None else np.asarray(obj_R, dtype=float)
    obj_t = np.zeros(3) if obj_t is None else np.asarray(obj_t, dtype=float)
    vals, normals = [], []
    for c in (c1, c2):
        q = world_to_object(c, obj_R, obj_t)
        vals.append(grid.query(q))
        grad = grid.gradient(q)
        norm = np.linalg.norm(grad)
        if norm < 1e-9:
            raise DegenerateNormalError("SDF gradient vanishes at contact")
        normals.append(obj_R @ (grad / norm))
    return ContactPair(np.asarray(c1, float), np.asarray(c2, float),
                       normals[0], normals[1], float(vals[0]), float(vals[1]))


def gripper_cloud(spec: GripperSpec, g: GraspPose) -> np.ndarray:
    """Body sample points posed into the world frame."""
    return spec.body_samples @ g.R.T + g.t


def collision_depth(spec: GripperSpec, g: GraspPose, obstacles=(), plane_z=None):
    """Max penetration of the gripper body into the scene; <= 0 means clear.

    obstacles: iterable of (SdfGrid, obj_R, obj_t). plane_z, when given, adds
    the support half-space z <= plane_z as an obstacle. Returns -inf when
    there is nothing to collide with.
    """
    pts = gripper_cloud(spec, g)
    depth = -np.inf
    for grid, obj_R, obj_t in obstacles:
        q = world_to_object(pts, obj_R, obj_t)
        depth = max(depth, float(np.max(-grid.query(q))))
    if plane_z is not None:
        depth = max(depth, float(np.max(plane_z - pts[:, 2])))
    return depth


# --- grasp file I/O (JSON Lines, fixed key order) ---

def _fmt(x: float) -> float:
    return float(x)


def save_grasps(grasps, path, extra=None) -> None:
    """Write grasps as JSON Lines; extra is an optional per-grasp dict list."""
    with open(path, "w") as fh:
        for i, g in enumerate(grasps):
            row = {
                "object_id": int(g.object_id),
                "t": [float(v) for v in g.t],
                "R": [float(v) for v in g.R.reshape(9)],
                "w": float(g.w),
                "score": float(g.score),
            }
            if extra is not None:
                row.update(extra[i])
            fh.write(json.dumps(row) + "\n")


def load_grasps(path):
    grasps = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            grasps.append(GraspPose(
                t=np.array(row["t"], dtype=float),
                R=np.array(row["R"], dtype=float).reshape(3, 3),
                w=float(row["w"]),
                score=float(row["score"]),
                object_id=int(row["object_id"]),
            ))
    return grasps
