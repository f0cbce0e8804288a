"""Contact maps over object point clouds and the oracle predictors that stand
in for learned contact/score networks during refinement.
"""
import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gripper import (DegenerateContactError, GraspPose, GripperSpec,
                      InvalidGraspError, collision_depth, contacts)


@dataclass
class ObjectPointCloud:
    points: np.ndarray               # (N, 3), meters, world frame
    normals: Optional[np.ndarray] = None  # (N, 3) unit vectors, or None
    object_id: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) == 0:
            raise ValueError("point cloud must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite values")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float)
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must match the point array shape")
            norms = np.linalg.norm(self.normals, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-6:
                raise ValueError("normals must be unit length")

    def __len__(self):
        return len(self.points)


@dataclass
class ContactMapValues:
    d: np.ndarray   # per-point distance to the nearest contact
    pd: np.ndarray  # per-point perpendicular distance to the contact line


def contact_map(points, c1, c2) -> np.ndarray:
    """Per-point distance to the nearest of the two contacts."""
    pts = points.points if isinstance(points, ObjectPointCloud) else np.asarray(points)
    d1 = np.linalg.norm(pts - c1, axis=1)
    d2 = np.linalg.norm(pts - c2, axis=1)
    return np.minimum(d1, d2)


def projection_contact_map(points, c1, c2, eps_contact: float = 1e-6) -> np.ndarray:
    """Per-point perpendicular distance to the infinite line through c1 and c2.

    Equals D_i * sin(angle at the nearest contact); computed via the
    cross-product identity, which is exact for all non-degenerate inputs.
    """
    pts = points.points if isinstance(points, ObjectPointCloud) else np.asarray(points)
    u = np.asarray(c2, float) - np.asarray(c1, float)
    norm = np.linalg.norm(u)
    if norm < eps_contact:
        raise DegenerateContactError("contacts coincide; contact line undefined")
    return np.linalg.norm(np.cross(pts - c1, u / norm), axis=1)


def maps_for_grasp(cloud: ObjectPointCloud, spec: GripperSpec, g: GraspPose,
                   eps_contact: float = 1e-6) -> ContactMapValues:
    c1, c2 = contacts(spec, g)
    return ContactMapValues(contact_map(cloud, c1, c2),
                            projection_contact_map(cloud, c1, c2, eps_contact))


class OracleContactPredictor:
    """Predictor that always returns the maps of one fixed target grasp.

    Encodes a preferred contact region: whatever query pose is supplied, the
    prediction is the target's contact map over the object cloud.
    """

    def __init__(self, target: GraspPose, spec: GripperSpec):
        self.c1, self.c2 = contacts(spec, target)
        self._cloud = None
        self._cached = None

    def __call__(self, gripper_points, cloud: ObjectPointCloud,
                 g: GraspPose) -> ContactMapValues:
        # the prediction depends only on the cloud, so cache per cloud object
        if cloud is not self._cloud:
            self._cloud = cloud
            self._cached = ContactMapValues(
                contact_map(cloud, self.c1, self.c2),
                projection_contact_map(cloud, self.c1, self.c2))
        return self._cached


class AnalyticScorePredictor:
    """Deterministic score in [0, 1] from antipodal quality and collision depth.

    S(g) = clamp01(1 - r_a/2) * clamp01(1 - max(0, depth)/0.01); degenerate
    grasps score 0. Provides no analytic gradient (gradient attribute None),
    so callers fall back to finite differences.
    """

    gradient = None

    def __init__(self, grid, obj_R, obj_t, spec: GripperSpec,
                 obstacles=None, plane_z=None):
        self.grid = grid
        self.obj_R = np.eye(3) if obj_R is None else np.asarray(obj_R, float)
        self.obj_t = np.zeros(3) if obj_t is None else np.asarray(obj_t, float)
        self.spec = spec
        self.obstacles = ([(grid, self.obj_R, self.obj_t)] if obstacles is None
                          else list(obstacles))
        self.plane_z = plane_z
        self._r_body = float(np.max(np.linalg.norm(spec.body_samples, axis=1)))

    def __call__(self, g: GraspPose) -> float:
        return float(self.score_batch([g])[0])

    def score_batch(self, grasps) -> np.ndarray:
        """Vectorized scores for a list of grasps; see score_arrays."""
        n = len(grasps)
        if n == 0:
            return np.zeros(0)
        R_stack = np.empty((n, 3, 3))
        t_stack = np.empty((n, 3))
        w = np.empty(n)
        for i, g in enumerate(grasps):
            R_stack[i] = g.R
            t_stack[i] = g.t
            w[i] = g.w
        return self.score_arrays(t_stack, R_stack, w)

    def score_arrays(self, t_stack, R_stack, w) -> np.ndarray:
        """Scores for poses given as raw arrays t (n,3), R (n,3,3), w (n,).

        Degenerate grasps (coincident contacts or vanishing surface normal)
        score 0; the array form exists because the refinement loop probes many
        nearby poses per iteration.
        """
        t_stack = np.asarray(t_stack, dtype=float)
        R_stack = np.asarray(R_stack, dtype=float)
        w = np.asarray(w, dtype=float)
        n = len(w)
        if np.any((w < 0.0) | (w > self.spec.w_max)):
            raise InvalidGraspError("width outside [0, w_max] in score batch")
        body = self.spec.body_samples
        pts = body @ R_stack.transpose(0, 2, 1) + t_stack[:, None, :]
        # Collision first: sigma only depends on max(0, depth) clipped at 0.01,
        # so a body sample certified to stay below zero depth, or a row with a
        # sample certified past the cutoff, skips its grid query exactly. Row 0
        # is queried in full; the other rows are bounded by their displacement
        # from it (the cubic interpolant of a unit-slope SDF has gradient norm
        # below sqrt(3) * 1.5 * 1.25^2 ~= 4.06; 4.25 covers raster rounding).
        depth = np.full(n, -np.inf)
        if n > 1:
            dt = t_stack - t_stack[0]
            dR = (R_stack - R_stack[0]).reshape(n, 9)
            disp = 4.25 * (np.sqrt(np.einsum("ij,ij->i", dt, dt))
                           + self._r_body * np.sqrt(
                               np.einsum("ij,ij->i", dR, dR)))
        for grid, obj_R, obj_t in self.obstacles:
            q0 = (pts[0] - obj_t) @ obj_R
            d0s = -grid.query(q0)
            depth[0] = max(depth[0], float(d0s.max()))
            if n > 1:
                lo = d0s[None, :] - disp[1:, None]
                surely_deep = (lo >= 0.01).any(axis=1)
                depth[1:][surely_deep] = np.maximum(
                    depth[1:][surely_deep], 0.01)
                need = ((d0s[None, :] + disp[1:, None] >= 0.0)
                        & ~surely_deep[:, None])
                if np.any(need):
                    rows, cols = np.nonzero(need)
                    qb = (pts[rows + 1, cols] - obj_t) @ obj_R
                    dmax = np.full(n - 1, -np.inf)
                    np.maximum.at(dmax, rows, -grid.query(qb))
                    depth[1:] = np.maximum(depth[1:], dmax)
        if self.plane_z is not None:
            depth = np.maximum(depth,
                               (self.plane_z - pts[..., 2]).max(axis=-1))
        sigma = np.clip(1.0 - np.maximum(0.0, depth) / 0.01, 0.0, 1.0)
        # antipodal quality is only needed where sigma leaves the score alive
        score = np.zeros(n)
        alive = np.flatnonzero(sigma > 0.0)
        if len(alive) > 0:
            ta, Ra, wa = t_stack[alive], R_stack[alive], w[alive]
            base = ta + self.spec.finger_depth * Ra[:, :, 0]
            half = (0.5 * wa)[:, None] * Ra[:, :, 1]
            c = np.stack([base - half, base + half], axis=1)
            q = (c.reshape(-1, 3) - self.obj_t) @ self.obj_R
            grad = self.grid.gradient(q).reshape(len(alive), 2, 3)
            gnorm = np.sqrt(np.einsum("nij,nij->ni", grad, grad))
            u = c[:, 1] - c[:, 0]
            sep = np.sqrt(np.einsum("ij,ij->i", u, u))
            ok = (gnorm.min(axis=-1) >= 1e-9) & (sep >= 1e-6)
            normals = (grad / np.maximum(gnorm, 1e-300)[..., None]) @ self.obj_R.T
            uhat = u / np.maximum(sep, 1e-300)[:, None]
            cos2 = np.einsum("ij,ij->i", uhat, normals[:, 1])
            cos1 = -np.einsum("ij,ij->i", uhat, normals[:, 0])
            r_a = 1.0 - 0.5 * (cos1 + cos2)
            score[alive] = np.where(
                ok, np.clip(1.0 - r_a / 2.0, 0.0, 1.0) * sigma[alive], 0.0)
        return score


# --- point cloud CSV I/O ---

CLOUD_HEADER = ["x", "y", "z", "nx", "ny", "nz", "object_id"]


def save_cloud(cloud: ObjectPointCloud, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLOUD_HEADER)
        for i, p in enumerate(cloud.points):
            if cloud.normals is None:
                n = ["", "", ""]
            else:
                n = [repr(float(v)) for v in cloud.normals[i]]
            writer.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                             *n, cloud.object_id])


def load_cloud(path) -> ObjectPointCloud:
    points, normals, object_id = [], [], 0
    have_normals = True
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CLOUD_HEADER:
            raise ValueError(f"unexpected cloud header {header!r}")
        for row in reader:
            points.append([float(row[0]), float(row[1]), float(row[2])])
            if row[3] == "":
                have_normals = False
            else:
                normals.append([float(row[3]), float(row[4]), float(row[5])])
            object_id = int(row[6])
    return ObjectPointCloud(np.array(points),
                            np.array(normals) if have_normals else None,
                            object_id)
