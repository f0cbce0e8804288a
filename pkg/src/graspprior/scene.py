"""Synthetic desk scenes: deterministic object placement, surface sampling,
antipodal candidate sampling, friction-cone success checks and the
object-balanced average-precision metric.
"""
import json
import os
from dataclasses import dataclass
from typing import List

import numpy as np

from .contact_map import AnalyticScorePredictor, ObjectPointCloud, load_cloud, save_cloud
from .geometry import rotation_from_axis_angle
from .gripper import (DegenerateContactError, DegenerateNormalError, GraspPose,
                      GripperSpec, annotate_contacts, collision_depth, contacts)
from .sdf import AnalyticShape, bake_grid, load_grid, save_grid, shape_bounds, sphere, box, cylinder

DEFAULT_FRICTIONS = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)


class SceneTooDenseError(RuntimeError):
    """Placement rejection budget exhausted."""


class NoCandidatesError(RuntimeError):
    """No antipodal pair could be found on the cloud."""


@dataclass
class SceneObject:
    object_id: int
    shape: AnalyticShape      # pose carried by the shape
    grid: "SdfGrid"           # baked in the object's canonical frame
    cloud: ObjectPointCloud


@dataclass
class Scene:
    seed: int
    domain: tuple             # ((xmin, ymin), (xmax, ymax)) on the z=0 plane
    objects: List[SceneObject]

    def obstacles(self):
        return [(o.grid, o.shape.R, o.shape.t) for o in self.objects]

    def object_by_id(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(f"no object with id {object_id}")


@dataclass(frozen=True)
class EvalConfig:
    frictions: tuple = DEFAULT_FRICTIONS
    grasps_per_object_cap: int = 5

    def __post_init__(self):
        if len(self.frictions) == 0 or min(self.frictions) <= 0:
            raise ValueError("frictions must be non-empty and positive")


def _canonical_shape(kind, params):
    if kind == "sphere":
        return sphere(*params)
    if kind == "box":
        return box(*params)
    return cylinder(*params)


def _bounding_radius(shape: AnalyticShape) -> float:
    lo, hi = shape_bounds(AnalyticShape(shape.kind, shape.params))
    return float(np.linalg.norm(hi) if np.linalg.norm(hi) > np.linalg.norm(lo)
                 else np.linalg.norm(lo))


def bake_object_grid(shape: AnalyticShape, resolution: int = 64):
    """Bake the shape's canonical-frame SDF over its bounding cube + 25% margin."""
    canonical = AnalyticShape(shape.kind, shape.params)
    lo, hi = shape_bounds(canonical)
    half = 1.25 * float(np.max(np.maximum(np.abs(lo), np.abs(hi))))
    return bake_grid([canonical], -half * np.ones(3), half * np.ones(3), resolution)


def sample_surface(shape: AnalyticShape, n: int, noise_sigma: float = 0.0,
                   seed: int = 0) -> ObjectPointCloud:
    """Uniform-area surface samples with exact normals; Gaussian noise on positions."""
    if n < 1 or noise_sigma < 0:
        raise ValueError("need n >= 1 and noise_sigma >= 0")
    rng = np.random.default_rng(seed)
    if shape.kind == "sphere":
        (r,) = shape.params
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts, nrm = r * dirs, dirs
    elif shape.kind == "box":
        hx, hy, hz = shape.params
        areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
        faces = rng.choice(6, size=n, p=areas / areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.zeros((n, 3))
        nrm = np.zeros((n, 3))
        half = np.array([hx, hy, hz])
        for f in range(6):
            axis, sign = f // 2, 1.0 if f % 2 == 0 else -1.0
            mask = faces == f
            other = [k for k in range(3) if k != axis]
            pts[mask, axis] = sign * half[axis]
            pts[mask, other[0]] = uv[mask, 0] * half[other[0]]
            pts[mask, other[1]] = uv[mask, 1] * half[other[1]]
            nrm[mask, axis] = sign
    else:
        r, hh = shape.params
        side_area = 2 * np.pi * r * 2 * hh
        cap_area = np.pi * r * r
        total = side_area + 2 * cap_area
        which = rng.choice(3, size=n, p=[side_area / total, cap_area / total,
                                         cap_area / total])
        phi = rng.uniform(0.0, 2 * np.pi, size=n)
        zu = rng.uniform(-1.0, 1.0, size=n)
        ru = np.sqrt(rng.uniform(0.0, 1.0, size=n)) * r
        pts = np.zeros((n, 3))
        nrm = np.zeros((n, 3))
        side = which == 0
        pts[side] = np.stack([r * np.cos(phi[side]), r * np.sin(phi[side]),
                              hh * zu[side]], axis=1)
        nrm[side] = np.stack([np.cos(phi[side]), np.sin(phi[side]),
                              np.zeros(side.sum())], axis=1)
        for idx, sign in ((which == 1, 1.0), (which == 2, -1.0)):
            pts[idx] = np.stack([ru[idx] * np.cos(phi[idx]),
                                 ru[idx] * np.sin(phi[idx]),
                                 sign * hh * np.ones(idx.sum())], axis=1)
            nrm[idx, 2] = sign
    world_pts = pts @ shape.R.T + shape.t
    world_nrm = nrm @ shape.R.T
    if noise_sigma > 0:
        world_pts = world_pts + rng.normal(scale=noise_sigma, size=world_pts.shape)
    return ObjectPointCloud(world_pts, world_nrm)


_SIZE_RANGES = {
    "sphere": [(0.025, 0.045)],
    "box": [(0.02, 0.04)] * 3,
    "cylinder": [(0.02, 0.035), (0.025, 0.05)],
}


def gen_scene(seed: int, n_objects: int, shape_mix=("sphere", "box", "cylinder"),
              domain=((-0.15, -0.15), (0.15, 0.15)), resolution: int = 64,
              cloud_points: int = 512, noise_sigma: float = 0.0) -> Scene:
    """Deterministic scene: rejection-sampled placements, baked grids, clouds."""
    if n_objects < 1:
        raise ValueError("need at least one object")
    rng = np.random.default_rng(seed)
    (xmin, ymin), (xmax, ymax) = domain
    placed = []
    attempts = 0
    budget = 10 * n_objects
    while len(placed) < n_objects:
        i = len(placed)
        kind = shape_mix[i % len(shape_mix)]
        params = tuple(rng.uniform(lo, hi) for lo, hi in _SIZE_RANGES[kind])
        yaw = rng.uniform(0.0, 2 * np.pi)
        x = rng.uniform(xmin, xmax)
        y = rng.uniform(ymin, ymax)
        if kind == "sphere":
            z = params[0]
        elif kind == "box":
            z = params[2]
        else:
            z = params[1]
        R = rotation_from_axis_angle(np.array([0.0, 0.0, yaw]))
        shape = AnalyticShape(kind, params, R, np.array([x, y, z]))
        rad = _bounding_radius(shape)
        clear = all(np.linalg.norm(shape.t - s.t) >= rad + r2 + 0.005
                    for s, r2 in placed)
        if clear:
            placed.append((shape, rad))
        else:
            attempts += 1
            if attempts > budget:
                raise SceneTooDenseError(
                    f"could not place {n_objects} objects in the domain")
    objects = []
    for i, (shape, _) in enumerate(placed):
        grid = bake_object_grid(shape, resolution)
        cloud_seed = int(rng.integers(2 ** 32))
        cloud = sample_surface(shape, cloud_points, noise_sigma, cloud_seed)
        cloud.object_id = i
        objects.append(SceneObject(i, shape, grid, cloud))
    return Scene(int(seed), domain, objects)


def sample_grasp_candidates(cloud: ObjectPointCloud, n: int, spec: GripperSpec,
                            seed: int = 0, score_predictor=None,
                            clearance: float = 0.005):
    """Heuristic antipodal sampler: random point + best opposing partner."""
    if cloud.normals is None:
        raise ValueError("candidate sampling needs cloud normals")
    rng = np.random.default_rng(seed)
    pts, nrm = cloud.points, cloud.normals
    grasps = []
    attempts = max(4 * n, 16)
    for _ in range(attempts):
        if len(grasps) >= n:
            break
        i = int(rng.integers(len(pts)))
        rel = pts - pts[i]
        dist = np.linalg.norm(rel, axis=1)
        mask = (dist >= 1e-3) & (dist <= spec.w_max - 2 * clearance)
        if not np.any(mask):
            continue
        uhat = np.zeros_like(rel)
        uhat[mask] = rel[mask] / dist[mask, None]
        quality = 0.5 * (np.einsum("ij,ij->i", nrm, uhat) - uhat @ nrm[i])
        quality[~mask] = -np.inf
        j = int(np.argmax(quality))
        if quality[j] < 0.5:
            continue
        y_axis = uhat[j]
        approach = np.array([0.0, 0.0, -1.0])
        x_axis = approach - np.dot(approach, y_axis) * y_axis
        if np.linalg.norm(x_axis) < 1e-6:
            x_axis = np.array([1.0, 0.0, 0.0]) \
                - np.dot([1.0, 0.0, 0.0], y_axis) * y_axis
        x_axis = x_axis / np.linalg.norm(x_axis)
        z_axis = np.cross(x_axis, y_axis)
        R = np.stack([x_axis, y_axis, z_axis], axis=1)
        w = min(dist[j] + 2 * clearance, spec.w_max)
        mid = 0.5 * (pts[i] + pts[j])
        t = mid - spec.finger_depth * x_axis
        g = GraspPose(t, R, w, 1.0, cloud.object_id)
        if score_predictor is not None:
            g.score = float(score_predictor(g))
        grasps.append(g)
    if n > 0 and not grasps:
        raise NoCandidatesError("no antipodal pair found on the cloud")
    return grasps


def force_closure_check(g: GraspPose, grid, obj_R, obj_t, spec: GripperSpec,
                        mu_f: float, theta: float = 0.02, obstacles=(),
                        plane_z: float = 0.0) -> bool:
    """Reachable contacts + both contact forces inside the friction cone + no
    collision of the gripper body with the scene."""
    try:
        c1, c2 = contacts(spec, g)
        pair = annotate_contacts(c1, c2, grid, obj_R, obj_t)
    except (DegenerateContactError, DegenerateNormalError, ValueError):
        return False
    if abs(pair.d1) > theta or abs(pair.d2) > theta:
        return False
    u = pair.c2 - pair.c1
    norm = np.linalg.norm(u)
    if norm < 1e-9:
        return False
    uhat = u / norm
    cone_cos = np.cos(np.arctan(mu_f))
    # closing force at c1 pushes along +u, at c2 along -u; inward normal is -n
    if np.dot(uhat, -pair.n1) < cone_cos:
        return False
    if np.dot(-uhat, -pair.n2) < cone_cos:
        return False
    if collision_depth(spec, g, obstacles, plane_z) > 0.0:
        return False
    return True


def _truncate_ranked(grasps, cap: int, k: int):
    ranked = sorted(range(len(grasps)), key=lambda i: -grasps[i].score)
    kept = []
    counts = {}
    for i in ranked:
        oid = grasps[i].object_id
        if counts.get(oid, 0) >= cap or len(kept) >= k:
            continue
        counts[oid] = counts.get(oid, 0) + 1
        kept.append(grasps[i])
    return kept


def precision_at_m(outcomes, k: int):
    """Precision@m for m = 1..k; outcomes shorter than k count as failures."""
    padded = list(outcomes) + [False] * (k - len(outcomes))
    hits = np.cumsum([1.0 if o else 0.0 for o in padded[:k]])
    return hits / np.arange(1, k + 1)


def ap_metric(grasps, scene: Scene, cfg: EvalConfig = EvalConfig(),
              spec: GripperSpec = None, theta: float = 0.02):
    """Object-balanced AP: k = 5 * N_object, at most 5 grasps per object."""
    spec = spec if spec is not None else GripperSpec()
    k = cfg.grasps_per_object_cap * len(scene.objects)
    kept = _truncate_ranked(grasps, cfg.grasps_per_object_cap, k)
    obstacles = scene.obstacles()
    ap_by_friction = {}
    outcomes_by_friction = {}
    for mu_f in cfg.frictions:
        outcomes = []
        for g in kept:
            obj = scene.object_by_id(g.object_id)
            outcomes.append(force_closure_check(
                g, obj.grid, obj.shape.R, obj.shape.t, spec, mu_f, theta,
                obstacles, plane_z=0.0))
        outcomes_by_friction[mu_f] = outcomes
        ap_by_friction[mu_f] = float(np.mean(precision_at_m(outcomes, k))) if k else 0.0
    ap = float(np.mean(list(ap_by_friction.values()))) if ap_by_friction else 0.0
    per_object = {}
    for obj in scene.objects:
        idx = [i for i, g in enumerate(kept) if g.object_id == obj.object_id]
        succ = [outcomes_by_friction[mu][i] for mu in cfg.frictions for i in idx]
        per_object[obj.object_id] = {
            "n_grasps": len(idx),
            "success_rate": float(np.mean(succ)) if succ else 0.0,
        }
    return {
        "n_grasps": len(kept),
        "k": k,
        "ap": ap,
        "ap_by_friction": {repr(float(mu)): ap_by_friction[mu]
                           for mu in cfg.frictions},
        "per_object": {str(oid): per_object[oid] for oid in sorted(per_object)},
    }


# --- scene file I/O ---

def save_scene(scene: Scene, out_dir) -> str:
    """Write scene.json plus per-object grid and cloud files into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    objects = []
    for obj in scene.objects:
        sdf_name = f"sdf_{obj.object_id}.bin"
        cloud_name = f"cloud_{obj.object_id}.csv"
        save_grid(obj.grid, os.path.join(out_dir, sdf_name))
        save_cloud(obj.cloud, os.path.join(out_dir, cloud_name))
        objects.append({
            "id": obj.object_id,
            "kind": obj.shape.kind,
            "params": [float(p) for p in obj.shape.params],
            "pose_R": [float(v) for v in obj.shape.R.reshape(9)],
            "pose_t": [float(v) for v in obj.shape.t],
            "sdf_path": sdf_name,
            "cloud_path": cloud_name,
        })
    doc = {"seed": scene.seed,
           "domain": [list(scene.domain[0]), list(scene.domain[1])],
           "objects": objects}
    path = os.path.join(out_dir, "scene.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path


def load_scene(path) -> Scene:
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        doc = json.load(fh)
    objects = []
    for entry in doc["objects"]:
        shape = AnalyticShape(entry["kind"], tuple(entry["params"]),
                              np.array(entry["pose_R"]).reshape(3, 3),
                              np.array(entry["pose_t"]))
        grid = load_grid(os.path.join(base, entry["sdf_path"]))
        cloud = load_cloud(os.path.join(base, entry["cloud_path"]))
        objects.append(SceneObject(int(entry["id"]), shape, grid, cloud))
    domain = (tuple(doc["domain"][0]), tuple(doc["domain"][1]))
    return Scene(int(doc["seed"]), domain, objects)
