"""Flat-array batch boundary over the graspprior regularizer and refiner.

Grasps cross the boundary as contiguous float64 rows of width ROW_WIDTH = 16:
t (3), R (9, row-major), w (1), score (1), object_id as a real (1), pad (1).
Scenes and SDF grids are loaded once into opaque handles; every batch call
receives its full configuration as arguments, so interleaved calls with
different configs cannot affect each other. All heavy computation happens in
the primary package's numpy kernels, which release the interpreter lock for
the duration of the native work; handles are immutable and shareable.

The binding layer forwards to the primary implementation unchanged, so batch
outputs are bitwise equal to the primary per-grasp and CLI results.
"""
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from graspprior.cli import refine_targets
from graspprior.contact_map import AnalyticScorePredictor, OracleContactPredictor
from graspprior.csjo import CsjoConfig, RefinementFailedError, refine
from graspprior.gripper import (DegenerateContactError, DegenerateNormalError,
                                GraspPose, GripperSpec, InvalidGraspError)
from graspprior.pcr import PcrConfig, pcr_value_and_grad, weighted_batch
from graspprior.scene import load_scene as _load_scene
from graspprior.sdf import load_grid

__version__ = "0.1.0"

ROW_WIDTH = 16

# per-row status codes
OK = 0
MALFORMED_ROW = 1
NUMERIC_FAILURE = 2

__all__ = [
    "ROW_WIDTH", "OK", "MALFORMED_ROW", "NUMERIC_FAILURE",
    "SdfHandle", "SceneHandle", "load_sdf", "load_scene",
    "PcrBatchResult", "RefineBatchResult", "pcr_batch", "refine_batch",
    "encode_grasps", "decode_grasps",
]


@dataclass(frozen=True)
class SdfHandle:
    """Opaque token for one baked SDF grid in its object frame."""
    _grid: object


@dataclass(frozen=True)
class SceneHandle:
    """Opaque token for a loaded scene (objects, grids, clouds, poses)."""
    _scene: object


def load_sdf(path) -> SdfHandle:
    """Load a binary SDF grid file into an opaque handle."""
    return SdfHandle(load_grid(path))


def load_scene(path) -> SceneHandle:
    """Load a saved scene (directory or scene.json path) into an opaque handle."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, "scene.json")
    return SceneHandle(_load_scene(path))


def encode_grasps(grasps: Sequence[GraspPose]) -> np.ndarray:
    """Pack grasp poses into an (N, ROW_WIDTH) float64 array (pad column 0)."""
    out = np.zeros((len(grasps), ROW_WIDTH))
    for i, g in enumerate(grasps):
        out[i, 0:3] = g.t
        out[i, 3:12] = g.R.reshape(9)
        out[i, 12] = g.w
        out[i, 13] = g.score
        out[i, 14] = float(g.object_id)
    return out


def decode_grasps(rows: np.ndarray) -> List[GraspPose]:
    """Unpack an (N, ROW_WIDTH) array into grasp poses; raises on invalid rows."""
    rows = _as_rows(rows)
    return [_decode_row(row) for row in rows]


def _as_rows(rows) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != ROW_WIDTH:
        raise ValueError(f"grasp array must have shape (N, {ROW_WIDTH})")
    return rows


def _decode_row(row: np.ndarray) -> GraspPose:
    if not np.all(np.isfinite(row)):
        raise InvalidGraspError("non-finite values in grasp row")
    if row[12] < 0.0:
        raise InvalidGraspError("negative grasp width in row")
    return GraspPose(t=row[0:3].copy(), R=row[3:12].reshape(3, 3).copy(),
                     w=float(row[12]), score=float(row[13]),
                     object_id=int(round(row[14])))


@dataclass
class PcrBatchResult:
    r_a: np.ndarray        # (N,)
    r_c: np.ndarray        # (N,)
    r_s: np.ndarray        # (N,)
    r_weighted: np.ndarray  # (N,) score-weighted per-grasp regularizer
    grad: np.ndarray       # (N, 7) d(r_a + r_c + r_s)/d(dt, daa, dw)
    errors: np.ndarray     # (N,) int status codes; NaN rows where nonzero


def pcr_batch(grasps, handle: Union[SdfHandle, SceneHandle],
              theta: float = 0.02, mu: float = 0.005, phi: float = 0.1,
              eps_contact: float = 1e-6, spec: Optional[GripperSpec] = None,
              obj_R=None, obj_t=None) -> PcrBatchResult:
    """Regularizer terms and gradients for every row of a grasp array.

    With a SceneHandle the object frame and grid come from each row's
    object_id; with an SdfHandle all rows share one grid and the optional
    obj_R / obj_t frame. Valid rows reproduce the primary per-grasp values
    identically; malformed or degenerate rows get a status code and NaN
    outputs while the rest of the batch is still returned.
    """
    rows = _as_rows(grasps)
    n = len(rows)
    cfg = PcrConfig(theta=theta, mu=mu, phi=phi, eps_contact=eps_contact)
    spec = GripperSpec() if spec is None else spec
    res = PcrBatchResult(np.full(n, np.nan), np.full(n, np.nan),
                         np.full(n, np.nan), np.full(n, np.nan),
                         np.full((n, 7), np.nan), np.zeros(n, dtype=int))
    values, scores, valid = [], [], []
    for i, row in enumerate(rows):
        try:
            g = _decode_row(row)
            if isinstance(handle, SceneHandle):
                obj = handle._scene.object_by_id(g.object_id)
                grid, R, t = obj.grid, obj.shape.R, obj.shape.t
            else:
                grid, R, t = handle._grid, obj_R, obj_t
            terms = pcr_value_and_grad(g, spec, grid, R, t, cfg)
        except (DegenerateContactError, DegenerateNormalError):
            res.errors[i] = NUMERIC_FAILURE
            continue
        except (InvalidGraspError, KeyError, ValueError):
            res.errors[i] = MALFORMED_ROW
            continue
        res.r_a[i] = terms.r_a
        res.r_c[i] = terms.r_c
        res.r_s[i] = terms.r_s
        res.grad[i] = terms.grad
        values.append(terms.value)
        scores.append(g.score)
        valid.append(i)
    if valid:
        r_i, _ = weighted_batch(values, scores)
        res.r_weighted[valid] = r_i
    return res


@dataclass
class RefineBatchResult:
    grasps: np.ndarray     # (N, ROW_WIDTH) refined rows; failed rows unchanged
    j_initial: np.ndarray  # (N,) objective at the input pose
    j_final: np.ndarray    # (N,) objective at the reported pose
    errors: np.ndarray     # (N,) int status codes


def refine_batch(grasps, scene_handle: SceneHandle, predictor: str = "best-score",
                 alpha: float = 0.2, beta: float = 0.01, gamma: float = 5.0,
                 t_max_score: float = 1.0, learning_rate: float = 1e-3,
                 iterations: int = 200,
                 spec: Optional[GripperSpec] = None) -> RefineBatchResult:
    """Batch pose refinement; rows are refined exactly as the primary refiner.

    predictor selects the built-in contact oracle: "best-score" targets the
    highest-scored grasp on the same object (the pipeline default), "self"
    targets each grasp's own contacts. The best valid iterate is reported, so
    j_final <= j_initial on every successful row.
    """
    rows = _as_rows(grasps)
    n = len(rows)
    if predictor not in ("best-score", "self"):
        raise ValueError(f"unknown predictor selector {predictor!r}")
    cfg = CsjoConfig(alpha=alpha, beta=beta, gamma=gamma,
                     t_max_score=t_max_score, learning_rate=learning_rate,
                     iterations=iterations)
    spec = GripperSpec() if spec is None else spec
    scene = scene_handle._scene
    res = RefineBatchResult(rows.copy(), np.full(n, np.nan),
                            np.full(n, np.nan), np.zeros(n, dtype=int))
    decoded: List[Optional[GraspPose]] = []
    for i, row in enumerate(rows):
        try:
            g = _decode_row(row)
            scene.object_by_id(g.object_id)
        except (InvalidGraspError, KeyError, ValueError):
            res.errors[i] = MALFORMED_ROW
            g = None
        decoded.append(g)
    pool = [g for g in decoded if g is not None]
    if predictor == "best-score" and pool:
        best = dict(zip([id(g) for g in pool], refine_targets(pool)))
    for i, g in enumerate(decoded):
        if g is None:
            continue
        target = g if predictor == "self" else best[id(g)]
        obj = scene.object_by_id(g.object_id)
        contact_pred = OracleContactPredictor(target, spec)
        score_pred = AnalyticScorePredictor(obj.grid, obj.shape.R, obj.shape.t,
                                            spec, scene.obstacles(), plane_z=0.0)
        try:
            new_g, trace = refine(g, obj.cloud, contact_pred, score_pred,
                                  spec, cfg)
        except (RefinementFailedError, DegenerateContactError,
                DegenerateNormalError, InvalidGraspError):
            res.errors[i] = NUMERIC_FAILURE
            continue
        res.grasps[i] = encode_grasps([new_g])[0]
        first = trace.entries[0][1]
        res.j_initial[i] = first.j if first is not None else np.nan
        res.j_final[i] = trace.entries[trace.best_index][1].j
    return res
