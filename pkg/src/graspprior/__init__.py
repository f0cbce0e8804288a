"""Differentiable grasp-geometry toolkit.

SDF-backed antipodal/collision/surface regularizers with analytic gradients,
projection contact maps, contact-score pose refinement, and a synthetic-scene
friction-cone evaluation harness.
"""

__version__ = "0.1.0"

from .geometry import (apply, axis_angle_from_rotation, renormalize_rotation,
                       rotation_from_axis_angle)
from .sdf import (AnalyticShape, SdfGrid, analytic_sdf, bake_grid, box,
                  cylinder, load_grid, save_grid, sphere)
from .gripper import (ContactPair, GraspPose, GripperSpec, annotate_contacts,
                      collision_depth, contacts, gripper_cloud, load_grasps,
                      save_grasps)
from .pcr import (PcrConfig, PcrTerms, antipodal_term, distance_terms,
                  pcr_value_and_grad, total_loss_hook, weighted_batch)
from .contact_map import (AnalyticScorePredictor, ContactMapValues,
                          ObjectPointCloud, OracleContactPredictor,
                          contact_map, load_cloud, projection_contact_map,
                          save_cloud)
from .csjo import (CsjoConfig, ObjectiveBreakdown, RefineTrace, adam_step,
                   apply_params, objective, objective_grad, refine)
from .scene import (EvalConfig, Scene, ap_metric, force_closure_check,
                    gen_scene, load_scene, sample_grasp_candidates,
                    sample_surface, save_scene)
from .gradcheck import run_gradcheck
