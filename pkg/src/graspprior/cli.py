"""Command-line pipeline driver.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.
Every command writes a manifest (resolved configuration) before its outputs
so that partial runs can be diagnosed and reruns reproduced bitwise.
"""
import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .contact_map import AnalyticScorePredictor, OracleContactPredictor
from .csjo import CsjoConfig, RefinementFailedError, refine
from .gripper import (DegenerateContactError, DegenerateNormalError, GraspPose,
                      GripperSpec, InvalidGraspError, load_grasps, save_grasps)
from .gradcheck import run_gradcheck
from .pcr import PcrConfig, ZeroWeightError, pcr_value_and_grad, weighted_batch
from .sdf import GridFormatError
from .scene import (EvalConfig, NoCandidatesError, SceneTooDenseError,
                    ap_metric, bake_object_grid, gen_scene, load_scene,
                    sample_grasp_candidates, save_scene)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (DegenerateContactError, DegenerateNormalError,
                   InvalidGraspError, ZeroWeightError, RefinementFailedError,
                   SceneTooDenseError, NoCandidatesError)


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("GRASPPRIOR_SEED")
    return int(env) if env else 0


def _write_manifest(command, args, out_path, seed=None):
    """Manifest goes to the output directory (or next to the output file)."""
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if seed is not None:
        cfg["seed"] = seed
    doc = {"command": command, "config": cfg, "version": __version__}
    if os.path.isdir(out_path) or not os.path.splitext(out_path)[1]:
        os.makedirs(out_path, exist_ok=True)
        path = os.path.join(out_path, "manifest.json")
    else:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        path = out_path + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=str)
        fh.write("\n")


def _pmap(fn, items, workers):
    """Order-preserving map, optionally threaded; output independent of workers."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _parse_frictions(text):
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(","))


def cmd_gen_scene(args):
    seed = _resolve_seed(args)
    _write_manifest("gen-scene", args, args.out, seed)
    scene = gen_scene(seed, args.objects, resolution=args.res,
                      cloud_points=args.cloud_points, noise_sigma=args.noise)
    save_scene(scene, args.out)
    return EXIT_OK


def cmd_bake_sdf(args):
    _write_manifest("bake-sdf", args, args.out)
    scene = load_scene(args.scene)
    for obj in scene.objects:
        obj.grid = bake_object_grid(obj.shape, args.res)
    save_scene(scene, args.out)
    return EXIT_OK


def cmd_sample_grasps(args):
    seed = _resolve_seed(args)
    _write_manifest("sample-grasps", args, args.out, seed)
    scene = load_scene(args.scene)
    spec = GripperSpec()
    rng = np.random.default_rng(seed)
    seeds = [int(rng.integers(2 ** 32)) for _ in scene.objects]
    grasps = []
    for obj, s in zip(scene.objects, seeds):
        predictor = AnalyticScorePredictor(obj.grid, obj.shape.R, obj.shape.t,
                                           spec, scene.obstacles(), plane_z=0.0)
        grasps.extend(sample_grasp_candidates(obj.cloud, args.per_object, spec,
                                              seed=s, score_predictor=predictor))
    save_grasps(grasps, args.out)
    return EXIT_OK


def cmd_pcr_eval(args):
    _write_manifest("pcr-eval", args, args.out)
    scene = load_scene(args.scene)
    grasps = load_grasps(args.grasps)
    spec = GripperSpec()
    cfg = PcrConfig(theta=args.theta, mu=args.mu, phi=args.phi)

    def one(g):
        obj = scene.object_by_id(g.object_id)
        return pcr_value_and_grad(g, spec, obj.grid, obj.shape.R, obj.shape.t, cfg)

    terms = _pmap(one, grasps, args.workers)
    r_i, _ = weighted_batch([t.value for t in terms],
                            [g.score for g in grasps])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grasp_index", "object_id", "r_a", "r_c", "r_s",
                         "r_weighted", "grad_norm"])
        for i, (g, t) in enumerate(zip(grasps, terms)):
            writer.writerow([i, g.object_id, repr(t.r_a), repr(t.r_c),
                             repr(t.r_s), repr(float(r_i[i])),
                             repr(float(np.linalg.norm(t.grad)))])
    return EXIT_OK


def refine_targets(grasps):
    """Oracle target per grasp: the best-scored grasp on the same object."""
    best = {}
    for g in grasps:
        if g.object_id not in best or g.score > best[g.object_id].score:
            best[g.object_id] = g
    return [best[g.object_id] for g in grasps]


def cmd_refine(args):
    _write_manifest("refine", args, args.out)
    scene = load_scene(args.scene)
    grasps = load_grasps(args.grasps)
    spec = GripperSpec()
    cfg = CsjoConfig(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                     t_max_score=args.t_max, learning_rate=args.lr,
                     iterations=args.iters)
    targets = refine_targets(grasps)

    def one(pair):
        g, target = pair
        obj = scene.object_by_id(g.object_id)
        contact_pred = OracleContactPredictor(target, spec)
        score_pred = AnalyticScorePredictor(obj.grid, obj.shape.R, obj.shape.t,
                                            spec, scene.obstacles(), plane_z=0.0)
        return refine(g, obj.cloud, contact_pred, score_pred, spec, cfg)

    results = _pmap(one, list(zip(grasps, targets)), args.workers)
    extra = []
    refined = []
    for g, (new_g, trace) in zip(grasps, results):
        refined.append(new_g)
        extra.append({
            "j_initial": trace.entries[0][1].j if trace.entries[0][1] else None,
            "j_final": trace.entries[trace.best_index][1].j,
            "iters_used": trace.best_index,
        })
    save_grasps(refined, args.out, extra)
    if args.trace:
        os.makedirs(args.trace, exist_ok=True)
        for i, (_, trace) in enumerate(results):
            with open(os.path.join(args.trace, f"trace_{i}.csv"), "w",
                      newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iter", "j", "j_c", "j_s", "delta_t"])
                for it, (_, bd) in enumerate(trace.entries):
                    if bd is None:
                        writer.writerow([it, "", "", "", ""])
                    else:
                        writer.writerow([it, repr(bd.j), repr(bd.j_c),
                                         repr(bd.j_s), repr(bd.delta_t)])
    return EXIT_OK


def cmd_evaluate(args):
    _write_manifest("evaluate", args, args.out)
    scene = load_scene(args.scene)
    grasps = load_grasps(args.grasps)
    cfg = EvalConfig(frictions=_parse_frictions(args.frictions))
    report = ap_metric(grasps, scene, cfg, GripperSpec())
    report = {"scene": {"file": os.path.basename(args.scene),
                        "seed": scene.seed}, **report}
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def cmd_gradcheck(args):
    seed = _resolve_seed(args)
    report = run_gradcheck(seed, args.cases,
                           corrupt=1.0 if args.corrupt_gradient else 0.0)
    print(json.dumps(report.as_dict(), indent=1))
    return EXIT_OK if report.passed else EXIT_NUMERIC


def build_parser():
    p = argparse.ArgumentParser(prog="graspprior",
                                description="Grasp-geometry pipeline tools")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-scene", help="generate a deterministic synthetic scene")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--objects", type=int, required=True)
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--cloud-points", type=int, default=512)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_scene)

    sp = sub.add_parser("bake-sdf", help="re-bake per-object SDF grids")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--res", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bake_sdf)

    sp = sub.add_parser("sample-grasps", help="sample antipodal grasp candidates")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--per-object", type=int, required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample_grasps)

    sp = sub.add_parser("pcr-eval", help="evaluate regularizer terms per grasp")
    sp.add_argument("--grasps", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--theta", type=float, default=0.02)
    sp.add_argument("--mu", type=float, default=0.005)
    sp.add_argument("--phi", type=float, default=0.1)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_pcr_eval)

    sp = sub.add_parser("refine", help="contact-score joint pose refinement")
    sp.add_argument("--grasps", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--alpha", type=float, default=0.2)
    sp.add_argument("--beta", type=float, default=0.01)
    sp.add_argument("--gamma", type=float, default=5.0)
    sp.add_argument("--t-max", type=float, default=1.0)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", default=None)
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("evaluate", help="object-balanced AP over friction levels")
    sp.add_argument("--grasps", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--frictions", default="0.2:1.2:0.2")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient self-test")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--cases", type=int, default=100)
    sp.add_argument("--corrupt-gradient", action="store_true",
                    help=argparse.SUPPRESS)  # test hook
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GridFormatError as exc:
        print(f"bad grid file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
