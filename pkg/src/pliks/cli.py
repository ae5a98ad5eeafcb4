"""Command-line front end.

Exit codes: 0 success, 1 solver failure, 2 input error, 3 I/O error. Failures print a
one-line JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .camera import (CameraIntrinsics, adjust_intrinsics, camera_from_dict, crop_from_dict,
                     default_intrinsics, lift_to_3d, load_camera, load_crop)
from .errors import InputError, PliksError, SolverError
from .harness import (DEFAULT_ROOT_DEPTH, lift_camera, run_are_only, run_pliks, score)
from .metrics import csv_rows, mean_report
from .model import assign_segments, load_model, save_model
from .solver import Layout, SolverConfig, load_constraints, pliks_fit
from .synth import ModelSpec, ScenarioSpec, focal_sweep, generate_model, sample_scenario, \
    scenario_from_dict

log = logging.getLogger("pliks")

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "PLIKS_THREADS"


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    _write(text, path)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _clean(value):
    """Replace non-finite floats with None so reports stay strict JSON."""
    if isinstance(value, float):
        return value if np.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    return value


def _run_config(args):
    skip = {"func", "out", "threads", "verbose"}  # do not change results
    return _clean({k: v for k, v in sorted(vars(args).items()) if k not in skip})


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} {path}: not valid JSON ({exc})") from None


def _threads(args):
    if args.threads:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ------------------------------------------------------------------ commands

def cmd_gen_model(args):
    spec = ModelSpec(
        num_joints=args.joints, vertices_per_segment=args.verts_per_seg,
        num_shapes=args.shapes, bone_length_range=(args.bone_min, args.bone_max),
        weight_smoothness=args.smoothness, seed=args.seed, scale_mix=args.scale_mix)
    model = generate_model(spec)
    save_model(model, args.out)
    print(f"N={model.num_vertices} K={model.num_joints} S={model.num_shapes}")
    return EXIT_OK


def _scenario_spec(args, seed=None, noise_mm=None):
    return ScenarioSpec(
        pose_angle_range=args.pose_range,
        shape_coeff_range=args.shape_range,
        root_depth_range=(args.depth_min, args.depth_max),
        root_offset_range=(args.offset_x, args.offset_y),
        image_size=(args.width, args.height),
        camera_policy="explicit" if args.focal else args.scenario_camera,
        focal=args.focal,
        out_size=args.out_size,
        noise_3d_mm=args.noise_mm[0] if noise_mm is None else noise_mm,
        noise_px=args.noise_px,
        corrupt_fraction=args.corrupt_fraction,
        seed=args.seed if seed is None else seed,
    )


def cmd_gen_scenario(args):
    model = load_model(args.model)
    scenario = sample_scenario(model, _scenario_spec(args))
    _dump_json(scenario.to_dict(), args.out)
    return EXIT_OK


def _observation(data):
    try:
        uv = np.asarray(data["uv"], dtype=np.float64)
    except KeyError:
        raise InputError("observation: missing field 'uv'") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"observation: field 'uv': {exc}") from None
    if uv.ndim != 1 or uv.size % 2:
        raise InputError("observation: field 'uv' must be a flat list of N*2 numbers")
    uv = uv.reshape(-1, 2)
    out = {"uv": uv}
    for key in ("weights", "depth"):
        if data.get(key) is None:
            out[key] = None
            continue
        try:
            arr = np.asarray(data[key], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise InputError(f"observation: field '{key}': {exc}") from None
        if arr.shape != (len(uv),):
            raise InputError(f"observation: field '{key}' must hold {len(uv)} numbers")
        out[key] = arr
    root = data.get("root_depth")
    try:
        out["root_depth"] = None if root is None else float(root)
    except (TypeError, ValueError):
        raise InputError("observation: field 'root_depth' must be a number") from None
    return out


def cmd_fit(args):
    model = load_model(args.model)
    scenario = None
    if args.scenario:
        data = _read_json(args.scenario, "scenario")
        if "observation" not in data:
            raise InputError("scenario: missing field 'observation'")
        obs = _observation(data["observation"])
        if "ground_truth" in data:
            scenario = scenario_from_dict(model, data)
            cam_full, crop = scenario.camera_full, scenario.crop
            image_size = tuple(scenario.spec.image_size)
        else:
            cam_full = camera_from_dict(data["camera"]) if "camera" in data else None
            crop = crop_from_dict(data["crop"]) if "crop" in data else None
            image_size = tuple(data["image_size"]) if "image_size" in data else None
    elif args.observation:
        obs = _observation(_read_json(args.observation, "observation"))
        cam_full, crop, image_size = None, None, None
    else:
        raise InputError("fit needs --scenario or --observation")
    if args.image_size:
        image_size = tuple(args.image_size)
    if args.crop:
        crop = load_crop(args.crop)
    if args.camera:
        cam_full = load_camera(args.camera, *(image_size or (None, None)))
    elif cam_full is None:
        if image_size is None:
            raise InputError("no camera file: --image-size is required for a camera policy")
        cam_full = default_intrinsics(*image_size, args.camera_policy)
    cam = adjust_intrinsics(cam_full, crop) if crop is not None else cam_full

    n = model.num_vertices
    if len(obs["uv"]) != n:
        raise InputError(f"observation: field 'uv' has {len(obs['uv'])} points, model has {n}")
    root_depth = obs["root_depth"] if obs["root_depth"] is not None else args.root_depth
    depth = obs["depth"] if obs["depth"] is not None else np.zeros(n)
    if args.lift_policy == "solve":
        lift_cam = cam
    elif crop is not None:
        lift_cam = lift_camera(crop.out_size, policy=args.lift_policy)
    else:
        if image_size is None:
            raise InputError("lifting without a crop needs --image-size")
        lift_cam = lift_camera(*image_size, policy=args.lift_policy)
    lifted = lift_to_3d(lift_cam, obs["uv"], depth, root_depth)

    constraints = []
    if args.constraints:
        constraints = load_constraints(args.constraints, Layout(model.num_joints, model.num_shapes))
    config = SolverConfig(args.omega_beta, args.omega_theta, args.iterations, constraints, args.irls)
    segmap = assign_segments(model)
    fit = pliks_fit(model, obs["uv"], obs["weights"], cam, lifted, None, config, segmap)
    out = fit.to_dict()
    out["diagnostics"].update({
        "camera_full": cam_full.to_dict(),
        "camera": cam.to_dict(),
        "assumed_focal": cam_full.fx,
        "lift_camera": lift_cam.to_dict(),
        "root_depth_init": root_depth,
        "depth_provided": obs["depth"] is not None,
    })
    if scenario is not None:
        out["metrics"] = score(model, scenario, fit.pose, fit.shape).to_dict()
    out["config"] = _run_config(args)
    _dump_json(_clean(out), args.out)
    return EXIT_OK


def _bench_case(model, segmap, spec, mode, config):
    try:
        scenario = sample_scenario(model, spec)
        if mode == "are":
            res = run_are_only(model, scenario, segmap)
        else:
            res = run_pliks(model, scenario, config, segmap)
        return res, None
    except PliksError as exc:
        return None, str(exc)


def cmd_bench(args):
    model = load_model(args.model)
    segmap = assign_segments(model)
    mode = "are" if args.are_only else "pliks"
    conditions = [(noise, w) for noise in args.noise_mm for w in args.omega_beta]
    if mode == "are":
        conditions = [(noise, None) for noise in args.noise_mm]
    rows, summaries = [], []
    threads = _threads(args)
    for noise, w in conditions:
        config = SolverConfig(omega_beta=w if w is not None else 0.0,
                              omega_theta=args.omega_theta, iterations=args.iterations,
                              irls=args.irls)
        specs = [_scenario_spec(args, seed=args.seed + i, noise_mm=noise) for i in range(args.num)]

        def job(spec, config=config):
            return _bench_case(model, segmap, spec, mode, config)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(job, specs))
        else:
            results = [job(s) for s in specs]
        good = []
        for i, (res, err) in enumerate(results):
            row = {"scenario_id": args.seed + i, "noise_mm": noise,
                   "omega_beta": "" if w is None else w}
            if res is None:
                row.update({"status": f"failed: {err}"})
            else:
                good.append(res.report)
                row.update(res.report.to_dict())
                row.update({"passes": res.passes, "residual": res.residual, "status": "ok"})
                row.pop("sample_count", None)
            rows.append(row)
        summary = {"mode": mode, "noise_mm": noise, "omega_beta": w,
                   "passes": 0 if mode == "are" else args.iterations,
                   "failures": len(results) - len(good)}
        if good:
            summary["mean"] = mean_report(good).to_dict()
            mean_row = {"scenario_id": "mean", "noise_mm": noise,
                        "omega_beta": "" if w is None else w, "status": "ok",
                        "passes": summary["passes"]}
            mean_row.update(summary["mean"])
            mean_row.pop("sample_count", None)
            rows.append(mean_row)
        summaries.append(summary)
        if good:
            m = summary["mean"]
            log.info("%s noise=%s omega_beta=%s: mpjpe=%.3f pve=%.3f (n=%d)",
                     mode, noise, w, m["mpjpe"], m["pve"], len(good))

    if args.format == "csv":
        header = "# config: " + json.dumps(_run_config(args), sort_keys=True) + "\n"
        _write(header + csv_rows(_clean(rows), ("noise_mm", "omega_beta", "status")), args.out)
    else:
        _dump_json(_clean({"version": 1, "config": _run_config(args),
                           "conditions": summaries, "rows": rows}), args.out)
    return EXIT_OK


def cmd_sweep_focal(args):
    model = load_model(args.model)
    segmap = assign_segments(model)
    if args.grid:
        grid = args.grid
    else:
        grid = np.linspace(args.grid_min, args.grid_max, args.grid_num).tolist()
    config = SolverConfig(args.omega_beta, args.omega_theta, args.iterations)
    sums = np.zeros((len(grid), 2))
    true_focal = None
    for i in range(args.num):
        spec = _scenario_spec(args, seed=args.seed + i)
        for j, (f, scenario, cam) in enumerate(focal_sweep(model, spec, grid)):
            res = run_pliks(model, scenario, config, segmap, assumed_camera=cam)
            sums[j] += (res.report.mpjpe, res.report.pve)
            true_focal = scenario.camera_full.fx
    means = sums / args.num
    rows = [{"focal": float(f), "mpjpe": float(e[0]), "pve": float(e[1])}
            for f, e in zip(grid, means)]
    if args.format == "csv":
        lines = ["# pliks-focal-sweep v1",
                 "# config: " + json.dumps(_run_config(args), sort_keys=True),
                 "focal,mpjpe,pve"]
        lines += [f"{r['focal']!r},{r['mpjpe']!r},{r['pve']!r}" for r in rows]
        _write("\n".join(lines) + "\n", args.out)
    else:
        _dump_json(_clean({"version": 1, "config": _run_config(args), "true_focal": true_focal,
                           "rows": rows}), args.out)
    return EXIT_OK


# -------------------------------------------------------------------- parser

def _add_scenario_flags(p, noise_multi=False):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pose-range", type=float, default=0.5, help="max joint angle, radians")
    p.add_argument("--shape-range", type=float, default=1.0)
    p.add_argument("--depth-min", type=float, default=6.5)
    p.add_argument("--depth-max", type=float, default=7.5)
    p.add_argument("--offset-x", type=float, default=1.0)
    p.add_argument("--offset-y", type=float, default=0.3)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--scenario-camera", choices=("fixed_1000", "diag"), default="diag",
                   help="true full-image camera policy of generated scenes")
    p.add_argument("--focal", type=float, default=None, help="true full-image focal (pixels)")
    p.add_argument("--out-size", type=int, default=224)
    p.add_argument("--noise-mm", type=float, nargs="+" if noise_multi else None,
                   default=[0.0], action="store" if noise_multi else _ListAction)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--corrupt-fraction", type=float, default=0.0)


class _ListAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, [values])


def _add_solver_flags(p, multi_omega=False):
    if multi_omega:
        p.add_argument("--omega-beta", type=float, nargs="+", default=[0.1])
    else:
        p.add_argument("--omega-beta", type=float, default=0.1)
    p.add_argument("--omega-theta", type=float, default=0.0)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--irls", action="store_true", help="reweight rows by inverse depth per pass")


def build_parser():
    parser = argparse.ArgumentParser(prog="pliks", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="write a procedural body model")
    p.add_argument("--joints", type=int, default=24)
    p.add_argument("--verts-per-seg", type=int, default=32)
    p.add_argument("--shapes", type=int, default=10)
    p.add_argument("--bone-min", type=float, default=0.10)
    p.add_argument("--bone-max", type=float, default=0.20)
    p.add_argument("--smoothness", type=float, default=0.3)
    p.add_argument("--scale-mix", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("gen-scenario", help="write one ground-truth scenario")
    p.add_argument("--model", required=True)
    _add_scenario_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("fit", help="fit one observation")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario")
    p.add_argument("--observation")
    p.add_argument("--camera")
    p.add_argument("--crop")
    p.add_argument("--constraints")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--camera-policy", choices=("fixed_1000", "diag"), default="fixed_1000")
    p.add_argument("--lift-policy", choices=("fixed_1000", "diag", "solve"), default="fixed_1000")
    p.add_argument("--root-depth", type=float, default=DEFAULT_ROOT_DEPTH)
    _add_solver_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="batch ground-truth benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--num", type=int, default=100)
    p.add_argument("--are-only", action="store_true")
    _add_scenario_flags(p, noise_multi=True)
    _add_solver_flags(p, multi_omega=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-focal", help="fit error against assumed focal length")
    p.add_argument("--model", required=True)
    p.add_argument("--num", type=int, default=5)
    p.add_argument("--grid", type=float, nargs="+")
    p.add_argument("--grid-min", type=float, default=500.0)
    p.add_argument("--grid-max", type=float, default=5000.0)
    p.add_argument("--grid-num", type=int, default=20)
    _add_scenario_flags(p)
    _add_solver_flags(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep_focal)
    return parser


def _check_paths(args):
    if getattr(args, "num", 1) < 1:
        raise InputError("--num must be >= 1")
    out = getattr(args, "out", None)
    if out in (None, "-"):
        return
    for key in ("model", "scenario", "observation", "camera", "crop", "constraints"):
        src = getattr(args, key, None)
        if key == "model" and args.command == "gen-model":
            continue
        if src and os.path.abspath(src) == os.path.abspath(out):
            raise InputError(f"--out would overwrite --{key} {src}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _check_paths(args)
        return args.func(args)
    except InputError as exc:
        return _fail(EXIT_INPUT, "input_error", exc)
    except SolverError as exc:
        return _fail(EXIT_SOLVER, "solver_error", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io_error", exc)


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
