"""Time the numba and numpy backends of the hot kernels, plus a full fit.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 50 --joints 24 48 --output bench.json
"""
import argparse
import json
import time

import numpy as np

from pliks import _kernels
from pliks.harness import run_pliks
from pliks.model import assign_segments, regress_joints, rest_mesh
from pliks.rotations import random_rotations
from pliks.solver import SolverConfig
from pliks.synth import ModelSpec, ScenarioSpec, generate_model, sample_scenario


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def bench_model(k, repeat, rng):
    model = generate_model(ModelSpec(num_joints=k))
    seg = assign_segments(model).segment_of_vertex
    rest = rest_mesh(model)
    joints = regress_joints(model, rest)
    rots = random_rotations(rng, k, 0.5)
    uv = rng.uniform(0, 224, size=(model.num_vertices, 2))
    conf = np.ones(model.num_vertices)
    skin_args = (rest, model.blend_weights, rots, joints + 0.01, joints)
    dlt_args = (model.template, model.shape_basis, seg, rots, uv, conf, 1000.0, 1000.0, 112.0, 112.0)

    if _kernels.NUMBA_AVAILABLE:
        t0 = time.perf_counter()
        _kernels.skin_numba(*skin_args)
        _kernels.dlt_rows_numba(*dlt_args)
        print(f"  first numba call (compile or cache load): {time.perf_counter() - t0:.2f} s")

    out = {"joints": k, "vertices": model.num_vertices}
    for name, args in (("skin", skin_args), ("dlt_rows", dlt_args)):
        for backend in ("numpy", "numba"):
            if backend == "numba" and not _kernels.NUMBA_AVAILABLE:
                continue
            fn = getattr(_kernels, f"{name}_{backend}")
            best, med = best_of(lambda: fn(*args), repeat)
            out[f"{name}_{backend}_ms"] = best * 1e3
            print(f"  {name:9s} {backend:6s} best {best * 1e3:8.3f} ms  median {med * 1e3:8.3f} ms")
        if f"{name}_numba_ms" in out:
            speed = out[f"{name}_numpy_ms"] / out[f"{name}_numba_ms"]
            out[f"{name}_speedup"] = speed
            print(f"  {name:9s} speedup {speed:.1f}x")

    # end to end: one two-pass fit through whichever backend is active
    segmap = assign_segments(model)
    sc = sample_scenario(model, ScenarioSpec(seed=0))
    cfg = SolverConfig(omega_beta=0.0, iterations=2)
    run_pliks(model, sc, cfg, segmap)
    best, med = best_of(lambda: run_pliks(model, sc, cfg, segmap), max(3, repeat // 5))
    out["fit_ms"] = best * 1e3
    print(f"  two-pass fit ({_kernels.BACKEND}) best {best * 1e3:.1f} ms")
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--joints", type=int, nargs="+", default=[24])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"active backend: {_kernels.BACKEND} (numba available: {_kernels.NUMBA_AVAILABLE})")
    results = []
    for k in args.joints:
        print(f"K={k}")
        results.append(bench_model(k, args.repeat, rng))
    if args.output:
        with open(args.output, "w") as fh:
            json.dump({"backend": _kernels.BACKEND, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
