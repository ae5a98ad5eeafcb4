"""Pseudo-linear inverse kinematics: linearize small rotation corrections around an
initial set of world rotations and solve pose increments, shape and per-joint
translations from 2D vertex correspondences as one weighted linear least-squares
problem.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .are import WorldRotations, estimate_world_rotations, relative_rotations
from .camera import CameraIntrinsics
from .errors import InputError, SolverError
from .model import (ParametricModel, PoseState, SegmentMap, assign_segments,
                    forward_kinematics, regress_joints, rest_mesh)
from .rotations import matrix_to_rotvec, rotvec_to_matrix

DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class Layout:
    """Unknown vector: [3K rotation increments | S shape | 3K joint translations]."""
    num_joints: int
    num_shapes: int

    @property
    def size(self):
        return 6 * self.num_joints + self.num_shapes

    def delta(self, joint, axis=0):
        return 3 * joint + axis

    def shape(self, index=0):
        return 3 * self.num_joints + index

    def translation(self, joint, axis=0):
        return 3 * self.num_joints + self.num_shapes + 3 * joint + axis

    @property
    def delta_block(self):
        return slice(0, 3 * self.num_joints)

    @property
    def shape_block(self):
        return slice(3 * self.num_joints, 3 * self.num_joints + self.num_shapes)

    @property
    def translation_block(self):
        return slice(3 * self.num_joints + self.num_shapes, self.size)


@dataclass(frozen=True)
class LinearConstraint:
    """Soft linear row ``weight * (coefficients . x) = weight * rhs``."""
    coefficients: dict
    rhs: float
    weight: float = 1.0

    def __post_init__(self):
        if not any(v != 0 for v in self.coefficients.values()):
            raise InputError("constraint needs at least one nonzero coefficient")
        if not self.weight >= 0:
            raise InputError(f"constraint weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class SolverConfig:
    omega_beta: float = 0.1
    omega_theta: float = 0.0
    iterations: int = 1
    extra_constraints: Sequence[LinearConstraint] = ()
    irls: bool = False

    def __post_init__(self):
        if not self.omega_beta >= 0:
            raise InputError(f"omega_beta must be >= 0, got {self.omega_beta}")
        if not self.omega_theta >= 0:
            raise InputError(f"omega_theta must be >= 0, got {self.omega_theta}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InputError(f"iterations must be a positive integer, got {self.iterations}")


@dataclass(frozen=True, eq=False)
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    layout: Layout
    data_rows: int
    constraint_rows: int

    @property
    def shape(self):
        return self.matrix.shape


class Solution(NamedTuple):
    x: np.ndarray
    residual: float
    rank: int
    rank_deficient: bool
    condition: float


@dataclass(eq=False)
class FitResult:
    pose: PoseState
    shape: np.ndarray
    global_translation: np.ndarray
    delta_angles: np.ndarray
    world_rotations: np.ndarray
    joint_translations: np.ndarray
    per_pass_residuals: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    # earlier passes' results, oldest first (not serialized)
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "pose": matrix_to_rotvec(self.pose.relative_rotations).tolist(),
            "shape": self.shape.tolist(),
            "global_translation": self.global_translation.tolist(),
            "delta_angles": self.delta_angles.tolist(),
            "per_pass_residuals": list(self.per_pass_residuals),
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }


def _jsonable(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def constraint_from_dict(row: dict, layout: Layout) -> LinearConstraint:
    try:
        block = row["block"]
        rhs = float(row["rhs"])
        weight = float(row.get("weight", 1.0))
        if block == "shape":
            index = int(row.get("index", row.get("axis")))
            if not 0 <= index < layout.num_shapes:
                raise InputError(f"shape index {index} out of range")
            col = layout.shape(index)
        elif block in ("translation", "delta"):
            joint, axis = int(row["joint"]), int(row["axis"])
            if not 0 <= joint < layout.num_joints or axis not in (0, 1, 2):
                raise InputError(f"joint/axis ({joint}, {axis}) out of range")
            col = layout.translation(joint, axis) if block == "translation" else layout.delta(joint, axis)
        else:
            raise InputError(f"unknown constraint block '{block}'")
    except (KeyError, TypeError) as exc:
        raise InputError(f"constraint row {row!r}: missing or invalid field {exc}") from None
    return LinearConstraint({col: 1.0}, rhs, weight)


def load_constraints(path, layout: Layout):
    with open(path) as fh:
        try:
            rows = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(rows, list):
        raise InputError("constraints file must hold a JSON list")
    return [constraint_from_dict(r, layout) for r in rows]


def _check_observation(model, segmap, uv, confidences):
    n = model.num_vertices
    uv = np.asarray(uv, dtype=np.float64)
    if uv.shape != (n, 2):
        raise InputError(f"uv: expected ({n}, 2), got {uv.shape}")
    conf = np.ones(n) if confidences is None else np.asarray(confidences, dtype=np.float64)
    if conf.shape != (n,):
        raise InputError(f"confidences: expected {n} values, got {conf.shape}")
    if not (np.all(np.isfinite(uv)) and np.all(np.isfinite(conf))):
        raise InputError("observation has non-finite entries")
    if np.any(conf < 0):
        raise InputError("confidences must be non-negative")
    for k, idx in enumerate(segmap.vertices_of_segment):
        if len(idx) and not np.any(conf[idx] > 0):
            raise InputError(f"segment {k}: all confidences are zero")
    return uv, conf


def assemble_system(model: ParametricModel, segmap: SegmentMap, world_init, uv, confidences,
                    cam: CameraIntrinsics, config: SolverConfig = SolverConfig(),
                    row_scale=None) -> LinearSystem:
    uv, conf = _check_observation(model, segmap, uv, confidences)
    rots = world_init.rotations if isinstance(world_init, WorldRotations) else np.asarray(world_init)
    if rots.shape != (model.num_joints, 3, 3) or not np.all(np.isfinite(rots)):
        raise InputError(f"world rotations: expected finite ({model.num_joints}, 3, 3)")
    if row_scale is not None:
        conf = conf * row_scale
    layout = Layout(model.num_joints, model.num_shapes)
    mat, rhs = _kernels.dlt_rows(
        np.ascontiguousarray(model.template), np.ascontiguousarray(model.shape_basis),
        segmap.segment_of_vertex, np.ascontiguousarray(rots, dtype=np.float64),
        uv, conf, cam.fx, cam.fy, cam.px, cam.py)

    extra_rows, extra_rhs = [], []
    if config.omega_beta > 0 and layout.num_shapes:
        block = np.zeros((layout.num_shapes, layout.size))
        block[:, layout.shape_block] = np.sqrt(config.omega_beta) * np.eye(layout.num_shapes)
        extra_rows.append(block)
        extra_rhs.append(np.zeros(layout.num_shapes))
    if config.omega_theta > 0:
        nd = 3 * layout.num_joints
        block = np.zeros((nd, layout.size))
        block[:, layout.delta_block] = np.sqrt(config.omega_theta) * np.eye(nd)
        extra_rows.append(block)
        extra_rhs.append(np.zeros(nd))
    for con in config.extra_constraints:
        row = np.zeros((1, layout.size))
        for col, val in con.coefficients.items():
            if not 0 <= col < layout.size:
                raise InputError(f"constraint column {col} outside 0..{layout.size - 1}")
            row[0, col] = con.weight * val
        extra_rows.append(row)
        extra_rhs.append(np.array([con.weight * con.rhs]))
    n_con = len(config.extra_constraints)
    if extra_rows:
        mat = np.vstack([mat] + extra_rows)
        rhs = np.concatenate([rhs] + extra_rhs)
    if not (np.all(np.isfinite(mat)) and np.all(np.isfinite(rhs))):
        raise InputError("assembled system has non-finite entries")
    return LinearSystem(mat, rhs, layout, 2 * model.num_vertices, n_con)


def solve_linear(system) -> Solution:
    """Least squares via column-pivoted QR; minimum-norm fallback when rank deficient."""
    if isinstance(system, LinearSystem):
        a, b = system.matrix, system.rhs
    else:
        a, b = system
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or b.shape != (a.shape[0],):
        raise InputError(f"bad system shapes {a.shape}, {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SolverError("system has non-finite entries")
    rows, cols = a.shape
    q, r, perm = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(rows, cols) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.count_nonzero(diag > tol))
    condition = float(diag[0] / diag[-1]) if diag.size == cols and diag[-1] > 0 else float("inf")
    if rank == cols:
        z = scipy.linalg.solve_triangular(r, q.T @ b)
        x = np.empty(cols)
        x[perm] = z
    else:
        rel = tol / diag[0] if diag.size and diag[0] > 0 else None
        x = scipy.linalg.lstsq(a, b, cond=rel, lapack_driver="gelsy")[0]
    resid = float(np.linalg.norm(a @ x - b))
    return Solution(x, resid, rank, rank < cols, condition)


def extract_parameters(solution, world_init, model: ParametricModel,
                       segmap: Optional[SegmentMap] = None) -> FitResult:
    x = solution.x if isinstance(solution, Solution) else np.asarray(solution, dtype=np.float64)
    layout = Layout(model.num_joints, model.num_shapes)
    if x.shape != (layout.size,):
        raise InputError(f"solution has {x.shape} entries, layout needs {layout.size}")
    rots = world_init.rotations if isinstance(world_init, WorldRotations) else np.asarray(world_init)
    angles = x[layout.delta_block].reshape(-1, 3)
    delta = rotvec_to_matrix(angles)
    world = delta @ rots
    rel = relative_rotations(world, model.parents)
    beta = x[layout.shape_block].copy()
    root_joint = regress_joints(model, rest_mesh(model, beta))[0]
    t_root = x[layout.translation(0):layout.translation(0) + 3]
    glob = t_root - (root_joint - world[0] @ root_joint)
    return FitResult(
        pose=PoseState(rel, glob),
        shape=beta,
        global_translation=glob,
        delta_angles=angles,
        world_rotations=world,
        joint_translations=x[layout.translation_block].reshape(-1, 3).copy(),
    )


def _residual_at(system: LinearSystem, result: FitResult) -> float:
    layout = system.layout
    x = np.zeros(layout.size)
    x[layout.shape_block] = result.shape
    x[layout.translation_block] = result.joint_translations.reshape(-1)
    return float(np.linalg.norm(system.matrix @ x - system.rhs))


def pliks_fit(model: ParametricModel, uv, confidences, cam: CameraIntrinsics, init,
              shape_guess=None, config: SolverConfig = SolverConfig(),
              segmap: Optional[SegmentMap] = None) -> FitResult:
    """Full solve. ``init`` is either lifted 3D vertices (N, 3), run through the rotation
    estimator, or initial world rotations (WorldRotations or (K, 3, 3) array).
    """
    segmap = assign_segments(model) if segmap is None else segmap
    diagnostics = {}
    if isinstance(init, WorldRotations):
        world = init
    else:
        init = np.asarray(init, dtype=np.float64)
        if init.shape == (model.num_joints, 3, 3):
            world = WorldRotations(init)
        else:
            world = estimate_world_rotations(model, segmap, init, shape_guess, confidences)
            diagnostics["are_fallback_segments"] = list(world.fallback)

    # Per-pass residual: analytic error of the pass's extracted parameters, i.e. the
    # system re-linearized at the new world rotations evaluated at zero increments.
    residuals, linear_residuals, ranks, conds = [], [], [], []
    history = []
    row_scale = None
    result = None
    system = assemble_system(model, segmap, world, uv, confidences, cam, config)
    for p in range(int(config.iterations)):
        sol = solve_linear(system)
        if result is not None:
            history.append(result)
        result = extract_parameters(sol, world, model, segmap)
        linear_residuals.append(sol.residual)
        ranks.append(sol.rank)
        conds.append(sol.condition)
        world = WorldRotations(result.world_rotations)
        system = assemble_system(model, segmap, world, uv, confidences, cam, config, row_scale)
        residuals.append(_residual_at(system, result))
        if config.irls and p + 1 < config.iterations:
            depth = forward_kinematics(model, result.pose, result.shape).vertices[:, 2]
            depth = np.maximum(depth, 1e-6)
            row_scale = depth.mean() / depth
            system = assemble_system(model, segmap, world, uv, confidences, cam, config, row_scale)

    diverged = any(b > DIVERGENCE_FACTOR * a and b > 1e-12
                   for a, b in zip(residuals, residuals[1:]))
    diagnostics.update({
        "condition": conds[-1],
        "rank": ranks[-1],
        "rank_deficient": ranks[-1] < system.layout.size,
        "rows_used": int(system.shape[0]),
        "unknowns": int(system.layout.size),
        "constraint_count": int(system.constraint_rows),
        "passes": int(config.iterations),
        "diverged": bool(diverged),
        "linear_residuals": linear_residuals,
    })
    result.per_pass_residuals = residuals
    result.diagnostics = diagnostics
    result.history = history
    return result
