"""Run the rotation estimator / solver on generated scenarios and score them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .are import estimate_world_rotations, relative_rotations
from .camera import CameraIntrinsics, adjust_intrinsics, default_intrinsics, lift_to_3d
from .metrics import MetricReport, evaluate
from .model import (ParametricModel, PoseState, SegmentMap, assign_segments,
                    forward_kinematics, regress_joints)
from .solver import FitResult, SolverConfig, pliks_fit
from .synth import Scenario

DEFAULT_ROOT_DEPTH = 7.0


def lift_camera(width, height=None, policy="fixed_1000"):
    """Camera used to lift network-frame (u, v, d) predictions to 3D."""
    return default_intrinsics(width, width if height is None else height, policy)


@dataclass(eq=False)
class CaseResult:
    report: MetricReport
    passes: int
    residual: float
    fit: Optional[FitResult] = None
    per_pass_reports: tuple = ()


def lifted_vertices(scenario: Scenario, root_depth=DEFAULT_ROOT_DEPTH, lift_policy="fixed_1000",
                    solve_camera=None):
    """``lift_policy`` "solve" lifts with the solve camera instead of a default one."""
    if lift_policy == "solve":
        cam = scenario.camera if solve_camera is None else solve_camera
    else:
        cam = lift_camera(scenario.crop.out_size, policy=lift_policy)
    return lift_to_3d(cam, scenario.uv, scenario.depth, root_depth)


def score(model: ParametricModel, scenario: Scenario, pose: PoseState, shape,
          regressor=None) -> MetricReport:
    body = forward_kinematics(model, pose, shape)
    pred_j = regress_joints(model, body.vertices, regressor)
    gt_j = regress_joints(model, scenario.body.vertices, regressor)
    return evaluate(body.vertices, scenario.body.vertices, pred_j, gt_j)


def run_are_only(model, scenario, segmap=None, root_depth=DEFAULT_ROOT_DEPTH,
                 lift_policy="fixed_1000", regressor=None) -> CaseResult:
    """Rotation estimator alone, fed the true shape (as in a ground-truth ablation)."""
    segmap = assign_segments(model) if segmap is None else segmap
    lifted = lifted_vertices(scenario, root_depth, lift_policy)
    world = estimate_world_rotations(model, segmap, lifted, scenario.shape, scenario.confidences)
    rel = relative_rotations(world, model.parents)
    rest_root = regress_joints(model, forward_kinematics(
        model, PoseState.identity(model.num_joints), scenario.shape).vertices)[0]
    lifted_root = regress_joints(model, lifted)[0]
    pose = PoseState(rel, lifted_root - rest_root)
    return CaseResult(score(model, scenario, pose, scenario.shape, regressor), 0, float("nan"))


def run_pliks(model, scenario, config: SolverConfig, segmap=None, assumed_camera=None,
              root_depth=DEFAULT_ROOT_DEPTH, lift_policy="fixed_1000", regressor=None,
              score_each_pass=False) -> CaseResult:
    """Solver on a scenario. ``assumed_camera`` (full-image) replaces the true one."""
    segmap = assign_segments(model) if segmap is None else segmap
    cam_full = scenario.camera_full if assumed_camera is None else assumed_camera
    cam = adjust_intrinsics(cam_full, scenario.crop)
    lifted = lifted_vertices(scenario, root_depth, lift_policy, cam)
    fit = pliks_fit(model, scenario.uv, scenario.confidences, cam, lifted, None, config, segmap)
    per_pass = ()
    if score_each_pass:
        per_pass = tuple(score(model, scenario, f.pose, f.shape, regressor)
                         for f in fit.history + [fit])
    report = score(model, scenario, fit.pose, fit.shape, regressor)
    return CaseResult(report, config.iterations, fit.per_pass_residuals[-1], fit, per_pass)
