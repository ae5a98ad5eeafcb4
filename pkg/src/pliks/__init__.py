"""Analytic body-model fitting from 2D vertex correspondences."""

__version__ = "0.1.0"

from .are import WorldRotations, estimate_world_rotations, kabsch, relative_rotations
from .camera import (CameraIntrinsics, CropBox, adjust_intrinsics, default_intrinsics,
                     lift_to_3d, project)
from .errors import (CameraError, DegenerateError, InputError, InvariantError,
                     ModelFormatError, PliksError, SolverError)
from .model import (ParametricModel, PosedBody, PoseState, SegmentMap, assign_segments,
                    forward_kinematics, load_model, regress_joints, rest_mesh, save_model)
from .solver import (FitResult, Layout, LinearConstraint, LinearSystem, SolverConfig,
                     assemble_system, extract_parameters, pliks_fit, solve_linear)
