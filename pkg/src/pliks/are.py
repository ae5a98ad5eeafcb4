"""Approximate rotation estimator: per-segment weighted Kabsch on a lifted mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError
from .model import ParametricModel, SegmentMap, rest_mesh, topological_order

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WorldRotations:
    rotations: np.ndarray            # (K, 3, 3)
    fallback: tuple = ()             # segments that inherited their parent's rotation


def kabsch(src, dst, weights=None):
    """Proper rotation R minimizing sum_i w_i |dst_i - d_bar - R (src_i - s_bar)|^2."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise InputError(f"kabsch: point sets must both be (M, 3), got {src.shape} and {dst.shape}")
    m = src.shape[0]
    if m < 3:
        raise DegenerateError(f"need at least 3 correspondences, got {m}")
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0 or np.any(w < 0):
        raise DegenerateError("weights must be non-negative with a positive sum")
    s_bar = w @ src / total
    d_bar = w @ dst / total
    cov = (src - s_bar).T @ ((dst - d_bar) * w[:, None])
    u, sing, vt = np.linalg.svd(cov)
    # the source spread sets the scale, so a collapsed target also counts as degenerate
    ref = max(sing[0], float(w @ np.sum((src - s_bar) ** 2, axis=1)))
    if not sing[0] > 0 or sing[1] <= RANK_TOL * ref:
        raise DegenerateError("covariance rank < 2, rotation is underdetermined")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def estimate_world_rotations(model: ParametricModel, segmap: SegmentMap, predicted_vertices,
                             shape_guess=None, confidences=None) -> WorldRotations:
    """Kabsch every segment from the (shaped) rest mesh onto ``predicted_vertices``.

    Weights are confidence times the vertex's own-segment blend weight. A segment whose
    covariance is rank deficient takes its parent's rotation (root: identity) and is
    listed in ``fallback``.
    """
    pred = np.asarray(predicted_vertices, dtype=np.float64)
    rest = rest_mesh(model, shape_guess)
    if pred.shape != rest.shape:
        raise InputError(f"predicted vertices {pred.shape} do not match model {rest.shape}")
    conf = np.ones(model.num_vertices) if confidences is None else np.asarray(confidences, float)
    k_count = model.num_joints
    rots = np.empty((k_count, 3, 3))
    fallback = []
    for k in topological_order(model.parents):
        idx = segmap.vertices_of_segment[k]
        w = conf[idx] * model.blend_weights[k, idx]
        keep = w > 0
        if keep.sum() < 3:
            raise DegenerateError(
                f"only {int(keep.sum())} vertices with positive weight", segment=k)
        try:
            rots[k] = kabsch(rest[idx][keep], pred[idx][keep], w[keep])
        except DegenerateError:
            p = model.parents[k]
            rots[k] = np.eye(3) if p < 0 else rots[p]
            fallback.append(k)
    return WorldRotations(rots, tuple(sorted(fallback)))


def relative_rotations(world, parents) -> np.ndarray:
    rots = world.rotations if isinstance(world, WorldRotations) else np.asarray(world)
    rel = np.empty_like(rots)
    for k in range(len(parents)):
        p = parents[k]
        rel[k] = rots[k] if p < 0 else rots[p].T @ rots[k]
    return rel
