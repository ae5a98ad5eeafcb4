"""Simplified linear-blend-skinning body model (no pose-dependent blend shapes)."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import InvariantError, ModelFormatError

log = logging.getLogger(__name__)

BLEND_TOL = 1e-6
REGRESSOR_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ParametricModel:
    name: str
    template: np.ndarray          # (N, 3) metres
    shape_basis: np.ndarray       # (S, N, 3) metres per unit coefficient
    blend_weights: np.ndarray     # (K, N)
    joint_regressor: np.ndarray   # (K, N)
    parents: np.ndarray           # (K,), parents[0] == -1
    faces: Optional[np.ndarray] = None

    @property
    def num_vertices(self):
        return self.template.shape[0]

    @property
    def num_joints(self):
        return self.parents.shape[0]

    @property
    def num_shapes(self):
        return self.shape_basis.shape[0]

    def with_shape_basis(self, basis) -> "ParametricModel":
        """Same model with a different shape basis (e.g. a child or gendered basis)."""
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 3 or basis.shape[1:] != self.template.shape:
            raise ModelFormatError(
                f"shape_basis must be (S, {self.num_vertices}, 3), got {basis.shape}")
        return ParametricModel(self.name, self.template, basis, self.blend_weights,
                               self.joint_regressor, self.parents, self.faces)


@dataclass(frozen=True, eq=False)
class SegmentMap:
    segment_of_vertex: np.ndarray
    vertices_of_segment: list = field(repr=False)
    # segments with fewer than 3 vertices cannot carry a rotation estimate
    degenerate: tuple = ()


@dataclass(frozen=True, eq=False)
class PoseState:
    relative_rotations: np.ndarray  # (K, 3, 3)
    root_translation: np.ndarray    # (3,)

    @classmethod
    def identity(cls, num_joints, root_translation=(0.0, 0.0, 0.0)):
        rots = np.repeat(np.eye(3)[None], num_joints, axis=0)
        return cls(rots, np.asarray(root_translation, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class PosedBody:
    vertices: np.ndarray
    world_rotations: np.ndarray
    world_joints: np.ndarray


def validate(model: ParametricModel) -> ParametricModel:
    n, k = model.num_vertices, model.num_joints
    if model.template.shape != (n, 3):
        raise ModelFormatError(f"template: expected (N, 3), got {model.template.shape}")
    if n < k or k < 1:
        raise InvariantError(f"need N >= K >= 1, got N={n}, K={k}")
    if model.shape_basis.ndim != 3 or model.shape_basis.shape[1:] != (n, 3):
        raise ModelFormatError(f"shape_basis: expected (S, {n}, 3), got {model.shape_basis.shape}")
    for label, arr in (("blend_weights", model.blend_weights),
                       ("joint_regressor", model.joint_regressor)):
        if arr.shape != (k, n):
            raise ModelFormatError(f"{label}: expected ({k}, {n}), got {arr.shape}")
    for label, arr in (("template", model.template), ("shape_basis", model.shape_basis),
                       ("blend_weights", model.blend_weights),
                       ("joint_regressor", model.joint_regressor)):
        if not np.all(np.isfinite(arr)):
            raise InvariantError(f"{label}: non-finite entries")

    neg = np.argwhere(model.blend_weights < 0)
    if len(neg):
        j, i = neg[0]
        raise InvariantError(f"blend_weights: negative weight at joint {j}, vertex {i}")
    sums = model.blend_weights.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > BLEND_TOL)
    if len(bad):
        raise InvariantError(
            f"blend_weights: vertex {bad[0]} weights sum to {sums[bad[0]]:.9g}, expected 1")

    neg = np.argwhere(model.joint_regressor < 0)
    if len(neg):
        j, i = neg[0]
        raise InvariantError(f"joint_regressor: negative weight at joint {j}, vertex {i}")
    sums = model.joint_regressor.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > REGRESSOR_TOL)
    if len(bad):
        raise InvariantError(
            f"joint_regressor: joint {bad[0]} row sums to {sums[bad[0]]:.9g}, expected 1")

    _check_tree(model.parents)
    if model.faces is not None:
        faces = model.faces
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ModelFormatError("faces: expected triangle index triples")
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            raise InvariantError("faces: vertex index out of range")
    return model


def _check_tree(parents):
    k = len(parents)
    if parents[0] != -1:
        raise InvariantError(f"parents: joint 0 must be the root (parent -1), got {parents[0]}")
    for j in range(1, k):
        p = parents[j]
        if p < 0 or p >= k:
            raise InvariantError(f"parents: joint {j} has invalid parent {p}")
        if p == j:
            raise InvariantError(f"parents: joint {j} is its own parent")
    # every joint must reach the root
    for j in range(1, k):
        seen, cur = set(), j
        while cur != 0:
            if cur in seen:
                raise InvariantError(f"parents: cycle through joint {j}")
            seen.add(cur)
            cur = parents[cur]


def topological_order(parents):
    """Joint indices ordered so every parent precedes its children."""
    k = len(parents)
    children = [[] for _ in range(k)]
    for j in range(1, k):
        children[parents[j]].append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    return order


# ------------------------------------------------------------------ file I/O

def model_to_dict(model: ParametricModel) -> dict:
    out = {
        "name": model.name,
        "num_vertices": int(model.num_vertices),
        "num_joints": int(model.num_joints),
        "num_shapes": int(model.num_shapes),
        "template": model.template.reshape(-1).tolist(),
        "shape_basis": model.shape_basis.reshape(-1).tolist(),
        "blend_weights": model.blend_weights.reshape(-1).tolist(),
        "joint_regressor": model.joint_regressor.reshape(-1).tolist(),
        "parents": [int(p) for p in model.parents],
    }
    if model.faces is not None:
        out["faces"] = model.faces.reshape(-1).tolist()
    return out


def model_from_dict(data: dict) -> ParametricModel:
    if not isinstance(data, dict):
        raise ModelFormatError("model file must hold a JSON object")
    required = ("name", "num_vertices", "num_joints", "num_shapes", "template",
                "shape_basis", "blend_weights", "joint_regressor", "parents")
    for key in required:
        if key not in data:
            raise ModelFormatError(f"missing field '{key}'")
    try:
        n, k, s = int(data["num_vertices"]), int(data["num_joints"]), int(data["num_shapes"])
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"counts must be integers: {exc}") from None
    expected = {
        "template": n * 3,
        "shape_basis": s * n * 3,
        "blend_weights": k * n,
        "joint_regressor": k * n,
        "parents": k,
    }
    arrays = {}
    for key, size in expected.items():
        try:
            arr = np.asarray(data[key], dtype=np.int64 if key == "parents" else np.float64)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"field '{key}': {exc}") from None
        if arr.ndim != 1 or arr.size != size:
            raise ModelFormatError(
                f"field '{key}': expected {size} values, got {arr.size}")
        arrays[key] = arr
    faces = None
    if data.get("faces") is not None:
        faces = np.asarray(data["faces"], dtype=np.int64)
        if faces.ndim != 1 or faces.size % 3:
            raise ModelFormatError("field 'faces': length must be a multiple of 3")
        faces = faces.reshape(-1, 3)
    model = ParametricModel(
        name=str(data["name"]),
        template=arrays["template"].reshape(n, 3),
        shape_basis=arrays["shape_basis"].reshape(s, n, 3),
        blend_weights=arrays["blend_weights"].reshape(k, n),
        joint_regressor=arrays["joint_regressor"].reshape(k, n),
        parents=arrays["parents"],
        faces=faces,
    )
    return validate(model)


def load_model(path) -> ParametricModel:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    model = model_from_dict(data)
    segs = assign_segments(model)
    if segs.degenerate:
        log.warning("model %s: segments with < 3 vertices: %s", model.name, list(segs.degenerate))
    return model


def save_model(model: ParametricModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


# ---------------------------------------------------------------- evaluation

def assign_segments(model: ParametricModel) -> SegmentMap:
    # np.argmax returns the first maximum, i.e. the lowest joint index on ties
    seg = np.argmax(model.blend_weights, axis=0).astype(np.int64)
    members = [np.flatnonzero(seg == k) for k in range(model.num_joints)]
    degenerate = tuple(k for k, m in enumerate(members) if len(m) < 3)
    return SegmentMap(seg, members, degenerate)


def _coeffs(model, shape):
    beta = np.zeros(model.num_shapes) if shape is None else np.asarray(shape, dtype=np.float64)
    if beta.shape != (model.num_shapes,):
        raise ModelFormatError(
            f"shape coefficients: expected {model.num_shapes} values, got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise InvariantError("shape coefficients must be finite")
    return beta


def rest_mesh(model: ParametricModel, shape=None) -> np.ndarray:
    beta = _coeffs(model, shape)
    if not beta.size:
        return model.template.copy()
    return model.template + np.tensordot(beta, model.shape_basis, axes=1)


def regress_joints(model: ParametricModel, vertices, regressor=None) -> np.ndarray:
    """Joints as convex combinations of vertices; ``regressor`` swaps in another joint set."""
    reg = model.joint_regressor if regressor is None else np.asarray(regressor, dtype=np.float64)
    vertices = np.asarray(vertices, dtype=np.float64)
    if reg.ndim != 2 or reg.shape[1] != vertices.shape[0] or vertices.shape[-1] != 3:
        raise ModelFormatError(
            f"regressor {reg.shape} does not match vertices {vertices.shape}")
    return reg @ vertices


def world_from_relative(relative, parents):
    """Compose relative rotations down the tree into world rotations."""
    world = np.empty_like(relative)
    for j in topological_order(parents):
        p = parents[j]
        world[j] = relative[j] if p < 0 else world[p] @ relative[j]
    return world


def forward_kinematics(model: ParametricModel, pose: PoseState, shape=None) -> PosedBody:
    rest = rest_mesh(model, shape)
    joints = regress_joints(model, rest)
    parents = model.parents
    rel = np.asarray(pose.relative_rotations, dtype=np.float64)
    world = np.empty_like(rel)
    world_joints = np.empty_like(joints)
    for j in topological_order(parents):
        p = parents[j]
        if p < 0:
            world[j] = rel[j]
            world_joints[j] = joints[j] + pose.root_translation
        else:
            world[j] = world[p] @ rel[j]
            world_joints[j] = world_joints[p] + world[p] @ (joints[j] - joints[p])
    verts = _kernels.skin(rest, model.blend_weights, world, world_joints, joints)
    return PosedBody(verts, world, world_joints)
