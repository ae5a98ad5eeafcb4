"""Procedural test bodies and ground-truth scenarios.

Randomness: every stream is a numpy PCG64 generator whose seed is derived from the
user seed plus string/integer keys through splitmix64, so each channel (pose, shape,
3D noise, pixel noise, ...) can be regenerated on its own.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .camera import (CameraIntrinsics, CropBox, adjust_intrinsics, camera_from_dict,
                     crop_from_dict, default_intrinsics, project)
from .errors import InputError, SolverError
from .model import ParametricModel, PoseState, PosedBody, forward_kinematics, validate
from .rotations import rotvec_to_matrix

MASK64 = (1 << 64) - 1
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    state = splitmix64(int(seed) & MASK64)
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(key.encode(), "little") & MASK64
        state = splitmix64(state ^ (int(key) & MASK64))
    return state


def rng_for(seed, *keys):
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


# ------------------------------------------------------------------- models

@dataclass(frozen=True)
class ModelSpec:
    num_joints: int = 24
    vertices_per_segment: int = 32
    num_shapes: int = 10
    bone_length_range: Tuple[float, float] = (0.10, 0.20)
    weight_smoothness: float = 0.3
    seed: int = 0
    radius_range: Tuple[float, float] = (0.03, 0.07)
    # share of a pure scale-about-root field mixed into the first shape direction
    scale_mix: float = 0.5

    def validate(self):
        if self.num_joints < 1:
            raise InputError("num_joints must be >= 1")
        if self.vertices_per_segment < 3:
            raise InputError("vertices_per_segment must be >= 3")
        if self.num_shapes < 0:
            raise InputError("num_shapes must be >= 0")
        lo, hi = self.bone_length_range
        if not 0 < lo <= hi:
            raise InputError(f"bone lengths must be positive and ordered, got {self.bone_length_range}")
        rlo, rhi = self.radius_range
        if not 0 < rlo <= rhi:
            raise InputError(f"radius range must be positive and ordered, got {self.radius_range}")
        if not 0.0 <= self.weight_smoothness <= 1.0:
            raise InputError("weight_smoothness must lie in [0, 1]")
        if not 0.0 <= self.scale_mix <= 1.0:
            raise InputError("scale_mix must lie in [0, 1]")


def _skeleton(spec, rng):
    """Parents and rest joint positions. Up is -y, the body faces -z."""
    k_count = spec.num_joints
    lengths = rng.uniform(*spec.bone_length_range, size=max(k_count - 1, 1))
    parents = [-1]
    joints = [np.zeros(3)]

    def grow(parent, direction, count, first_offset=None):
        made = []
        cur = parent
        for i in range(count):
            d = np.asarray(direction, float) + rng.normal(scale=0.12, size=3)
            d /= np.linalg.norm(d)
            step = lengths[len(joints) - 1] * d
            if i == 0 and first_offset is not None:
                step = np.asarray(first_offset, float)
            parents.append(cur)
            joints.append(joints[cur] + step)
            cur = len(joints) - 1
            made.append(cur)
        return made

    if k_count < 5:
        grow(0, (0, -1, 0), k_count - 1)
    else:
        # spine, left leg, right leg, left arm, right arm; round-robin share
        counts = [0] * 5
        for i in range(k_count - 1):
            counts[i % 5] += 1
        spine = grow(0, (0, -1, 0), counts[0])
        grow(0, (0, 1, 0), counts[1], first_offset=(0.09, 0.06, 0.0))
        grow(0, (0, 1, 0), counts[2], first_offset=(-0.09, 0.06, 0.0))
        chest = spine[max(len(spine) - 2, 0)]
        grow(chest, (1, 0, 0), counts[3], first_offset=(0.12, 0.0, 0.0))
        grow(chest, (-1, 0, 0), counts[4], first_offset=(-0.12, 0.0, 0.0))
    return np.asarray(parents, dtype=np.int64), np.asarray(joints)


def _perpendicular_frame(axis):
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    n1 = np.cross(axis, helper)
    n1 /= np.linalg.norm(n1)
    return n1, np.cross(axis, n1)


def generate_model(spec: ModelSpec = ModelSpec()) -> ParametricModel:
    spec.validate()
    rng = rng_for(spec.seed, "model")
    parents, joints = _skeleton(spec, rng)
    k_count = len(parents)
    children = [[] for _ in range(k_count)]
    for j in range(1, k_count):
        children[parents[j]].append(j)

    v = spec.vertices_per_segment
    n = k_count * v
    verts = np.empty((n, 3))
    radial = np.empty((n, 3))
    weights = np.zeros((k_count, n))
    s = spec.weight_smoothness
    for k in range(k_count):
        if children[k]:
            end = joints[children[k][0]]
        elif parents[k] >= 0:
            back = joints[k] - joints[parents[k]]
            end = joints[k] + 0.5 * back
        else:
            end = joints[k] + np.array([0.0, -0.3, 0.0])
        bone = end - joints[k]
        n1, n2 = _perpendicular_frame(bone)
        radius = rng.uniform(*spec.radius_range)
        phase = rng.uniform(0, 2 * np.pi)
        for i in range(v):
            t = (i + 0.5) / v
            ang = phase + i * GOLDEN_ANGLE
            r = radius * (1.0 + 0.2 * rng.uniform(-1, 1))
            off = r * (math.cos(ang) * n1 + math.sin(ang) * n2)
            idx = k * v + i
            verts[idx] = joints[k] + t * bone + off
            radial[idx] = off
            near_parent = 0.45 * s * max(0.0, 1.0 - 2.0 * t) ** 2 if parents[k] >= 0 else 0.0
            near_child = 0.45 * s * max(0.0, 2.0 * t - 1.0) ** 2 if children[k] else 0.0
            weights[k, idx] = 1.0 - near_parent - near_child
            if near_parent:
                weights[parents[k], idx] += near_parent
            if near_child:
                weights[children[k][0], idx] += near_child

    # joint regressor: uniform average of the vertices nearest each designed joint
    m = min(8, n)
    regressor = np.zeros((k_count, n))
    for k in range(k_count):
        dist = np.linalg.norm(verts - joints[k], axis=1)
        nearest = np.argsort(dist, kind="stable")[:m]
        regressor[k, nearest] = 1.0 / m

    basis = _shape_basis(spec, rng, verts, radial, joints)
    model = ParametricModel(
        name=f"synth-k{k_count}-v{v}-s{spec.num_shapes}-seed{spec.seed}",
        template=verts,
        shape_basis=basis,
        blend_weights=weights,
        joint_regressor=regressor,
        parents=parents,
    )
    return validate(model)


def _shape_basis(spec, rng, verts, radial, joints):
    s = spec.num_shapes
    n = verts.shape[0]
    if s == 0:
        return np.zeros((0, n, 3))
    p = verts - joints[0]
    seg = np.repeat(np.arange(len(joints)), spec.vertices_per_segment)
    feats = np.column_stack([
        p, p ** 2, p[:, [0]] * p[:, [1]], p[:, [1]] * p[:, [2]], p[:, [0]] * p[:, [2]],
        np.sin(3.0 * p[:, 1]), np.cos(3.0 * p[:, 1]), np.sin(4.0 * p[:, 0]),
    ])
    raw = np.empty((s, n, 3))
    for c in range(s):
        mix = rng.normal(size=(feats.shape[1], 3))
        girth = rng.normal(scale=2.0, size=len(joints))[seg]
        raw[c] = feats @ mix + girth[:, None] * radial * 10.0
    flat = raw.reshape(s, -1)
    flat /= np.linalg.norm(flat, axis=1, keepdims=True)
    scale_dir = (p / np.linalg.norm(p)).reshape(-1)
    a = spec.scale_mix
    flat[0] = a * scale_dir + (1.0 - a) * flat[0]
    q, _ = np.linalg.qr(flat.T)
    q = q.T
    # fix QR sign ambiguity so component 0 grows the body
    signs = np.sign(np.sum(q * flat, axis=1))
    signs[signs == 0] = 1.0
    q *= signs[:, None]
    rms = 0.03 / (1.0 + 0.5 * np.arange(s))
    return (q * (rms * math.sqrt(n))[:, None]).reshape(s, n, 3)


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class ScenarioSpec:
    pose_angle_range: float = 0.5              # radians, per-joint rotation angle bound
    shape_coeff_range: float = 1.0
    root_depth_range: Tuple[float, float] = (6.5, 7.5)
    root_offset_range: Tuple[float, float] = (1.0, 0.3)  # |x|, |y| bounds, metres
    image_size: Tuple[int, int] = (1280, 720)
    camera_policy: str = "diag"
    focal: Optional[float] = None              # explicit full-image focal, pixels
    out_size: int = 224
    crop_margin: float = 1.2
    noise_3d_mm: float = 0.0
    noise_px: float = 0.0
    corrupt_fraction: float = 0.0
    corrupt_px: float = 10.0
    seed: int = 0
    max_resample: int = 20

    def validate(self):
        lo, hi = self.root_depth_range
        if not lo <= hi:
            raise InputError(f"root_depth_range not ordered: {self.root_depth_range}")
        if min(self.pose_angle_range, self.shape_coeff_range, *self.root_offset_range) < 0:
            raise InputError("ranges must be non-negative")
        if self.noise_3d_mm < 0 or self.noise_px < 0 or self.corrupt_px < 0:
            raise InputError("noise magnitudes must be >= 0")
        if not 0 <= self.corrupt_fraction <= 1:
            raise InputError("corrupt_fraction must lie in [0, 1]")
        if self.camera_policy == "explicit" and not (self.focal and self.focal > 0):
            raise InputError("explicit camera policy needs a positive focal")

    def full_camera(self) -> CameraIntrinsics:
        w, h = self.image_size
        if self.camera_policy == "explicit":
            return CameraIntrinsics(self.focal, self.focal, w / 2.0, h / 2.0)
        return default_intrinsics(w, h, self.camera_policy)


@dataclass(eq=False)
class Scenario:
    spec: ScenarioSpec
    pose_rotvecs: np.ndarray      # (K, 3) ground-truth relative rotations
    root_translation: np.ndarray
    shape: np.ndarray
    body: PosedBody               # noise-free ground truth
    camera_full: CameraIntrinsics
    crop: CropBox
    uv: np.ndarray                # network-frame pixels
    confidences: np.ndarray
    depth: np.ndarray             # per-vertex depth relative to the root joint
    root_depth: float             # true root joint depth (kept out of the observation)

    @property
    def pose(self):
        return PoseState(rotvec_to_matrix(self.pose_rotvecs), self.root_translation)

    @property
    def camera(self) -> CameraIntrinsics:
        return adjust_intrinsics(self.camera_full, self.crop)

    def observation_dict(self):
        return {"uv": self.uv.reshape(-1).tolist(), "weights": self.confidences.tolist(),
                "depth": self.depth.tolist()}

    def to_dict(self):
        spec = asdict(self.spec)
        return {
            "version": 1,
            "scenario_spec": spec,
            "image_size": list(self.spec.image_size),
            "camera": self.camera_full.to_dict(),
            "crop": self.crop.to_dict(),
            "observation": self.observation_dict(),
            "ground_truth": {
                "pose": self.pose_rotvecs.tolist(),
                "root_translation": self.root_translation.tolist(),
                "shape": self.shape.tolist(),
                "root_depth": self.root_depth,
            },
        }


def _ball(rng, count, radius):
    direction = rng.normal(size=(count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=count) ** (1.0 / 3.0)
    return direction * r[:, None]


def sample_scenario(model: ParametricModel, spec: ScenarioSpec = ScenarioSpec()) -> Scenario:
    spec.validate()
    k_count, n = model.num_joints, model.num_vertices
    cam_full = spec.full_camera()
    for attempt in range(spec.max_resample):
        rng = rng_for(spec.seed, "pose", attempt)
        axes = rng.normal(size=(k_count, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        angles = rng.uniform(0.0, spec.pose_angle_range, size=k_count)
        rotvecs = axes * angles[:, None]
        shape = rng_for(spec.seed, "shape", attempt).uniform(
            -spec.shape_coeff_range, spec.shape_coeff_range, size=model.num_shapes)
        trng = rng_for(spec.seed, "translation", attempt)
        depth = trng.uniform(*spec.root_depth_range)
        ox, oy = spec.root_offset_range
        offset = np.array([trng.uniform(-ox, ox), trng.uniform(-oy, oy), depth])
        # place the root joint (not the model origin) at the sampled point
        rest_root = forward_kinematics(model, PoseState.identity(k_count), shape).world_joints[0]
        root_t = offset - rest_root
        body = forward_kinematics(model, PoseState(rotvec_to_matrix(rotvecs), root_t), shape)
        if np.all(body.vertices[:, 2] > 0.1):
            break
    else:
        raise SolverError(f"no body in front of the camera after {spec.max_resample} draws")

    verts = body.vertices
    if spec.noise_3d_mm > 0:
        verts = verts + _ball(rng_for(spec.seed, "noise3d"), n, spec.noise_3d_mm / 1000.0)
    root_depth = float(body.world_joints[0, 2])
    rel_depth = verts[:, 2] - root_depth

    uv_full = project(cam_full, verts)
    lo, hi = uv_full.min(axis=0), uv_full.max(axis=0)
    centre = (lo + hi) / 2.0
    side = spec.crop_margin * float(np.max(hi - lo))
    crop = CropBox(centre[0] - side / 2.0, centre[1] - side / 2.0, side, side, spec.out_size)
    uv = crop.apply(uv_full)
    if spec.noise_px > 0:
        uv = uv + rng_for(spec.seed, "noisepx").normal(scale=spec.noise_px, size=uv.shape)
    conf = np.ones(n)
    if spec.corrupt_fraction > 0:
        crng = rng_for(spec.seed, "corrupt")
        hit = crng.uniform(size=n) < spec.corrupt_fraction
        uv[hit] += crng.normal(scale=spec.corrupt_px, size=(int(hit.sum()), 2))
        conf[hit] = 0.1
    return Scenario(spec, rotvecs, root_t, shape, body, cam_full, crop, uv, conf,
                    rel_depth, root_depth)


def scenario_from_dict(model: ParametricModel, data: dict) -> Scenario:
    """Rebuild a scenario (ground truth included) from its serialized form."""
    try:
        spec_d = dict(data["scenario_spec"])
        for key in ("root_depth_range", "root_offset_range", "image_size"):
            spec_d[key] = tuple(spec_d[key])
        spec = ScenarioSpec(**spec_d)
        gt = data["ground_truth"]
        rotvecs = np.asarray(gt["pose"], dtype=np.float64).reshape(-1, 3)
        root_t = np.asarray(gt["root_translation"], dtype=np.float64)
        shape = np.asarray(gt["shape"], dtype=np.float64)
        obs = data["observation"]
        uv = np.asarray(obs["uv"], dtype=np.float64).reshape(-1, 2)
        conf = np.asarray(obs["weights"], dtype=np.float64)
        depth = np.asarray(obs["depth"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"scenario: missing or invalid field {exc}") from None
    body = forward_kinematics(model, PoseState(rotvec_to_matrix(rotvecs), root_t), shape)
    return Scenario(spec, rotvecs, root_t, shape, body, camera_from_dict(data["camera"]),
                    crop_from_dict(data["crop"]), uv, conf, depth, float(gt["root_depth"]))


def focal_sweep(model: ParametricModel, spec: ScenarioSpec, focal_grid):
    """One (assumed focal, scenario, assumed full-image camera) triple per grid point.

    The scenario is generated once with the true camera; only the camera handed to the
    fit changes along the grid.
    """
    grid = np.asarray(focal_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise InputError("focal grid must be a non-empty list of positive values")
    if np.any(np.diff(grid) <= 0):
        raise InputError("focal grid must be strictly ascending")
    scenario = sample_scenario(model, spec)
    true_cam = scenario.camera_full
    out = []
    for f in grid:
        assumed = CameraIntrinsics(float(f), float(f) * true_cam.fy / true_cam.fx,
                                   true_cam.px, true_cam.py)
        if np.isclose(f, true_cam.fx, rtol=0, atol=1e-9):
            assumed = true_cam
        out.append((float(f), scenario, assumed))
    return out
