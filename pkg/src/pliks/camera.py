"""Pinhole camera: projection, crop/resize intrinsics and depth lifting.

Focal lengths are in pixels. The "fixed 1000" default is read as 1000 px.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CameraError

POLICIES = ("fixed_1000", "diag", "explicit")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    px: float
    py: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.px, self.py)
        if not all(math.isfinite(v) for v in vals):
            raise CameraError(f"intrinsics must be finite, got {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise CameraError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.px], [0.0, self.fy, self.py], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "px": self.px, "py": self.py}


@dataclass(frozen=True)
class CropBox:
    x0: float
    y0: float
    width: float
    height: float
    out_size: int = 224

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0 and self.out_size > 0):
            raise CameraError(f"invalid crop {self}")

    def to_dict(self):
        return {"x0": self.x0, "y0": self.y0, "width": self.width,
                "height": self.height, "out_size": self.out_size}

    def apply(self, uv):
        """Map full-image pixels into the resized crop."""
        uv = np.asarray(uv, dtype=np.float64)
        sx, sy = self.out_size / self.width, self.out_size / self.height
        return np.stack([(uv[..., 0] - self.x0) * sx, (uv[..., 1] - self.y0) * sy], axis=-1)


def project(cam: CameraIntrinsics, points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    bad = np.flatnonzero(~(z > 0))
    if len(bad):
        raise CameraError(f"point {bad[0]} has non-positive depth {z.reshape(-1)[bad[0]]}")
    u = cam.fx * points[..., 0] / z + cam.px
    v = cam.fy * points[..., 1] / z + cam.py
    return np.stack([u, v], axis=-1)


def adjust_intrinsics(cam: CameraIntrinsics, crop: CropBox) -> CameraIntrinsics:
    sx = crop.out_size / crop.width
    sy = crop.out_size / crop.height
    return CameraIntrinsics(cam.fx * sx, cam.fy * sy, (cam.px - crop.x0) * sx, (cam.py - crop.y0) * sy)


def default_intrinsics(width, height, policy="fixed_1000", explicit=None) -> CameraIntrinsics:
    if policy == "explicit":
        if explicit is None:
            raise CameraError("explicit policy needs intrinsics")
        return explicit if isinstance(explicit, CameraIntrinsics) else CameraIntrinsics(*explicit)
    if not (width > 0 and height > 0):
        raise CameraError(f"image size must be positive, got {width}x{height}")
    if policy == "fixed_1000":
        f = 1000.0
    elif policy == "diag":
        f = math.sqrt(width ** 2 + height ** 2)
    else:
        raise CameraError(f"unknown camera policy '{policy}'")
    return CameraIntrinsics(f, f, width / 2.0, height / 2.0)


def lift_to_3d(cam: CameraIntrinsics, uv, depth, root_depth) -> np.ndarray:
    """Back-project pixels along their rays to depth ``depth + root_depth``."""
    uv = np.asarray(uv, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64) + root_depth
    bad = np.flatnonzero(~(z > 0))
    if len(bad):
        raise CameraError(f"point {bad[0]} lifts to non-positive depth {z[bad[0]]}")
    x = (uv[:, 0] - cam.px) / cam.fx
    y = (uv[:, 1] - cam.py) / cam.fy
    return np.stack([x * z, y * z, z], axis=-1)


# ------------------------------------------------------------------- files

def camera_from_dict(data, width=None, height=None) -> CameraIntrinsics:
    if not isinstance(data, dict):
        raise CameraError("camera file must hold a JSON object")
    if "policy" in data:
        w = data.get("width", width)
        h = data.get("height", height)
        if w is None or h is None:
            raise CameraError("camera policy needs 'width' and 'height'")
        return default_intrinsics(float(w), float(h), data["policy"])
    try:
        return CameraIntrinsics(float(data["fx"]), float(data["fy"]),
                                float(data["px"]), float(data["py"]))
    except KeyError as exc:
        raise CameraError(f"camera: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise CameraError(f"camera: {exc}") from None


def crop_from_dict(data) -> CropBox:
    if not isinstance(data, dict):
        raise CameraError("crop file must hold a JSON object")
    try:
        return CropBox(float(data["x0"]), float(data["y0"]), float(data["width"]),
                       float(data["height"]), int(data.get("out_size", 224)))
    except KeyError as exc:
        raise CameraError(f"crop: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise CameraError(f"crop: {exc}") from None


def load_camera(path, width=None, height=None):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CameraError(f"{path}: not valid JSON ({exc})") from None
    return camera_from_dict(data, width, height)


def load_crop(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CameraError(f"{path}: not valid JSON ({exc})") from None
    return crop_from_dict(data)
