import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pliks.camera import (CameraIntrinsics, CropBox, adjust_intrinsics, camera_from_dict,
                          crop_from_dict, default_intrinsics, lift_to_3d, project)
from pliks.errors import CameraError, InputError

CAM = CameraIntrinsics(1000.0, 1000.0, 112.0, 112.0)


def crop_affine(crop, uv):
    # explicit 3x3 affine for crop + resize, independent of CropBox.apply
    s = crop.out_size
    A = np.array([[s / crop.width, 0, -crop.x0 * s / crop.width],
                  [0, s / crop.height, -crop.y0 * s / crop.height],
                  [0, 0, 1]])
    h = np.c_[uv, np.ones(len(uv))] @ A.T
    return h[:, :2]


def test_project_examples():
    np.testing.assert_array_equal(project(CAM, [[0, 0, 2]]), [[112, 112]])
    assert project(CAM, [[1, 0, 2]])[0, 0] == 612
    np.testing.assert_allclose(lift_to_3d(CAM, [[612, 112]], [0.0], 2.0), [[1, 0, 2]])
    with pytest.raises(CameraError, match="point 1"):
        project(CAM, [[0, 0, 1], [0, 0, 0]])


def test_camera_error_is_input_error():
    assert issubclass(CameraError, InputError)


def test_adjust_identity_and_example():
    assert adjust_intrinsics(CAM, CropBox(0, 0, 224, 224, 224)) == CAM
    full = CameraIntrinsics(1000, 1000, 640, 360)
    adj = adjust_intrinsics(full, CropBox(320, 180, 640, 360, 224))
    assert adj.fx == pytest.approx(350)
    assert adj.fy == pytest.approx(622.2222222222)
    assert (adj.px, adj.py) == pytest.approx((112, 112))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(2, 20),
       st.floats(0, 600), st.floats(0, 300), st.floats(100, 700), st.floats(100, 400))
def test_crop_consistency(x, y, z, x0, y0, w, h):
    full = CameraIntrinsics(1200, 1100, 640, 360)
    crop = CropBox(x0, y0, w, h, 224)
    pt = np.array([[x, y, z]])
    via_full = crop_affine(crop, project(full, pt))
    np.testing.assert_allclose(project(adjust_intrinsics(full, crop), pt), via_full, atol=1e-9)
    np.testing.assert_allclose(crop.apply(project(full, pt)), via_full, atol=1e-9)


def test_crops_compose():
    full = CameraIntrinsics(1000, 900, 640, 360)
    c1 = CropBox(200, 100, 600, 500, 256)
    c2 = CropBox(30, 40, 128, 160, 224)
    s1x, s1y = c1.width / c1.out_size, c1.height / c1.out_size
    composed = CropBox(c1.x0 + c2.x0 * s1x, c1.y0 + c2.y0 * s1y, c2.width * s1x,
                       c2.height * s1y, c2.out_size)
    a = adjust_intrinsics(adjust_intrinsics(full, c1), c2)
    b = adjust_intrinsics(full, composed)
    np.testing.assert_allclose([a.fx, a.fy, a.px, a.py], [b.fx, b.fy, b.px, b.py], atol=1e-9)


def test_default_policies():
    c = default_intrinsics(1280, 720, "fixed_1000")
    assert (c.fx, c.fy, c.px, c.py) == (1000, 1000, 640, 360)
    d = default_intrinsics(1280, 720, "diag")
    assert d.fx == pytest.approx(1468.6, abs=0.05) and (d.px, d.py) == (640, 360)
    assert d.fx == math.hypot(1280, 720)
    e = default_intrinsics(1280, 720, "explicit", (500, 500, 100, 100))
    assert e == CameraIntrinsics(500, 500, 100, 100)
    sizes = [(320, 240), (640, 480), (1280, 720), (1920, 1080)]
    focals = [default_intrinsics(w, h, "diag").fx for w, h in sizes]
    assert focals == sorted(focals)
    with pytest.raises(CameraError):
        default_intrinsics(1280, 720, "bogus")


def test_lift_examples():
    np.testing.assert_array_equal(lift_to_3d(CAM, [[112, 112]], [0.0], 7.0), [[0, 0, 7]])
    with pytest.raises(CameraError):
        lift_to_3d(CAM, [[1, 2], [3, 4]], [0.0, -0.5], 0.5)


def test_lift_project_round_trip():
    rng = np.random.default_rng(0)
    pts = np.c_[rng.uniform(-2, 2, (200, 2)), rng.uniform(0.5, 20, 200)]
    cam = CameraIntrinsics(1300, 1250, 600, 350)
    back = lift_to_3d(cam, project(cam, pts), pts[:, 2] - 3.0, 3.0)
    np.testing.assert_allclose(back, pts, atol=1e-9)


def test_camera_files():
    assert camera_from_dict({"fx": 1, "fy": 2, "px": 3, "py": 4}) == CameraIntrinsics(1, 2, 3, 4)
    c = camera_from_dict({"policy": "diag", "width": 1280, "height": 720})
    assert c.fx == pytest.approx(1468.6, abs=0.05)
    with pytest.raises(CameraError, match="fy"):
        camera_from_dict({"fx": 1, "px": 3, "py": 4})
    assert crop_from_dict({"x0": 1, "y0": 2, "width": 3, "height": 4}).out_size == 224
    with pytest.raises(CameraError):
        CameraIntrinsics(-1, 1, 0, 0)
