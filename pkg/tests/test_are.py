import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from pliks.are import WorldRotations, estimate_world_rotations, kabsch, relative_rotations
from pliks.errors import DegenerateError
from pliks.model import PoseState, assign_segments, forward_kinematics, rest_mesh, world_from_relative
from pliks.rotations import angle_between, is_rotation, random_rotations, rotvec_to_matrix

MIRROR = np.diag([1.0, 1.0, -1.0])


def so3_grid(step=0.1):
    """Dense rotation-vector lattice clipped to the radius-pi ball."""
    ax = np.arange(-np.pi, np.pi + step, step)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    g = g[np.linalg.norm(g, axis=1) <= np.pi]
    return Rotation.from_rotvec(g).as_matrix()


def kabsch_cost(R, src, dst, w):
    s = src - w @ src / w.sum()
    d = dst - w @ dst / w.sum()
    return float(np.sum(w * np.sum((d - s @ R.T) ** 2, axis=1)))


def test_identity_and_exact_recovery():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(20, 3))
    np.testing.assert_allclose(kabsch(src, src, rng.uniform(0.1, 1, 20)), np.eye(3), atol=1e-12)
    Rz = rotvec_to_matrix(np.array([0, 0, np.pi / 2]))
    np.testing.assert_allclose(kabsch(src, src @ Rz.T), Rz, atol=1e-12)


def test_mirror_matches_grid_oracle():
    grid = so3_grid(0.1)
    rng = np.random.default_rng(1)
    for _ in range(3):
        src = rng.normal(size=(15, 3)) * [1.0, 0.6, 0.3]
        w = rng.uniform(0.2, 1.0, 15)
        dst = src @ MIRROR.T
        R = kabsch(src, dst, w)
        assert is_rotation(R, 1e-9) and np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        s = src - w @ src / w.sum()
        d = dst - w @ dst / w.sum()
        H = (s * w[:, None]).T @ d
        score = lambda rots: np.einsum("gab,ba->g", rots, H)   # trace(R H)
        best = grid[np.argmax(score(grid))]
        assert kabsch_cost(R, src, dst, w) <= kabsch_cost(best, src, dst, w) + 1e-12
        # refine the coarse winner with successively finer local lattices
        step = 0.1
        local = np.stack(np.meshgrid(*[np.linspace(-1, 1, 11)] * 3, indexing="ij"), -1)
        for _ in range(4):
            cand = Rotation.from_rotvec(local.reshape(-1, 3) * step).as_matrix() @ best
            best = cand[np.argmax(score(cand))]
            step /= 5
        assert angle_between(R, best) < 1e-3


def test_weight_scaling_invariance():
    rng = np.random.default_rng(2)
    src = rng.normal(size=(10, 3))
    dst = src @ random_rotations(rng, 1)[0].T + rng.normal(size=(10, 3)) * 0.05
    w = rng.uniform(0.1, 1, 10)
    np.testing.assert_allclose(kabsch(src, dst, w), kabsch(src, dst, 37.5 * w), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_kabsch_always_proper(seed, mirrored):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(8, 3))
    dst = rng.normal(size=(8, 3)) if not mirrored else src @ MIRROR.T
    R = kabsch(src, dst, rng.uniform(0.01, 1, 8))
    assert is_rotation(R, 1e-9)


def test_kabsch_degenerate():
    with pytest.raises(DegenerateError):
        kabsch(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateError):
        kabsch(line, line)
    with pytest.raises(DegenerateError):
        kabsch(np.eye(3), np.eye(3), np.zeros(3))


def test_are_identity(body_model, segmap):
    beta = np.linspace(-1, 1, 10)
    world = estimate_world_rotations(body_model, segmap, rest_mesh(body_model, beta), beta)
    np.testing.assert_allclose(world.rotations, np.broadcast_to(np.eye(3), (24, 3, 3)), atol=1e-12)
    assert world.fallback == ()


def test_are_binary_single_joint(binary_model):
    segmap = assign_segments(binary_model)
    rel = np.broadcast_to(np.eye(3), (5, 3, 3)).copy()
    rel[2] = rotvec_to_matrix(np.array([0.4, -0.3, 0.7]))
    body = forward_kinematics(binary_model, PoseState(rel, np.array([0.0, 0.0, 5.0])))
    world = estimate_world_rotations(binary_model, segmap, body.vertices)
    for k in range(5):
        np.testing.assert_allclose(world.rotations[k], body.world_rotations[k], atol=1e-10)
    assert angle_between(world.rotations[2], np.eye(3)) > 0.5


def test_are_smooth_weights_deviate_but_bounded(body_model, segmap):
    rng = np.random.default_rng(4)
    rel = random_rotations(rng, 24, np.pi / 4)
    body = forward_kinematics(body_model, PoseState(rel, np.zeros(3)))
    world = estimate_world_rotations(body_model, segmap, body.vertices)
    err = np.array([angle_between(a, b) for a, b in zip(world.rotations, body.world_rotations)])
    assert err.max() > 0
    assert err.max() < np.radians(30)


def test_are_equivariance(body_model, segmap):
    rng = np.random.default_rng(5)
    body = forward_kinematics(body_model, PoseState(random_rotations(rng, 24, 0.5), np.zeros(3)))
    G = random_rotations(rng, 1)[0]
    a = estimate_world_rotations(body_model, segmap, body.vertices)
    b = estimate_world_rotations(body_model, segmap, body.vertices @ G.T)
    np.testing.assert_allclose(b.rotations, G @ a.rotations, atol=1e-10)


def test_are_degenerate_segment_falls_back(body_model, segmap):
    pred = rest_mesh(body_model).copy()
    idx = segmap.vertices_of_segment[5]
    pred[idx] = pred[idx].mean(axis=0)   # collapse a segment to a point
    world = estimate_world_rotations(body_model, segmap, pred)
    assert 5 in world.fallback
    np.testing.assert_array_equal(world.rotations[5], world.rotations[body_model.parents[5]])


def test_are_too_few_weighted_vertices(body_model, segmap):
    conf = np.ones(body_model.num_vertices)
    conf[segmap.vertices_of_segment[3][2:]] = 0.0
    with pytest.raises(DegenerateError) as info:
        estimate_world_rotations(body_model, segmap, rest_mesh(body_model), None, conf)
    assert info.value.segment == 3


def test_relative_rotations():
    parents = np.array([-1, 0, 1, 0])
    eye = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
    np.testing.assert_array_equal(relative_rotations(WorldRotations(eye), parents), eye)
    rng = np.random.default_rng(6)
    world = random_rotations(rng, 4)
    world[2] = world[1]
    rel = relative_rotations(world, parents)
    np.testing.assert_allclose(rel[2], np.eye(3), atol=1e-12)
    np.testing.assert_allclose(world_from_relative(rel, parents), world, atol=1e-12)
