import numpy as np
import pytest

from pliks.model import ParametricModel, assign_segments, validate
from pliks.synth import ModelSpec, generate_model

# acceptance tests append (criterion, passed, detail) here; printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def body_model():
    return generate_model(ModelSpec())


@pytest.fixture(scope="session")
def segmap(body_model):
    return assign_segments(body_model)


@pytest.fixture(scope="session")
def small_model():
    return generate_model(ModelSpec(num_joints=6, vertices_per_segment=12, num_shapes=3, seed=4))


@pytest.fixture(scope="session")
def binary_model():
    return generate_model(ModelSpec(num_joints=5, vertices_per_segment=10, num_shapes=3,
                                    weight_smoothness=0.0, seed=2))


def chain_model(num_joints=3, per_seg=6, num_shapes=2, seed=0, binary=False):
    """Hand-rolled chain model with random smooth weights, independent of synthgen."""
    rng = np.random.default_rng(seed)
    n = num_joints * per_seg
    template = rng.normal(size=(n, 3)) * 0.1
    template[:, 1] += np.repeat(np.arange(num_joints), per_seg) * 0.3
    if binary:
        weights = np.zeros((num_joints, n))
        weights[np.repeat(np.arange(num_joints), per_seg), np.arange(n)] = 1.0
    else:
        weights = rng.uniform(0.05, 1.0, size=(num_joints, n))
        weights[np.repeat(np.arange(num_joints), per_seg), np.arange(n)] += 2.0
        weights /= weights.sum(axis=0)
    reg = rng.uniform(size=(num_joints, n))
    reg /= reg.sum(axis=1, keepdims=True)
    basis = rng.normal(size=(num_shapes, n, 3)) * 0.01
    parents = np.arange(-1, num_joints - 1)
    return validate(ParametricModel("chain", template, basis, weights, reg, parents))
