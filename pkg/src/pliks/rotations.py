import numpy as np
from scipy.spatial.transform import Rotation


def rotvec_to_matrix(rotvecs):
    """Axis-angle (..., 3) -> rotation matrices (..., 3, 3)."""
    rotvecs = np.asarray(rotvecs, dtype=np.float64)
    flat = rotvecs.reshape(-1, 3)
    mats = Rotation.from_rotvec(flat).as_matrix()
    return mats.reshape(rotvecs.shape[:-1] + (3, 3))


def matrix_to_rotvec(mats):
    mats = np.asarray(mats, dtype=np.float64)
    flat = mats.reshape(-1, 3, 3)
    vecs = Rotation.from_matrix(flat).as_rotvec()
    return vecs.reshape(mats.shape[:-2] + (3,))


def is_rotation(mat, tol=1e-9):
    mat = np.asarray(mat)
    eye = np.eye(3)
    ortho = np.abs(np.swapaxes(mat, -1, -2) @ mat - eye).max()
    det = np.linalg.det(mat)
    return bool(ortho <= tol and np.all(np.abs(det - 1.0) <= tol))


def angle_between(r1, r2):
    """Geodesic angle in radians between rotation matrices (broadcasts)."""
    rel = np.swapaxes(r1, -1, -2) @ r2
    cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.arccos(np.clip(cos, -1.0, 1.0))


def random_rotations(rng, count, max_angle=np.pi):
    """Uniform random axis with angle uniform in [0, max_angle]."""
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, size=count)
    return rotvec_to_matrix(axes * angles[:, None])
