"""Hot per-vertex kernels with a numba path and a pure-numpy path.

The backend is picked once at import time: numba when it imports cleanly and
``PLIKS_DISABLE_NUMBA`` is unset (or "0"), numpy otherwise. Both backends are
always importable under explicit names so tests and the benchmark can compare
them.
"""
import os

import numpy as np

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_AVAILABLE = False

_flag = os.environ.get("PLIKS_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = NUMBA_AVAILABLE and _flag in ("", "0", "false", "no")


def _njit(fn):
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------- skinning

def skin_numpy(rest, weights, world_rot, world_joints, rest_joints):
    """v_i = sum_k W[k, i] * (Rw_k (x_i - j_k) + jw_k)."""
    local = rest[None, :, :] - rest_joints[:, None, :]
    moved = np.einsum("kab,knb->kna", world_rot, local) + world_joints[:, None, :]
    return np.einsum("kn,kna->na", weights, moved)


@_njit
def skin_numba(rest, weights, world_rot, world_joints, rest_joints):
    n = rest.shape[0]
    k_count = weights.shape[0]
    out = np.zeros((n, 3))
    for k in range(k_count):
        r = world_rot[k]
        for i in range(n):
            w = weights[k, i]
            if w == 0.0:
                continue
            lx = rest[i, 0] - rest_joints[k, 0]
            ly = rest[i, 1] - rest_joints[k, 1]
            lz = rest[i, 2] - rest_joints[k, 2]
            for a in range(3):
                out[i, a] += w * (r[a, 0] * lx + r[a, 1] * ly + r[a, 2] * lz
                                  + world_joints[k, a])
    return out


# ------------------------------------------------------------ DLT assembly
#
# Column layout: [3K rotation increments | S shape | 3K translations].
# Row pair per vertex: fx*Px + (px - u)*Pz = 0 and fy*Py + (py - v)*Pz = 0.

def dlt_rows_numpy(template, basis, segment, world_rot, uv, conf, fx, fy, px, py):
    n = template.shape[0]
    s = basis.shape[0]
    k_count = world_rot.shape[0]
    n_cols = 6 * k_count + s
    rot = world_rot[segment]
    xr = np.einsum("nab,nb->na", rot, template)
    br = np.einsum("nab,snb->nsa", rot, basis)

    x, y, z = xr[:, 0], xr[:, 1], xr[:, 2]
    a = np.zeros((n, 2, 3))
    a[:, 0, 0] = fx
    a[:, 0, 2] = px - uv[:, 0]
    a[:, 1, 1] = fy
    a[:, 1, 2] = py - uv[:, 1]
    a *= conf[:, None, None]

    # d(omega x xr)/d(omega) = -[xr]_x
    dp = np.zeros((n, 3, 3))
    dp[:, 0, 1], dp[:, 0, 2] = z, -y
    dp[:, 1, 0], dp[:, 1, 2] = -z, x
    dp[:, 2, 0], dp[:, 2, 1] = y, -x

    mat = np.zeros((2 * n, n_cols))
    rhs = -np.einsum("nra,na->nr", a, xr).reshape(-1)
    rows = np.arange(2 * n).reshape(n, 2)
    base = 3 * segment
    for c in range(3):
        mat[rows, (base + c)[:, None]] = np.einsum("nra,na->nr", a, dp[:, :, c])
        mat[rows, (3 * k_count + s + base + c)[:, None]] = a[:, :, c]
    if s:
        mat[:, 3 * k_count:3 * k_count + s] = np.einsum("nra,nsa->nrs", a, br).reshape(2 * n, s)
    return mat, rhs


@_njit
def dlt_rows_numba(template, basis, segment, world_rot, uv, conf, fx, fy, px, py):
    n = template.shape[0]
    s = basis.shape[0]
    k_count = world_rot.shape[0]
    t_off = 3 * k_count + s
    mat = np.zeros((2 * n, 6 * k_count + s))
    rhs = np.zeros(2 * n)
    xr = np.empty(3)
    coef = np.empty(3)
    for i in range(n):
        k = segment[i]
        r = world_rot[k]
        for q in range(3):
            xr[q] = r[q, 0] * template[i, 0] + r[q, 1] * template[i, 1] + r[q, 2] * template[i, 2]
        x, y, z = xr[0], xr[1], xr[2]
        w = conf[i]
        for row in range(2):
            if row == 0:
                coef[0], coef[1], coef[2] = w * fx, 0.0, w * (px - uv[i, 0])
            else:
                coef[0], coef[1], coef[2] = 0.0, w * fy, w * (py - uv[i, 1])
            rr = 2 * i + row
            mat[rr, 3 * k + 0] = -coef[1] * z + coef[2] * y
            mat[rr, 3 * k + 1] = coef[0] * z - coef[2] * x
            mat[rr, 3 * k + 2] = -coef[0] * y + coef[1] * x
            for c in range(s):
                acc = 0.0
                for q in range(3):
                    bq = (r[q, 0] * basis[c, i, 0] + r[q, 1] * basis[c, i, 1]
                          + r[q, 2] * basis[c, i, 2])
                    acc += coef[q] * bq
                mat[rr, 3 * k_count + c] = acc
            for c in range(3):
                mat[rr, t_off + 3 * k + c] = coef[c]
            rhs[rr] = -(coef[0] * x + coef[1] * y + coef[2] * z)
    return mat, rhs


if USE_NUMBA:
    skin = skin_numba
    dlt_rows = dlt_rows_numba
else:
    skin = skin_numpy
    dlt_rows = dlt_rows_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
