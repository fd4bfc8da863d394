# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DH-chain kernels: forward kinematics and geometric Jacobian."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


cdef void _chain(const double[:, ::1] dh, const double[::1] q,
                 double* T, double* origins, double* axes) noexcept nogil:
    # T: 4x4 row-major accumulator; origins/axes: 6x3 frame i-1 data per joint
    cdef int i, r, c, k
    cdef double ct, st, ca, sa, a, d, theta
    cdef double A[16]
    cdef double tmp[16]
    cdef double s
    for r in range(16):
        T[r] = 0.0
    T[0] = 1.0; T[5] = 1.0; T[10] = 1.0; T[15] = 1.0
    for i in range(6):
        origins[3 * i] = T[3]
        origins[3 * i + 1] = T[7]
        origins[3 * i + 2] = T[11]
        axes[3 * i] = T[2]
        axes[3 * i + 1] = T[6]
        axes[3 * i + 2] = T[10]
        a = dh[i, 0]
        d = dh[i, 1]
        theta = q[i] + dh[i, 3]
        ct = cos(theta); st = sin(theta)
        ca = cos(dh[i, 2]); sa = sin(dh[i, 2])
        A[0] = ct;  A[1] = -st * ca; A[2] = st * sa;  A[3] = a * ct
        A[4] = st;  A[5] = ct * ca;  A[6] = -ct * sa; A[7] = a * st
        A[8] = 0.0; A[9] = sa;       A[10] = ca;      A[11] = d
        A[12] = 0.0; A[13] = 0.0;    A[14] = 0.0;     A[15] = 1.0
        for r in range(4):
            for c in range(4):
                s = 0.0
                for k in range(4):
                    s = s + T[4 * r + k] * A[4 * k + c]
                tmp[4 * r + c] = s
        for r in range(16):
            T[r] = tmp[r]


def forward(const double[:, ::1] dh, const double[::1] q):
    """Homogeneous flange transform (4x4) for joint angles ``q``."""
    cdef double T[16]
    cdef double origins[18]
    cdef double axes[18]
    _chain(dh, q, T, origins, axes)
    out = np.empty((4, 4))
    cdef double[:, ::1] ov = out
    cdef int r
    for r in range(16):
        ov[r // 4, r % 4] = T[r]
    return out


def forward_and_jacobian(const double[:, ::1] dh, const double[::1] q):
    """Return ``(T, J)``: the flange transform and the 6x6 geometric Jacobian."""
    cdef double T[16]
    cdef double origins[18]
    cdef double axes[18]
    _chain(dh, q, T, origins, axes)
    out = np.empty((4, 4))
    jac = np.empty((6, 6))
    cdef double[:, ::1] ov = out
    cdef double[:, ::1] jv = jac
    cdef int r, i
    cdef double px = T[3], py = T[7], pz = T[11]
    cdef double zx, zy, zz, rx, ry, rz
    for r in range(16):
        ov[r // 4, r % 4] = T[r]
    for i in range(6):
        zx = axes[3 * i]; zy = axes[3 * i + 1]; zz = axes[3 * i + 2]
        rx = px - origins[3 * i]
        ry = py - origins[3 * i + 1]
        rz = pz - origins[3 * i + 2]
        jv[0, i] = zy * rz - zz * ry
        jv[1, i] = zz * rx - zx * rz
        jv[2, i] = zx * ry - zy * rx
        jv[3, i] = zx
        jv[4, i] = zy
        jv[5, i] = zz
    return out, jac
