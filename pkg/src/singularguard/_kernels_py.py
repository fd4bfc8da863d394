"""Pure-Python (numpy) fallback for the compiled DH-chain kernels.

Same contract as ``_kernels.pyx``: ``dh`` is a C-contiguous (6, 4) array of
rows ``(a, d, alpha, theta_offset)`` and ``q`` a length-6 float array.
"""

import numpy as np


def _link(a, d, alpha, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def forward(dh, q):
    T = np.eye(4)
    for i in range(6):
        a, d, alpha, offset = dh[i]
        T = T @ _link(a, d, alpha, q[i] + offset)
    return T


def forward_and_jacobian(dh, q):
    T = np.eye(4)
    origins = np.empty((6, 3))
    axes = np.empty((6, 3))
    for i in range(6):
        origins[i] = T[:3, 3]
        axes[i] = T[:3, 2]
        a, d, alpha, offset = dh[i]
        T = T @ _link(a, d, alpha, q[i] + offset)
    J = np.empty((6, 6))
    J[:3] = np.cross(axes, T[:3, 3] - origins).T
    J[3:] = axes.T
    return T, J
