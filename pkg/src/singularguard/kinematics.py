"""Forward kinematics, geometric Jacobian and joint limits for a 6R DH chain.

Frames follow the standard Denavit-Hartenberg convention
``T_i = Rz(theta_i) Tz(d_i) Tx(a_i) Rx(alpha_i)``. The Jacobian is expressed in
the base frame; rows 0-2 are linear velocity (m/rad), rows 3-5 angular
velocity (rad/rad). Both blocks enter the singularity metrics unweighted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import kernels

N_JOINTS = 6

#: Manufacturer DH table for the UR10: (a, d, alpha, theta_offset).
UR10_DH = (
    (0.0, 0.1273, math.pi / 2, 0.0),
    (-0.612, 0.0, 0.0, 0.0),
    (-0.5723, 0.0, 0.0, 0.0),
    (0.0, 0.163941, math.pi / 2, 0.0),
    (0.0, 0.1157, -math.pi / 2, 0.0),
    (0.0, 0.0922, 0.0, 0.0),
)
UR10_LIMITS = tuple((-2 * math.pi, 2 * math.pi) for _ in range(N_JOINTS))

_UR_ALPHAS = (math.pi / 2, 0.0, 0.0, math.pi / 2, -math.pi / 2, 0.0)
REACH_TOL = 1e-9


class KinematicsError(ValueError):
    """Invalid joint vector or kinematic model."""


class TcpPose(NamedTuple):
    position: np.ndarray
    orientation: np.ndarray


def joint_config(q: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and return ``q`` as a float64 6-vector."""
    arr = np.ascontiguousarray(q, dtype=float)
    if arr.shape != (N_JOINTS,):
        raise KinematicsError(f"joint vector must have length {N_JOINTS}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KinematicsError("joint vector contains non-finite values")
    return arr


def _is_ur_family(dh: np.ndarray) -> bool:
    return (
        np.allclose(dh[:, 2], _UR_ALPHAS, atol=1e-12)
        and np.allclose(dh[[0, 3, 4, 5], 0], 0.0, atol=1e-12)
        and np.allclose(dh[[1, 2], 1], 0.0, atol=1e-12)
    )


def chain_max_reach(dh: np.ndarray) -> float:
    """Largest distance from the base origin the flange can reach.

    For the UR family the three parallel joints put the shoulder offset, both
    arm links and the in-plane wrist offset on one line, so the reach reduces
    to a 1-D maximization over how much of the last link lies in that plane
    versus along the parallel joint axes. Other topologies are maximized
    numerically from several starts.
    """
    dh = np.ascontiguousarray(dh, dtype=float)
    if _is_ur_family(dh):
        planar = abs(dh[0, 1]) + abs(dh[1, 0]) + abs(dh[2, 0])
        d4, d5, d6 = abs(dh[3, 1]), abs(dh[4, 1]), abs(dh[5, 1])

        def neg_sq(phi: float) -> float:
            s, c = math.sin(phi), math.cos(phi)
            return -((planar + math.hypot(d5, d6 * s)) ** 2 + (d4 + d6 * c) ** 2)

        res = minimize_scalar(neg_sq, bounds=(0.0, math.pi / 2), method="bounded",
                              options={"xatol": 1e-12})
        best = max(-res.fun, -neg_sq(0.0), -neg_sq(math.pi / 2))
        return math.sqrt(best)

    rng = np.random.default_rng(0)
    best = 0.0
    for _ in range(64):
        q0 = rng.uniform(-math.pi, math.pi, N_JOINTS)
        res = minimize(lambda q: -float(np.sum(kernels.forward(dh, q)[:3, 3] ** 2)), q0,
                       method="BFGS", options={"gtol": 1e-12})
        best = max(best, -res.fun)
    return math.sqrt(best)


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Immutable DH chain with joint limits and its maximum reach."""

    dh: np.ndarray = field(default_factory=lambda: np.array(UR10_DH))
    limits: np.ndarray = field(default_factory=lambda: np.array(UR10_LIMITS))
    max_reach: float | None = None

    def __post_init__(self) -> None:
        dh = np.ascontiguousarray(self.dh, dtype=float)
        limits = np.ascontiguousarray(self.limits, dtype=float)
        if dh.shape != (N_JOINTS, 4) or not np.all(np.isfinite(dh)):
            raise KinematicsError("dh table must be a finite 6x4 array of (a, d, alpha, theta_offset)")
        if limits.shape != (N_JOINTS, 2) or not np.all(limits[:, 0] < limits[:, 1]):
            raise KinematicsError("joint limits must be 6 (lo, hi) pairs with lo < hi")
        derived = chain_max_reach(dh)
        if self.max_reach is None:
            reach = derived
        else:
            reach = float(self.max_reach)
            if not reach > 0 or abs(reach - derived) > REACH_TOL:
                raise KinematicsError(
                    f"max_reach {reach!r} does not match the reach derived from the DH table {derived!r}"
                )
        dh.setflags(write=False)
        limits.setflags(write=False)
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "limits", limits)
        object.__setattr__(self, "max_reach", reach)

    @property
    def lower(self) -> np.ndarray:
        return self.limits[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.limits[:, 1]

    def to_dict(self) -> dict:
        return {
            "dh": [[float(v) for v in row] for row in self.dh],
            "limits": [[float(v) for v in row] for row in self.limits],
            "max_reach": float(self.max_reach),
        }

    @classmethod
    def from_dict(cls, block: dict) -> "KinematicModel":
        unknown = set(block) - {"dh", "limits", "max_reach"}
        if unknown:
            raise KinematicsError(f"unknown kinematics keys: {sorted(unknown)}")
        return cls(
            dh=np.array(block.get("dh", UR10_DH), dtype=float),
            limits=np.array(block.get("limits", UR10_LIMITS), dtype=float),
            max_reach=block.get("max_reach"),
        )


def forward_kinematics(model: KinematicModel, q) -> TcpPose:
    """Flange pose for joint angles ``q``. Limits are not enforced."""
    T = kernels.forward(model.dh, joint_config(q))
    return TcpPose(T[:3, 3].copy(), T[:3, :3].copy())


def compute_jacobian(model: KinematicModel, q) -> np.ndarray:
    return kernels.forward_and_jacobian(model.dh, joint_config(q))[1]


def forward_and_jacobian(model: KinematicModel, q) -> tuple[TcpPose, np.ndarray]:
    T, J = kernels.forward_and_jacobian(model.dh, joint_config(q))
    return TcpPose(T[:3, 3].copy(), T[:3, :3].copy()), J


def tcp_position(model: KinematicModel, q) -> np.ndarray:
    return kernels.forward(model.dh, joint_config(q))[:3, 3].copy()


def clamp_to_limits(model: KinematicModel, q) -> np.ndarray:
    return np.clip(np.asarray(q, dtype=float), model.lower, model.upper)


def within_limits(model: KinematicModel, q) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(q >= model.lower) and np.all(q <= model.upper))


def sample_configs(model: KinematicModel, n: int, rng: np.random.Generator,
                   span: float | None = None) -> np.ndarray:
    """Uniform in-limit samples; ``span`` optionally narrows each joint to +/- span rad."""
    lo, hi = model.lower, model.upper
    if span is not None:
        lo, hi = np.maximum(lo, -span), np.minimum(hi, span)
    return rng.uniform(lo, hi, size=(n, N_JOINTS))
