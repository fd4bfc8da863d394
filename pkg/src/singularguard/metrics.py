"""Singularity measures of a 6x6 Jacobian.

Manipulability is ``sqrt(det(J J^T))``, the condition number is
``sigma_max / sigma_min`` and the smallest singular value is reported
directly. Near a singularity the condition number is replaced by a finite
cap so downstream comparisons stay well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .kinematics import KinematicModel, compute_jacobian

SIGMA_FLOOR = 1e-9
KAPPA_CAP = 1e6


@dataclass(frozen=True)
class Thresholds:
    """Acceptance bounds used by the IK filter, plus the kappa cap settings."""

    mu_threshold: float = 0.05
    kappa_threshold: float = 50.0
    sigma_threshold: float = 0.01
    sigma_floor: float = SIGMA_FLOOR
    kappa_cap: float = KAPPA_CAP

    def __post_init__(self):
        if self.mu_threshold < 0 or self.sigma_threshold < 0:
            raise ValueError("thresholds must be non-negative")
        if not 1.0 <= self.kappa_threshold <= self.kappa_cap:
            raise ValueError("kappa_threshold must lie in [1, kappa_cap]")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")

    @classmethod
    def from_dict(cls, block: dict) -> "Thresholds":
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in block.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SingularityMetrics:
    mu: float
    kappa: float
    sigma_min: float

    def passes(self, thresholds: Thresholds) -> bool:
        """The three-way safety filter applied to IK candidates."""
        return (
            self.mu >= thresholds.mu_threshold
            and self.kappa <= thresholds.kappa_threshold
            and self.sigma_min >= thresholds.sigma_threshold
        )


def singular_values(J: np.ndarray) -> np.ndarray:
    """Singular values in descending order."""
    return np.linalg.svd(np.asarray(J, dtype=float), compute_uv=False)


def manipulability(J: np.ndarray) -> float:
    """sqrt(det(J J^T)).

    For a square J this equals |det J|, which is used directly: forming J J^T
    squares the conditioning and costs about half the significant digits
    near a singularity.
    """
    J = np.asarray(J, dtype=float)
    if J.shape[0] == J.shape[1]:
        return abs(float(np.linalg.det(J)))
    det = float(np.linalg.det(J @ J.T))
    # round-off can leave a tiny negative determinant at a singularity
    return math.sqrt(max(det, 0.0))


def _kappa(sigma: np.ndarray, sigma_floor: float, kappa_cap: float) -> float:
    smin = float(sigma[-1])
    if smin < sigma_floor:
        return kappa_cap
    return min(float(sigma[0]) / smin, kappa_cap)


def condition_number(J: np.ndarray, sigma_floor: float = SIGMA_FLOOR,
                     kappa_cap: float = KAPPA_CAP) -> float:
    return _kappa(singular_values(J), sigma_floor, kappa_cap)


def min_singular_value(J: np.ndarray) -> float:
    return float(singular_values(J)[-1])


def metrics_from_jacobian(J: np.ndarray, thresholds: Thresholds | None = None) -> SingularityMetrics:
    t = thresholds or Thresholds()
    sigma = singular_values(J)
    return SingularityMetrics(
        mu=manipulability(J),
        kappa=_kappa(sigma, t.sigma_floor, t.kappa_cap),
        sigma_min=float(sigma[-1]),
    )


def compute_metrics(model: KinematicModel, q, thresholds: Thresholds | None = None) -> SingularityMetrics:
    return metrics_from_jacobian(compute_jacobian(model, q), thresholds)
