"""Multi-start position IK that keeps only well-conditioned solutions.

Each start runs damped Gauss-Newton on the TCP position error, projecting
into the joint limits after every step. Solutions that fail the
manipulability / condition-number / smallest-singular-value filter are
dropped; the survivor with the largest manipulability wins.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .kinematics import KinematicModel, clamp_to_limits, joint_config
from .metrics import SingularityMetrics, Thresholds, metrics_from_jacobian

log = logging.getLogger(__name__)

HOME = (0.0, -math.pi / 2, math.pi / 2, -math.pi / 2, -math.pi / 2, 0.0)

_GUESSES = (
    HOME,
    (0.0, -1.0, 1.7, -2.3, -math.pi / 2, 0.0),
    (math.pi, -1.0, 1.7, -2.3, -math.pi / 2, 0.0),
    (0.0, -2.2, -1.6, -0.9, math.pi / 2, 0.0),
    (math.pi, -2.2, -1.6, -0.9, math.pi / 2, 0.0),
)

UNREACHABLE = "unreachable"
UNSAFE = "reachable-but-unsafe"
NOT_CONVERGED = "no-start-converged"


def default_guesses(model: KinematicModel) -> list[np.ndarray]:
    """Home pose plus elbow-up and elbow-down variants facing both ways."""
    return [clamp_to_limits(model, g) for g in _GUESSES]


@dataclass(frozen=True)
class IkConfig:
    initial_guesses: tuple[tuple[float, ...], ...] = _GUESSES
    position_tolerance: float = 1e-3
    max_iterations: int = 200
    thresholds: Thresholds = field(default_factory=Thresholds)
    damping: float = 0.01
    damping_band: float = 0.05
    max_step: float = 0.4
    ranking: str = "manipulability"

    def __post_init__(self):
        if len(self.initial_guesses) != 5:
            raise ValueError(f"exactly 5 initial guesses are required, got {len(self.initial_guesses)}")
        if not self.position_tolerance > 0:
            raise ValueError("position_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.ranking not in ("manipulability", "fuzzy"):
            raise ValueError(f"unknown ranking mode {self.ranking!r}")
        object.__setattr__(self, "initial_guesses",
                           tuple(tuple(float(v) for v in joint_config(g)) for g in self.initial_guesses))

    @classmethod
    def from_dict(cls, block: dict, thresholds: Thresholds | None = None) -> "IkConfig":
        allowed = {"initial_guesses", "position_tolerance", "max_iterations", "damping",
                   "damping_band", "max_step", "ranking"}
        unknown = set(block) - allowed
        if unknown:
            raise ValueError(f"unknown ik keys: {sorted(unknown)}")
        kw = dict(block)
        if "initial_guesses" in kw:
            kw["initial_guesses"] = tuple(tuple(g) for g in kw["initial_guesses"])
        return cls(thresholds=thresholds or Thresholds(), **kw)


@dataclass(frozen=True)
class IkSolution:
    q: np.ndarray
    mu: float
    residual: float
    metrics: SingularityMetrics
    guess_index: int

    def to_dict(self) -> dict:
        return {
            "q": [float(v) for v in self.q],
            "mu": self.mu,
            "kappa": self.metrics.kappa,
            "sigma_min": self.metrics.sigma_min,
            "residual": self.residual,
            "guess_index": self.guess_index,
        }


@dataclass
class IkReport:
    solution: IkSolution | None
    reason: str | None
    candidates: list[IkSolution]


def solve_ik_single(model: KinematicModel, target, guess, cfg: IkConfig | None = None) -> np.ndarray | None:
    """Local damped least-squares solve from ``guess``; None if the residual stays above tolerance."""
    cfg = cfg or IkConfig()
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be 3 finite coordinates")
    if np.linalg.norm(target) > model.max_reach:
        return None
    q = clamp_to_limits(model, joint_config(guess))
    stop = cfg.position_tolerance * 1e-4
    T, J = kernels.forward_and_jacobian(model.dh, q)
    err = target - T[:3, 3]
    res = float(np.linalg.norm(err))
    lam_sq_max = cfg.damping ** 2
    for _ in range(cfg.max_iterations):
        if res <= stop:
            break
        Jp = J[:3]
        sigma_min = np.linalg.svd(Jp, compute_uv=False)[-1]
        lam_sq = 0.0
        if sigma_min < cfg.damping_band:
            lam_sq = lam_sq_max * (1.0 - (sigma_min / cfg.damping_band) ** 2)
        dq = Jp.T @ np.linalg.solve(Jp @ Jp.T + lam_sq * np.eye(3), err)
        peak = np.max(np.abs(dq))
        if peak > cfg.max_step:
            dq *= cfg.max_step / peak
        # backtrack so the residual never grows
        for _ in range(8):
            q_new = clamp_to_limits(model, q + dq)
            T_new, J_new = kernels.forward_and_jacobian(model.dh, q_new)
            err_new = target - T_new[:3, 3]
            res_new = float(np.linalg.norm(err_new))
            if res_new < res:
                break
            dq *= 0.5
        else:
            break
        q, J, err, res = q_new, J_new, err_new, res_new
    if res > cfg.position_tolerance:
        return None
    return q


def solve_ik_report(model: KinematicModel, target, cfg: IkConfig | None = None,
                    scorer: Callable[[SingularityMetrics], float] | None = None) -> IkReport:
    cfg = cfg or IkConfig()
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be 3 finite coordinates")
    if np.linalg.norm(target) > model.max_reach:
        log.info("IK target %s is beyond max reach %.4f m", target.tolist(), model.max_reach)
        return IkReport(None, UNREACHABLE, [])
    converged = []
    for i, guess in enumerate(cfg.initial_guesses):
        q = solve_ik_single(model, target, guess, cfg)
        if q is None:
            continue
        T, J = kernels.forward_and_jacobian(model.dh, q)
        m = metrics_from_jacobian(J, cfg.thresholds)
        converged.append(IkSolution(q, m.mu, float(np.linalg.norm(T[:3, 3] - target)), m, i))
    if not converged:
        log.info("IK target %s: no start converged", target.tolist())
        return IkReport(None, NOT_CONVERGED, [])
    safe = [s for s in converged if s.metrics.passes(cfg.thresholds)]
    if not safe:
        log.info("IK target %s is reachable but every solution fails the singularity filter",
                 target.tolist())
        return IkReport(None, UNSAFE, converged)
    if cfg.ranking == "fuzzy":
        if scorer is None:
            raise ValueError("fuzzy ranking needs a scorer")
        key = lambda s: (scorer(s.metrics), s.mu, -s.guess_index)
    else:
        key = lambda s: (s.mu, -s.guess_index)
    return IkReport(max(safe, key=key), None, converged)


def solve_ik(model: KinematicModel, target, cfg: IkConfig | None = None,
             scorer: Callable[[SingularityMetrics], float] | None = None) -> IkSolution | None:
    """Best safe solution over all starts, or None."""
    return solve_ik_report(model, target, cfg, scorer).solution
