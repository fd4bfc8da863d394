"""Kinematic reaching environment.

Joint velocity commands are integrated with a fixed time step and clamped to
the joint limits; singularity metrics are recomputed every step. Episodes end
on success, at the step horizon, or immediately when manipulability drops
below the emergency-stop tier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .. import kernels
from ..ik import HOME, IkConfig, solve_ik
from ..kinematics import KinematicModel, clamp_to_limits, joint_config
from ..metrics import SingularityMetrics, metrics_from_jacobian

OBS_DIM = 12
ACT_DIM = 6
MU_HARD_STOP = 0.005


class SamplingExhausted(RuntimeError):
    """No IK-feasible target was found within the rejection budget."""


@dataclass(frozen=True)
class CurriculumStage:
    index: int
    target_radius: float
    success_threshold: float


CURRICULUM = (
    CurriculumStage(1, 0.10, 0.60),
    CurriculumStage(2, 0.15, 0.70),
    CurriculumStage(3, 0.20, 0.80),
    CurriculumStage(4, math.inf, 0.85),
)


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.05
    v_max: float = 1.0
    t_max: int = 100
    d_success: float = 0.05
    w_distance: float = 1.0
    success_bonus: float = 50.0
    w_progress: float = 10.0
    mu_safe: float = 0.05
    w_singularity: float = 5.0
    w_velocity: float = 0.1
    mu_hard_stop: float = MU_HARD_STOP
    workspace_inner: float = 0.3
    workspace_outer_frac: float = 0.95
    max_rejections: int = 100
    home: tuple[float, ...] = HOME
    offset_scale: float = 0.2

    @classmethod
    def from_dict(cls, block: dict) -> "EnvConfig":
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown env/reward keys: {sorted(unknown)}")
        kw = dict(block)
        if "home" in kw:
            kw["home"] = tuple(float(v) for v in kw["home"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RewardBreakdown:
    r_distance: float
    r_success: float
    r_progress: float
    p_singularity: float
    p_velocity: float
    total: float


def reward_total(r_distance, r_success, r_progress, p_singularity, p_velocity) -> float:
    return r_distance + r_success + r_progress - p_singularity - p_velocity


@dataclass
class EnvState:
    q: np.ndarray
    target: np.ndarray
    metrics: SingularityMetrics
    tcp: np.ndarray
    step_index: int = 0
    prev_distance: float = 0.0
    done: bool = True
    min_mu: float = field(default=math.inf)


class ReachEnv:
    """Not shareable across concurrent episodes."""

    def __init__(self, model: KinematicModel | None = None, cfg: EnvConfig | None = None,
                 ik_cfg: IkConfig | None = None):
        self.model = model or KinematicModel()
        self.cfg = cfg or EnvConfig()
        self.ik_cfg = ik_cfg or IkConfig()
        self.home = clamp_to_limits(self.model, joint_config(self.cfg.home))
        T, J = kernels.forward_and_jacobian(self.model.dh, self.home)
        self.home_tcp = T[:3, 3].copy()
        self.home_metrics = metrics_from_jacobian(J)
        self.state: EnvState | None = None

    def _sample_target(self, stage: CurriculumStage, rng: np.random.Generator) -> np.ndarray:
        if math.isinf(stage.target_radius):
            lo = self.cfg.workspace_inner
            hi = self.cfg.workspace_outer_frac * self.model.max_reach
            r = (lo ** 3 + rng.random() * (hi ** 3 - lo ** 3)) ** (1.0 / 3.0)
            centre = np.zeros(3)
        else:
            r = stage.target_radius * rng.random() ** (1.0 / 3.0)
            centre = self.home_tcp
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        return centre + r * d

    def reset(self, stage: CurriculumStage, rng: np.random.Generator) -> np.ndarray:
        for _ in range(self.cfg.max_rejections):
            target = self._sample_target(stage, rng)
            if solve_ik(self.model, target, self.ik_cfg) is not None:
                break
        else:
            raise SamplingExhausted(
                f"no IK-feasible target for stage {stage.index} after {self.cfg.max_rejections} draws")
        q = self.home.copy()
        dist = float(np.linalg.norm(target - self.home_tcp))
        self.state = EnvState(q, target, self.home_metrics, self.home_tcp.copy(), 0, dist, False,
                              self.home_metrics.mu)
        return self.observation()

    def observation(self) -> np.ndarray:
        s = self.state
        home = np.asarray(self.home)
        offset = (s.target - s.tcp) / self.cfg.offset_scale
        m = s.metrics
        return np.concatenate([
            np.clip((s.q - home) / math.pi, -1.0, 1.0),
            np.clip(offset, -1.0, 1.0),
            [
                np.clip(m.mu / 0.15 - 1.0, -1.0, 1.0),
                np.clip(math.log10(m.kappa) / 3.0 - 1.0, -1.0, 1.0),
                np.clip(m.sigma_min / 0.2 - 1.0, -1.0, 1.0),
            ],
        ])

    def step(self, action) -> tuple[np.ndarray, RewardBreakdown, bool, dict]:
        s = self.state
        if s is None or s.done:
            raise RuntimeError("step() called without an active episode")
        c = self.cfg
        a = np.clip(np.asarray(action, dtype=float), -c.v_max, c.v_max)
        s.q = clamp_to_limits(self.model, s.q + a * c.dt)
        T, J = kernels.forward_and_jacobian(self.model.dh, s.q)
        s.tcp = T[:3, 3].copy()
        s.metrics = metrics_from_jacobian(J)
        s.step_index += 1
        s.min_mu = min(s.min_mu, s.metrics.mu)
        dist = float(np.linalg.norm(s.target - s.tcp))
        success = dist < c.d_success
        singular = s.metrics.mu < c.mu_hard_stop
        timeout = s.step_index >= c.t_max

        r_distance = -c.w_distance * dist
        r_success = c.success_bonus if success else 0.0
        r_progress = c.w_progress * (s.prev_distance - dist)
        p_singularity = c.w_singularity * max(0.0, c.mu_safe - s.metrics.mu) / c.mu_safe
        p_velocity = c.w_velocity * float(np.mean(np.abs(a)))
        total = reward_total(r_distance, r_success, r_progress, p_singularity, p_velocity)
        reward = RewardBreakdown(r_distance, r_success, r_progress, p_singularity, p_velocity, total)

        s.prev_distance = dist
        done = success or singular or timeout
        s.done = done
        info = {
            "success": success,
            "singular": singular,
            "timeout": timeout and not (success or singular),
            "distance": dist,
            "mu": s.metrics.mu,
            "applied_action": a,
        }
        return self.observation(), reward, done, info
