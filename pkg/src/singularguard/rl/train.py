"""Curriculum PPO training, greedy evaluation and learning-curve export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .env import ACT_DIM, CURRICULUM, OBS_DIM, CurriculumStage, ReachEnv
from .nets import all_finite, load_params, save_params
from .ppo import Batch, DivergedUpdate, PPOAgent, PPOConfig, gae

log = logging.getLogger(__name__)

CURVES_SCHEMA_VERSION = 1
CURVE_COLUMNS = ("update_index", "episode", "policy_loss", "value_loss", "rolling_success", "stage")
MAX_CONSECUTIVE_ROLLBACKS = 3


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    update_every: int = 8
    buffer_capacity: int = 20
    rolling_window: int = 20
    seed: int = 0
    start_stage: int = 1
    ppo: PPOConfig = field(default_factory=PPOConfig)

    def __post_init__(self):
        if self.episodes < 1 or self.update_every < 1 or self.buffer_capacity < 1:
            raise ValueError("episodes, update_every and buffer_capacity must be positive")
        if not 1 <= self.start_stage <= len(CURRICULUM):
            raise ValueError("start_stage must be 1-4")


@dataclass
class TrainingLog:
    episode_reward: list[float] = field(default_factory=list)
    episode_success: list[bool] = field(default_factory=list)
    episode_stage: list[int] = field(default_factory=list)
    episode_steps: list[int] = field(default_factory=list)
    episode_min_mu: list[float] = field(default_factory=list)
    updates: list[dict] = field(default_factory=list)
    stage_advances: list[dict] = field(default_factory=list)
    rollbacks: int = 0
    singular_steps: int = 0
    unterminated_singular_steps: int = 0
    nonfinite_params: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingLog":
        return cls(**d)


def _rolling(successes, window: int) -> float:
    tail = successes[-window:]
    return float(np.mean(tail)) if tail else 0.0


def train(env: ReachEnv, cfg: TrainConfig, agent: PPOAgent | None = None,
          progress=None) -> tuple[PPOAgent, TrainingLog]:
    """Curriculum training. A single seeded generator drives every random draw."""
    rng = np.random.default_rng(cfg.seed)
    agent = agent or PPOAgent(OBS_DIM, ACT_DIM, cfg.ppo, rng)
    tlog = TrainingLog()
    stage_idx = cfg.start_stage - 1
    buffer: deque[bool] = deque(maxlen=cfg.buffer_capacity)
    pending: list[dict] = []
    consecutive_rollbacks = 0
    v_max = env.cfg.v_max

    for episode in range(1, cfg.episodes + 1):
        stage = CURRICULUM[stage_idx]
        obs = env.reset(stage, rng)
        traj = {"obs": [], "act": [], "logp": [], "rew": [], "terminal": False, "last_obs": None}
        ep_reward = 0.0
        success = False
        for _ in range(env.cfg.t_max):
            action, logp = agent.act(obs, rng)
            next_obs, reward, done, info = env.step(action * v_max)
            traj["obs"].append(obs)
            traj["act"].append(action)
            traj["logp"].append(logp)
            traj["rew"].append(reward.total)
            ep_reward += reward.total
            if info["singular"]:
                tlog.singular_steps += 1
                if not done:
                    tlog.unterminated_singular_steps += 1
            obs = next_obs
            if done:
                success = bool(info["success"])
                traj["terminal"] = bool(info["success"] or info["singular"])
                break
        traj["last_obs"] = obs
        pending.append(traj)
        buffer.append(success)
        tlog.episode_reward.append(ep_reward)
        tlog.episode_success.append(success)
        tlog.episode_stage.append(stage.index)
        tlog.episode_steps.append(len(traj["rew"]))
        tlog.episode_min_mu.append(env.state.min_mu)

        if episode % cfg.update_every == 0:
            batch = build_batch(agent, pending, cfg.ppo)
            pending = []
            try:
                pl, vl = agent.update(batch, rng)
                consecutive_rollbacks = 0
            except DivergedUpdate:
                tlog.rollbacks += 1
                consecutive_rollbacks += 1
                log.warning("PPO update at episode %d diverged; rolled back (%d in a row)",
                            episode, consecutive_rollbacks)
                if consecutive_rollbacks >= MAX_CONSECUTIVE_ROLLBACKS:
                    raise
                pl = vl = math.nan
            if not (all_finite(agent.pi) and all_finite(agent.vf)):
                tlog.nonfinite_params += 1
            tlog.updates.append({
                "update_index": len(tlog.updates),
                "episode": episode,
                "policy_loss": pl,
                "value_loss": vl,
                "rolling_success": _rolling(tlog.episode_success, cfg.rolling_window),
                "stage": stage.index,
            })
            if progress is not None:
                progress(tlog.updates[-1])

        if (len(buffer) == cfg.buffer_capacity and np.mean(buffer) >= stage.success_threshold
                and stage_idx < len(CURRICULUM) - 1):
            stage_idx += 1
            buffer.clear()
            tlog.stage_advances.append({"episode": episode, "stage": stage_idx + 1})
            log.info("Advanced to curriculum stage %d at episode %d", stage_idx + 1, episode)

    return agent, tlog


def build_batch(agent: PPOAgent, trajectories: list[dict], cfg: PPOConfig) -> Batch:
    obs_all, act_all, logp_all, adv_all, ret_all = [], [], [], [], []
    for traj in trajectories:
        obs = np.array(traj["obs"])
        values = agent.values(obs)
        last_value = 0.0 if traj["terminal"] else float(agent.values(traj["last_obs"][None, :])[0])
        adv, ret = gae(np.array(traj["rew"]), values, last_value, traj["terminal"],
                       cfg.gamma, cfg.gae_lambda)
        obs_all.append(obs)
        act_all.append(np.array(traj["act"]))
        logp_all.append(np.array(traj["logp"]))
        adv_all.append(adv)
        ret_all.append(ret)
    return Batch(np.concatenate(obs_all), np.concatenate(act_all), np.concatenate(logp_all),
                 np.concatenate(adv_all), np.concatenate(ret_all))


@dataclass(frozen=True)
class SuccessReport:
    episodes: int
    success_rate: float
    mean_final_distance: float
    min_mu: float
    stage: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(agent: PPOAgent | None, env: ReachEnv, episodes: int, rng: np.random.Generator,
             stage: CurriculumStage = CURRICULUM[0], random_policy: bool = False) -> SuccessReport:
    """Greedy (mean-action) rollouts; ``random_policy`` samples uniform actions instead."""
    successes, finals, min_mu = 0, [], math.inf
    for _ in range(episodes):
        obs = env.reset(stage, rng)
        info = {"distance": env.state.prev_distance, "success": False}
        for _ in range(env.cfg.t_max):
            if random_policy:
                action = rng.uniform(-1.0, 1.0, ACT_DIM)
            else:
                action = agent.act_greedy(obs)
            obs, _, done, info = env.step(action * env.cfg.v_max)
            if done:
                break
        successes += bool(info["success"])
        finals.append(info["distance"])
        min_mu = min(min_mu, env.state.min_mu)
    return SuccessReport(episodes, successes / episodes, float(np.mean(finals)), min_mu, stage.index)


def export_curves(tlog: TrainingLog, path: str | Path) -> None:
    buf = io.StringIO()
    buf.write(f"# schema_version: {CURVES_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for row in tlog.updates:
        writer.writerow([row["update_index"], row["episode"], repr(row["policy_loss"]),
                         repr(row["value_loss"]), repr(row["rolling_success"]), row["stage"]])
    Path(path).write_text(buf.getvalue())


def save_log(tlog: TrainingLog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tlog.to_dict()) + "\n")


def load_log(path: str | Path) -> TrainingLog:
    return TrainingLog.from_dict(json.loads(Path(path).read_text()))


def save_agent(agent: PPOAgent, path: str | Path) -> None:
    meta = {"obs_dim": OBS_DIM, "act_dim": ACT_DIM,
            "hidden": ",".join(str(h) for h in agent.cfg.hidden),
            "value_scale": repr(agent.cfg.value_scale)}
    save_params(path, {"policy": agent.pi, "value": agent.vf}, meta)


def load_agent(path: str | Path, cfg: PPOConfig | None = None) -> PPOAgent:
    groups, meta = load_params(path)
    hidden = tuple(int(h) for h in meta.get("hidden", "64,64").split(","))
    base = cfg or PPOConfig()
    kw = base.to_dict()
    kw["hidden"] = hidden
    if "value_scale" in meta:
        kw["value_scale"] = float(meta["value_scale"])
    agent = PPOAgent(int(meta.get("obs_dim", OBS_DIM)), int(meta.get("act_dim", ACT_DIM)),
                     PPOConfig.from_dict(kw), np.random.default_rng(0))
    agent.pi = groups["policy"]
    agent.vf = groups["value"]
    return agent
