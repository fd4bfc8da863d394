"""PPO with a clipped surrogate, GAE, gradient-norm clipping and rollback.

A non-finite parameter after an update restores the pre-update snapshot,
halves both learning rates and raises :class:`DivergedUpdate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .nets import (Adam, GaussianPolicy, MLP, all_finite, clamp_log_std, clip_grad_norm,
                   log_prob)


class DivergedUpdate(RuntimeError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    clip_ratio: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 3e-4
    value_lr: float = 3e-4
    value_scale: float = 50.0
    max_grad_norm: float = 0.5
    entropy_coef: float = 0.0
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = -0.5
    normalize_advantages: bool = True

    @classmethod
    def from_dict(cls, block: dict) -> "PPOConfig":
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ppo keys: {sorted(unknown)}")
        kw = dict(block)
        if "hidden" in kw:
            kw["hidden"] = tuple(int(h) for h in kw["hidden"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.obs)


def gae(rewards: np.ndarray, values: np.ndarray, last_value: float, terminal: bool,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one episode. ``last_value`` bootstraps a truncated episode."""
    n = len(rewards)
    adv = np.zeros(n)
    nxt = 0.0 if terminal else last_value
    running = 0.0
    for t in reversed(range(n)):
        delta = rewards[t] + gamma * nxt - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        nxt = values[t]
    return adv, adv + values


class PPOAgent:
    def __init__(self, obs_dim: int, act_dim: int, cfg: PPOConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.policy = GaussianPolicy(obs_dim, act_dim, cfg.hidden, cfg.init_log_std)
        self.value_net = MLP([obs_dim, *cfg.hidden, 1])
        self.pi = self.policy.init_params(rng)
        self.vf = self.value_net.init_params(rng, out_scale=1.0 / math.sqrt(cfg.hidden[-1]))
        self.pi_opt = Adam(self.pi, cfg.lr)
        self.vf_opt = Adam(self.vf, cfg.value_lr)

    # -- acting ---------------------------------------------------------------
    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        a, lp = self.policy.sample(self.pi, obs[None, :], rng)
        return a[0], float(lp[0])

    def act_greedy(self, obs: np.ndarray) -> np.ndarray:
        return self.policy.mean(self.pi, obs[None, :])[0]

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.cfg.value_scale * self.value_net.forward(self.vf, obs)[0][:, 0]

    # -- losses and gradients ------------------------------------------------
    def policy_loss_and_grads(self, pi: dict, obs, actions, logp_old, adv):
        """Clipped-surrogate loss (to minimize) and its gradient w.r.t. ``pi``."""
        eps = self.cfg.clip_ratio
        mean, cache = self.policy.net.forward(pi, obs)
        log_std = pi["log_std"]
        logp = log_prob(actions, mean, log_std)
        ratio = np.exp(logp - logp_old)
        unclipped = ratio * adv
        clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
        n = len(obs)
        entropy = float(np.sum(log_std + 0.5 * math.log(2 * math.pi * math.e)))
        loss = -float(np.mean(np.minimum(unclipped, clipped))) - self.cfg.entropy_coef * entropy
        # gradient flows only where the unclipped branch is the active minimum
        active = (unclipped <= clipped) | ((ratio >= 1 - eps) & (ratio <= 1 + eps))
        dlogp = np.where(active, -adv * ratio / n, 0.0)
        inv_var = np.exp(-2 * log_std)
        diff = actions - mean
        dmean = dlogp[:, None] * diff * inv_var
        dlog_std = np.sum(dlogp[:, None] * (diff ** 2 * inv_var - 1.0), axis=0)
        dlog_std -= self.cfg.entropy_coef
        grads = self.policy.net.backward(pi, cache, dmean)
        grads["log_std"] = dlog_std
        return loss, grads

    def value_loss_and_grads(self, vf: dict, obs, returns):
        # the head predicts return / value_scale; the loss is in return units
        scale = self.cfg.value_scale
        out, cache = self.value_net.forward(vf, obs)
        err = scale * out[:, 0] - returns
        loss = float(np.mean(err ** 2))
        dout = (2.0 * scale * err / len(obs))[:, None]
        return loss, self.value_net.backward(vf, cache, dout)

    # -- update ---------------------------------------------------------------
    def snapshot(self):
        return ({k: v.copy() for k, v in self.pi.items()}, {k: v.copy() for k, v in self.vf.items()},
                self.pi_opt.state(), self.vf_opt.state())

    def restore(self, snap) -> None:
        pi, vf, pi_state, vf_state = snap
        self.pi = {k: v.copy() for k, v in pi.items()}
        self.vf = {k: v.copy() for k, v in vf.items()}
        self.pi_opt.restore(pi_state)
        self.vf_opt.restore(vf_state)

    def update(self, batch: Batch, rng: np.random.Generator) -> tuple[float, float]:
        """One PPO update; returns mean (policy_loss, value_loss) over its minibatches."""
        return ppo_update(self, batch, rng)


def ppo_update(agent: PPOAgent, batch: Batch, rng: np.random.Generator) -> tuple[float, float]:
    if len(batch) == 0:
        raise ValueError("empty batch")
    cfg = agent.cfg
    snap = agent.snapshot()
    adv = batch.advantages
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    p_losses, v_losses = [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            pl, pg = agent.policy_loss_and_grads(agent.pi, batch.obs[idx], batch.actions[idx],
                                                 batch.logp_old[idx], adv[idx])
            pg, _ = clip_grad_norm(pg, cfg.max_grad_norm)
            agent.pi_opt.step(agent.pi, pg)
            clamp_log_std(agent.pi)
            vl, vg = agent.value_loss_and_grads(agent.vf, batch.obs[idx], batch.returns[idx])
            vg, _ = clip_grad_norm(vg, cfg.max_grad_norm)
            agent.vf_opt.step(agent.vf, vg)
            p_losses.append(pl)
            v_losses.append(vl)
    if not (all_finite(agent.pi) and all_finite(agent.vf)):
        agent.restore(snap)
        agent.pi_opt.lr *= 0.5
        agent.vf_opt.lr *= 0.5
        raise DivergedUpdate("non-finite parameters after PPO update; rolled back")
    return float(np.mean(p_losses)), float(np.mean(v_losses))
