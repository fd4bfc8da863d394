"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary of a full run.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from emergency_table import load_cases
from singularguard import kernels
from singularguard.ik import HOME, IkConfig, solve_ik
from singularguard.kinematics import compute_jacobian, forward_kinematics, sample_configs
from singularguard.metrics import compute_metrics
from singularguard.monitor import MonitorConfig, SafetyMonitor, emergency_decision, monitor_loop
from singularguard.rl.env import CURRICULUM, ReachEnv
from singularguard.rl.nets import log_prob
from singularguard.rl.ppo import PPOAgent, PPOConfig
from singularguard.rl.train import TrainConfig, evaluate, train

GOLDEN = Path(__file__).parent / "data" / "fuzzy_core_grid.csv"
SAFEST = {"manipulability": "very_high", "condition_quality": "excellent", "velocity": "very_slow"}


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_metric_oracle(model):
    t0 = time.perf_counter()
    qs = sample_configs(model, 1000, np.random.default_rng(2024))
    worst_mu = worst_kappa = 0.0
    for q in qs:
        m = compute_metrics(model, q)
        s = np.linalg.svd(compute_jacobian(model, q), compute_uv=False)
        worst_mu = max(worst_mu, abs(m.mu - np.prod(s)) / np.prod(s))
        worst_kappa = max(worst_kappa, abs(m.kappa - s[0] / s[-1]) / (s[0] / s[-1]))
    dt = time.perf_counter() - t0
    verdict(1, worst_mu <= 1e-8 and worst_kappa <= 1e-10 and dt < 5,
            f"max rel err mu {worst_mu:.2e} (<=1e-8), kappa {worst_kappa:.2e} (<=1e-10), {dt:.2f}s (<5s)")


def test_criterion_2_jacobian_fd(model):
    t0 = time.perf_counter()
    h = 1e-6
    worst = 0.0
    for q in sample_configs(model, 100, np.random.default_rng(7)):
        J = compute_jacobian(model, q)
        R = forward_kinematics(model, q).orientation
        for i in range(6):
            dq = np.zeros(6)
            dq[i] = h
            p1, R1 = forward_kinematics(model, q + dq)
            p0, R0 = forward_kinematics(model, q - dq)
            W = (R1 - R0) / (2 * h) @ R.T
            col = np.concatenate([(p1 - p0) / (2 * h), [W[2, 1], W[0, 2], W[1, 0]]])
            worst = max(worst, float(np.max(np.abs(col - J[:, i]))))
    dt = time.perf_counter() - t0
    verdict(2, worst <= 1e-5 and dt < 5,
            f"max elementwise error {worst:.2e} (<=1e-5) over 100 configs, {dt:.2f}s (<5s)")


def test_criterion_3_fuzzy_golden(engine):
    t0 = time.perf_counter()
    cores = {n: v.cores() for n, v in engine.variables.items()}
    with open(GOLDEN) as fh:
        rows = list(csv.DictReader(l for l in fh if not l.startswith("#")))
    grid_bad = 0
    for r in rows:
        a = engine.assess_values(cores["manipulability"][r["mu_term"]],
                                 cores["condition_quality"][r["kappa_term"]],
                                 cores["velocity"][r["velocity_term"]])
        grid_bad += a.classification.name != r["classification"]
    rule_bad = []
    for rule in engine.rules[:23]:
        cell = {**SAFEST, **dict(rule.conditions)}
        x = [cores[n][cell[n]] for n in ("manipulability", "condition_quality", "velocity")]
        fired = rule.strength(engine.fuzzify(*x)) == rule.weight
        a = engine.assess_values(*x)
        if not (fired and a.activations[rule.conclusion] >= rule.weight and a.classification <= rule.conclusion):
            rule_bad.append(rule.rule_id)
    dt = time.perf_counter() - t0
    verdict(3, len(rows) == 125 and grid_bad == 0 and not rule_bad and dt < 1,
            f"{125 - grid_bad}/{len(rows)} grid cells match, explicit rules failing: {rule_bad or 'none'}, "
            f"{dt:.3f}s (<1s)")


def test_criterion_4_emergency_truth_table():
    t0 = time.perf_counter()
    cases = load_cases()
    bad = 0
    for i, (mu, kappa, v, expected) in enumerate(cases):
        qdot = np.zeros(6)
        qdot[i % 6] = -v if i % 2 else v
        bad += emergency_decision(mu, kappa, qdot).action.value != expected
    c = MonitorConfig()
    consts = (c.mu_stop, c.kappa_stop, c.mu_critical, c.kappa_critical, c.v_stop, c.mu_warning, c.kappa_warning)
    dt = time.perf_counter() - t0
    verdict(4, len(cases) >= 200 and bad == 0 and consts == (0.005, 500, 0.01, 100, 0.5, 0.05, 50) and dt < 1,
            f"{len(cases) - bad}/{len(cases)} boundary cases match, constants {consts}, {dt:.3f}s (<1s)")


def test_criterion_5_ik_round_trip(model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    cfg = IkConfig()
    t = cfg.thresholds
    targets = []
    while len(targets) < 200:
        q = sample_configs(model, 1, rng)[0]
        if compute_metrics(model, q).mu >= 0.05:
            targets.append(forward_kinematics(model, q).position)
    ok = 0
    violations = 0
    for target in targets:
        sol = solve_ik(model, target, cfg)
        if sol is None:
            continue
        ok += 1
        m = compute_metrics(model, sol.q)
        res = np.linalg.norm(forward_kinematics(model, sol.q).position - target)
        if not (res <= 1e-3 and m.mu >= t.mu_threshold and m.kappa <= t.kappa_threshold
                and m.sigma_min >= t.sigma_threshold):
            violations += 1
    dt = time.perf_counter() - t0
    verdict(5, ok / 200 >= 0.95 and violations == 0 and dt < 60,
            f"success {ok}/200 (>=95%), solutions violating residual/filters: {violations}, {dt:.1f}s (<60s)")


@pytest.fixture(scope="module")
def training_run(model):
    env = ReachEnv(model)
    t0 = time.perf_counter()
    agent, log = train(env, TrainConfig(episodes=2000, seed=0, start_stage=1))
    return env, agent, log, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_training(training_run):
    env, agent, log, dt = training_run
    s = np.array(log.episode_success, dtype=float)
    stage1 = [i for i, st in enumerate(log.episode_stage) if st == 1]
    rolling = [s[max(0, i - 19):i + 1].mean() for i in range(19, len(s))]
    best = max(rolling)
    vloss = [u["value_loss"] for u in log.updates if math.isfinite(u["value_loss"])]
    advanced = any(a["stage"] == 2 for a in log.stage_advances)
    ok = (best >= 0.60 and advanced and vloss[-1] < vloss[0] and log.nonfinite_params == 0
          and log.rollbacks == 0 and dt < 600)
    verdict(6, ok,
            f"max rolling-20 success {best:.2f} (>=0.60), stage 2 reached: {advanced} "
            f"(episode {log.stage_advances[0]['episode'] if log.stage_advances else '-'}, "
            f"{len(stage1)} stage-1 episodes), value loss {vloss[0]:.1f} -> {vloss[-1]:.1f}, "
            f"non-finite updates {log.nonfinite_params}, {dt:.0f}s (<600s)")


@pytest.mark.slow
def test_criterion_7_safety_during_learning(training_run):
    env, agent, log, _ = training_run
    rep = evaluate(agent, env, 50, np.random.default_rng(100), CURRICULUM[0])
    baseline = evaluate(None, env, 50, np.random.default_rng(100), CURRICULUM[0], random_policy=True)
    ok = log.unterminated_singular_steps == 0 and rep.min_mu > 0.005
    verdict(7, ok,
            f"unterminated mu<0.005 steps {log.unterminated_singular_steps} (==0), "
            f"eval min mu {rep.min_mu:.4f} (>0.005) over 50 episodes; eval success {rep.success_rate:.2f} "
            f"vs random {baseline.success_rate:.2f}")
    assert rep.success_rate > baseline.success_rate


def test_criterion_8_monitor_timing(model, engine):
    rng = np.random.default_rng(0)
    warning_q = None
    for q in sample_configs(model, 5000, rng):
        m = compute_metrics(model, q)
        if 0.01 <= m.mu < 0.05 and m.kappa <= 100:
            warning_q = q
            break
    assert warning_q is not None
    mon = SafetyMonitor(model, engine)
    stamps, actions = [], []
    tick = [0]

    def source():
        i = tick[0]
        tick[0] += 1
        return (HOME if i < 100 else warning_q), np.zeros(6)

    def sink(ev):
        stamps.append(time.monotonic())
        actions.append(ev.action.value)

    t0 = time.perf_counter()
    monitor_loop(source, sink, mon, max_ticks=103)
    dt = time.perf_counter() - t0
    gaps = np.diff(stamps) * 1000
    safe_gaps = gaps[:99]
    warn_gap = gaps[100]
    ok = (all(a == "NORMAL" for a in actions[:100]) and actions[100] == "WARNING"
          and np.all(np.abs(safe_gaps - 100) <= 10) and abs(warn_gap - 50) <= 5
          and np.all(np.abs(gaps[101:] - 50) <= 5) and dt < 15)
    verdict(8, ok,
            f"safe spacing {safe_gaps.min():.1f}-{safe_gaps.max():.1f} ms (100+/-10), "
            f"first spacing after WARNING {warn_gap:.1f} ms (50), {dt:.1f}s (<15s)")


def test_criterion_9_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    agent = PPOAgent(2, 1, PPOConfig(hidden=(6, 5)), rng)
    agent.pi["W2"] = rng.standard_normal(agent.pi["W2"].shape)
    obs = rng.standard_normal((20, 2))
    mean = agent.policy.mean(agent.pi, obs)
    act = mean + 0.4 * rng.standard_normal(mean.shape)
    logp_old = log_prob(act, mean, agent.pi["log_std"]) + rng.uniform(-0.05, 0.05, 20)
    adv = rng.standard_normal(20)
    ret = 30 * rng.standard_normal(20)

    def worst_rel(loss_fn, params, grads, h=1e-6):
        worst = 0.0
        for k, v in params.items():
            for idx in np.ndindex(v.shape):
                old = v[idx]
                v[idx] = old + h
                up = loss_fn(params)
                v[idx] = old - h
                dn = loss_fn(params)
                v[idx] = old
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - grads[k][idx]) / max(abs(fd), abs(grads[k][idx]), 1e-6))
        return worst

    pf = lambda p: agent.policy_loss_and_grads(p, obs, act, logp_old, adv)[0]
    vf = lambda p: agent.value_loss_and_grads(p, obs, ret)[0]
    wp = worst_rel(pf, agent.pi, agent.policy_loss_and_grads(agent.pi, obs, act, logp_old, adv)[1])
    wv = worst_rel(vf, agent.vf, agent.value_loss_and_grads(agent.vf, obs, ret)[1])
    dt = time.perf_counter() - t0
    verdict(9, wp <= 1e-4 and wv <= 1e-4 and dt < 5,
            f"max rel err policy {wp:.2e}, value {wv:.2e} (<=1e-4), backend {kernels.BACKEND}, {dt:.2f}s (<5s)")
