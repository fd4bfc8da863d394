"""Command-line entry point.

Every subcommand prints one JSON record per line (``--format text`` gives a
readable variant). Exit status: 0 success, 1 domain failure (e.g. no safe IK
solution), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, load_config
from .fuzzy import mean_joint_speed
from .ik import solve_ik_report
from .monitor import SafetyMonitor
from .rl.env import CURRICULUM, ReachEnv
from .rl.train import evaluate, export_curves, load_agent, load_log, save_agent, save_log, train
from .scan import workspace_scan
from .service import MonitorServer, parse_hostport, serve_stream, serve_timed

log = logging.getLogger("singularguard")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {len(vals)}")
    return vals


def _emit(record: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "text":
        out.write("  ".join(f"{k}={v}" for k, v in record.items()) + "\n")
    else:
        out.write(json.dumps(record) + "\n")
    out.flush()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (default: $SINGULARGUARD_CONFIG or shipped defaults)")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="singularguard", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("solve-ik", parents=[common], help="singularity-aware inverse kinematics")
    s.add_argument("--target", required=True, type=lambda t: _floats(t, 3), help="x,y,z in metres")
    s.add_argument("--ranking", choices=("manipulability", "fuzzy"))

    s = sub.add_parser("assess", parents=[common], help="fuzzy safety assessment")
    s.add_argument("--mu", required=True, type=float)
    s.add_argument("--kappa", required=True, type=float)
    s.add_argument("--qdot", required=True, type=lambda t: _floats(t, 6))

    s = sub.add_parser("train", parents=[common], help="curriculum PPO training")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory")

    s = sub.add_parser("eval", parents=[common], help="greedy evaluation of trained parameters")
    s.add_argument("--params", required=True)
    s.add_argument("--episodes", type=int, default=50)
    s.add_argument("--stage", type=int, choices=(1, 2, 3, 4), default=1)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("monitor", parents=[common], help="safety monitor service")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--listen", metavar="HOST:PORT")
    g.add_argument("--stdin", action="store_true")
    s.add_argument("--hz", type=float, help="base monitoring frequency")
    s.add_argument("--mode", choices=("stream", "timed"), default="stream")

    s = sub.add_parser("workspace-scan", parents=[common], help="joint-space metric scan")
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--out", help="CSV output path")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quantile", type=float, help="propose filter thresholds at this quantile")

    s = sub.add_parser("export-curves", parents=[common], help="write learning curves from a training log")
    s.add_argument("--log", required=True)
    s.add_argument("--out", required=True)
    return p


def _cmd_solve_ik(args, cfg) -> int:
    ik_cfg = cfg.ik
    if args.ranking:
        from dataclasses import replace
        ik_cfg = replace(ik_cfg, ranking=args.ranking)
    scorer = lambda m: cfg.engine.assess_values(m.mu, m.kappa, 0.0).safety_score
    report = solve_ik_report(cfg.model, np.array(args.target), ik_cfg, scorer)
    if report.solution is None:
        _emit({"command": "solve-ik", "target": args.target, "solution": None, "reason": report.reason,
               "candidates": len(report.candidates)}, args.format)
        return EXIT_DOMAIN
    rec = {"command": "solve-ik", "target": args.target, **report.solution.to_dict()}
    _emit(rec, args.format)
    return EXIT_OK


def _cmd_assess(args, cfg) -> int:
    qdot = np.array(args.qdot)
    a = cfg.engine.assess_values(args.mu, args.kappa, mean_joint_speed(qdot))
    _emit({"command": "assess", **a.to_dict()}, args.format)
    return EXIT_OK


def _cmd_train(args, cfg) -> int:
    from dataclasses import replace
    tcfg = cfg.train
    if args.episodes is not None:
        tcfg = replace(tcfg, episodes=args.episodes)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    env = ReachEnv(cfg.model, cfg.env, cfg.ik)
    progress = lambda u: _emit({"command": "train", "event": "update", **u}, args.format)
    t0 = time.perf_counter()
    agent, tlog = train(env, tcfg, progress=progress)
    export_curves(tlog, out / "curves.csv")
    save_agent(agent, out / "params.txt")
    save_log(tlog, out / "log.json")
    _emit({"command": "train", "event": "done", "episodes": tcfg.episodes, "seed": tcfg.seed,
           "final_stage": tlog.episode_stage[-1], "stage_advances": tlog.stage_advances,
           "rollbacks": tlog.rollbacks, "seconds": round(time.perf_counter() - t0, 2),
           "out": str(out)}, args.format)
    return EXIT_OK


def _cmd_eval(args, cfg) -> int:
    agent = load_agent(args.params, cfg.ppo)
    env = ReachEnv(cfg.model, cfg.env, cfg.ik)
    rep = evaluate(agent, env, args.episodes, np.random.default_rng(args.seed), CURRICULUM[args.stage - 1])
    _emit({"command": "eval", **rep.to_dict()}, args.format)
    return EXIT_OK


def _cmd_monitor(args, cfg) -> int:
    from dataclasses import replace
    mcfg = cfg.monitor if args.hz is None else replace(cfg.monitor, f_monitor=args.hz)
    if args.stdin:
        monitor = SafetyMonitor(cfg.model, cfg.engine, mcfg)
        write = lambda text: (sys.stdout.write(text), sys.stdout.flush())
        if args.mode == "timed":
            serve_timed(monitor, sys.stdin, write)
        else:
            serve_stream(monitor, sys.stdin, write)
        return EXIT_OK
    host, port = parse_hostport(args.listen)
    server = MonitorServer((host, port), cfg.model, cfg.engine, mcfg, args.mode)
    _emit({"command": "monitor", "listening": f"{server.server_address[0]}:{server.server_address[1]}",
           "mode": args.mode, "hz": mcfg.f_monitor}, args.format)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        while thread.is_alive():
            thread.join(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


def _cmd_scan(args, cfg) -> int:
    report = workspace_scan(cfg.model, args.samples, args.out, args.seed, cfg.thresholds, cfg.monitor,
                            args.quantile)
    _emit({"command": "workspace-scan", "out": args.out, **report.to_dict()}, args.format)
    return EXIT_OK


def _cmd_export(args, cfg) -> int:
    tlog = load_log(args.log)
    export_curves(tlog, args.out)
    _emit({"command": "export-curves", "rows": len(tlog.updates), "out": args.out}, args.format)
    return EXIT_OK


COMMANDS = {
    "solve-ik": _cmd_solve_ik,
    "assess": _cmd_assess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "monitor": _cmd_monitor,
    "workspace-scan": _cmd_scan,
    "export-curves": _cmd_export,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"singularguard: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"singularguard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
