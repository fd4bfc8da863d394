"""Application configuration: one YAML file with one block per subsystem."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .fuzzy import FuzzyEngine, load_engine
from .ik import IkConfig
from .kinematics import KinematicModel
from .metrics import Thresholds
from .monitor import MonitorConfig
from .rl.env import EnvConfig
from .rl.ppo import PPOConfig
from .rl.train import TrainConfig

ENV_VAR = "SINGULARGUARD_CONFIG"
TOP_LEVEL_KEYS = {"schema_version", "kinematics", "thresholds", "fuzzy", "ik", "env", "ppo",
                  "train", "monitor", "output_dir"}
TRAIN_KEYS = {"episodes", "update_every", "buffer_capacity", "rolling_window", "seed", "start_stage"}


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    model: KinematicModel
    thresholds: Thresholds
    engine: FuzzyEngine
    ik: IkConfig
    env: EnvConfig
    ppo: PPOConfig
    train: TrainConfig
    monitor: MonitorConfig
    output_dir: Path
    rules_path: str | None = None
    source: str = field(default="<default>")


def _default_data() -> dict:
    return yaml.safe_load(resources.files("singularguard.data").joinpath("default_config.yaml").read_text())


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def build_config(data: dict, source: str = "<dict>") -> AppConfig:
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown top-level keys {sorted(unknown)}")
    try:
        model = KinematicModel.from_dict(data.get("kinematics") or {})
        thresholds = Thresholds.from_dict(data.get("thresholds") or {})
        fuzzy_block = data.get("fuzzy") or {}
        if set(fuzzy_block) - {"rules"}:
            raise ConfigError(f"{source}: unknown fuzzy keys {sorted(set(fuzzy_block) - {'rules'})}")
        rules_path = fuzzy_block.get("rules")
        if rules_path is not None and not Path(rules_path).is_absolute() and source not in ("<default>", "<dict>"):
            rules_path = str(Path(source).parent / rules_path)
        engine = load_engine(rules_path)
        ik = IkConfig.from_dict(data.get("ik") or {}, thresholds)
        env = EnvConfig.from_dict(data.get("env") or {})
        ppo = PPOConfig.from_dict(data.get("ppo") or {})
        train_block = data.get("train") or {}
        if set(train_block) - TRAIN_KEYS:
            raise ConfigError(f"{source}: unknown train keys {sorted(set(train_block) - TRAIN_KEYS)}")
        train = TrainConfig(ppo=ppo, **train_block)
        monitor = MonitorConfig.from_dict(data.get("monitor") or {})
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return AppConfig(model, thresholds, engine, ik, env, ppo, train, monitor,
                     Path(data.get("output_dir") or "runs"), rules_path, source)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Shipped defaults, overlaid with ``path`` (or ``$SINGULARGUARD_CONFIG``) when given."""
    data = _default_data()
    source = "<default>"
    path = path or os.environ.get(ENV_VAR) or None
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(user) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
        data = _merge(data, user)
        kin = user.get("kinematics") or {}
        if "dh" in kin and "max_reach" not in kin:
            # stored reach belongs to the default table; re-derive for the new one
            data["kinematics"].pop("max_reach", None)
        source = str(path)
    return build_config(data, source)
