"""Emergency decision tree and the periodic safety-monitoring loop."""

from __future__ import annotations

import enum
import logging
import math
import threading
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import kernels
from .fuzzy import FuzzyEngine, SafetyAssessment
from .kinematics import KinematicModel
from .metrics import SingularityMetrics, metrics_from_jacobian

log = logging.getLogger(__name__)


class Action(str, enum.Enum):
    EMERGENCY_STOP = "EMERGENCY_STOP"
    CRITICAL_WARNING = "CRITICAL_WARNING"
    WARNING = "WARNING"
    NORMAL = "NORMAL"


SEVERITY = {
    Action.EMERGENCY_STOP: "critical",
    Action.CRITICAL_WARNING: "high",
    Action.WARNING: "elevated",
    Action.NORMAL: "info",
}


@dataclass(frozen=True)
class MonitorConfig:
    f_monitor: float = 10.0
    f_elevated: float = 20.0
    v_threshold: float = 0.8
    mu_stop: float = 0.005
    kappa_stop: float = 500.0
    mu_critical: float = 0.01
    kappa_critical: float = 100.0
    v_stop: float = 0.5
    mu_warning: float = 0.05
    kappa_warning: float = 50.0
    critical_velocity_scale: float = 0.10
    warning_velocity_scale: float = 0.50
    deescalate_after: int = 10
    stale_after: int = 3

    def __post_init__(self):
        if not (self.f_monitor > 0 and self.f_elevated > 0):
            raise ValueError("monitor frequencies must be positive")

    @classmethod
    def from_dict(cls, block: dict) -> "MonitorConfig":
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown monitor keys: {sorted(unknown)}")
        return cls(**block)


@dataclass(frozen=True)
class EmergencyAction:
    action: Action
    velocity_scale: float | None = None
    monitor_hz: float | None = None

    @property
    def severity(self) -> str:
        return SEVERITY[self.action]

    @property
    def notify_operator(self) -> bool:
        return self.action is Action.EMERGENCY_STOP


def emergency_decision(mu: float, kappa: float, qdot, cfg: MonitorConfig | None = None) -> EmergencyAction:
    """First matching tier wins."""
    c = cfg or MonitorConfig()
    if mu < c.mu_stop or kappa > c.kappa_stop:
        return EmergencyAction(Action.EMERGENCY_STOP)
    if mu < c.mu_critical or kappa > c.kappa_critical:
        if float(np.max(np.abs(qdot))) > c.v_stop:
            return EmergencyAction(Action.EMERGENCY_STOP)
        return EmergencyAction(Action.CRITICAL_WARNING, velocity_scale=c.critical_velocity_scale)
    if mu < c.mu_warning or kappa > c.kappa_warning:
        return EmergencyAction(Action.WARNING, velocity_scale=c.warning_velocity_scale,
                               monitor_hz=c.f_elevated)
    return EmergencyAction(Action.NORMAL)


def _num(x):
    return float(x) if x is not None and math.isfinite(x) else None


@dataclass(frozen=True)
class MonitorEvent:
    ts: float
    q: tuple
    qdot: tuple
    tcp: tuple | None
    metrics: SingularityMetrics | None
    assessment: SafetyAssessment | None
    decision: EmergencyAction
    velocity_warning: bool
    monitor_hz: float
    data_fault: bool = False
    stale: bool = False
    tick: int = 0

    @property
    def action(self) -> Action:
        return self.decision.action

    def to_dict(self) -> dict:
        m = self.metrics
        d = {
            "ts": self.ts,
            "tick": self.tick,
            "tcp": [float(v) for v in self.tcp] if self.tcp is not None else None,
            "mu": _num(m.mu) if m else None,
            "kappa": _num(m.kappa) if m else None,
            "sigma_min": _num(m.sigma_min) if m else None,
            "safety_level": self.assessment.classification.name if self.assessment else None,
            "safety_score": self.assessment.safety_score if self.assessment else None,
            "action": self.decision.action.value,
            "severity": self.decision.severity,
            "notify_operator": self.decision.notify_operator,
            "velocity_warning": self.velocity_warning,
            "monitor_hz": self.monitor_hz,
            "data_fault": self.data_fault,
            "stale": self.stale,
            "q": [_num(v) for v in self.q],
            "qdot": [_num(v) for v in self.qdot],
        }
        if self.decision.velocity_scale is not None:
            d["velocity_scale"] = self.decision.velocity_scale
        return d


class SourceClosed(Exception):
    """Raised by a state source when no more samples will arrive."""


class SafetyMonitor:
    """Per-session state: evaluates samples and tracks the tick frequency.

    Any non-NORMAL decision switches to the elevated frequency; it drops back
    after ``deescalate_after`` consecutive NORMAL ticks.
    """

    def __init__(self, model: KinematicModel, engine: FuzzyEngine, cfg: MonitorConfig | None = None,
                 clock: Callable[[], float] = time.time):
        self.model = model
        self.engine = engine
        self.cfg = cfg or MonitorConfig()
        self.clock = clock
        self.hz = self.cfg.f_monitor
        self._normal_run = 0
        self.ticks = 0

    def evaluate(self, q, qdot, stale: bool = False) -> MonitorEvent:
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        ts = self.clock()
        if q.shape != (6,) or qdot.shape != (6,) or not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            decision = EmergencyAction(Action.EMERGENCY_STOP)
            log.error("non-finite or malformed joint sample; emergency stop")
            event = MonitorEvent(ts, tuple(q.ravel()[:6]), tuple(qdot.ravel()[:6]), None, None, None,
                                 decision, False, self.hz, data_fault=True, stale=stale, tick=self.ticks)
        else:
            T, J = kernels.forward_and_jacobian(self.model.dh, np.ascontiguousarray(q))
            metrics = metrics_from_jacobian(J)
            assessment = self.engine.assess(metrics, qdot)
            decision = emergency_decision(metrics.mu, metrics.kappa, qdot, self.cfg)
            vel_warn = float(np.max(np.abs(qdot))) > self.cfg.v_threshold
            event = MonitorEvent(ts, tuple(q), tuple(qdot), tuple(T[:3, 3]), metrics, assessment,
                                 decision, vel_warn, self.hz, stale=stale, tick=self.ticks)
            if decision.action is Action.EMERGENCY_STOP:
                log.critical("singularity emergency stop: mu=%.5g kappa=%.5g", metrics.mu, metrics.kappa)
        self._update_frequency(event.decision.action)
        self.ticks += 1
        return replace(event, monitor_hz=self.hz)

    def _update_frequency(self, action: Action) -> None:
        if action is Action.NORMAL:
            self._normal_run += 1
            if self.hz != self.cfg.f_monitor and self._normal_run >= self.cfg.deescalate_after:
                self.hz = self.cfg.f_monitor
        else:
            self._normal_run = 0
            self.hz = self.cfg.f_elevated

    @property
    def period(self) -> float:
        return 1.0 / self.hz


def monitor_loop(source: Callable[[], tuple], sink: Callable[[MonitorEvent], None],
                 monitor: SafetyMonitor, stop: threading.Event | None = None,
                 on_velocity_warning: Callable[[MonitorEvent], None] | None = None,
                 on_notify: Callable[[MonitorEvent], None] | None = None,
                 max_ticks: int | None = None) -> int:
    """Run ticks until the source closes, ``stop`` is set or ``max_ticks`` is hit.

    ``source()`` returns ``(q, qdot)`` or ``(q, qdot, stale)``. Deadlines are
    scheduled from the previous deadline so ticks do not drift; ``stop`` is
    checked while sleeping, so cancellation takes effect within one tick.
    Returns the number of ticks run.
    """
    stop = stop or threading.Event()
    next_deadline = time.monotonic()
    ticks = 0
    while not stop.is_set():
        if max_ticks is not None and ticks >= max_ticks:
            break
        try:
            sample = source()
        except SourceClosed:
            break
        stale = bool(sample[2]) if len(sample) > 2 else False
        event = monitor.evaluate(sample[0], sample[1], stale=stale)
        sink(event)
        if event.decision.notify_operator and on_notify is not None:
            on_notify(event)
        if event.velocity_warning and on_velocity_warning is not None:
            on_velocity_warning(event)
        ticks += 1
        next_deadline += monitor.period
        now = time.monotonic()
        if next_deadline < now - monitor.period:
            # fell more than a full period behind; resynchronise instead of bursting
            next_deadline = now
        if stop.wait(max(0.0, next_deadline - now)):
            break
    return ticks
