"""Joint-space workspace scan of the singularity metrics.

Configurations come from a scrambled Halton sequence over the joint limits.
The report carries percentile tables for each metric, the fraction of samples
inside each emergency tier, and a probe row for the stretched zero pose.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from . import kernels
from .kinematics import KinematicModel
from .metrics import Thresholds, metrics_from_jacobian
from .monitor import MonitorConfig, emergency_decision

SCAN_SCHEMA_VERSION = 1
PERCENTILES = (1, 5, 10, 25, 50, 75, 90, 95, 99)
COLUMNS = ("index", "q1", "q2", "q3", "q4", "q5", "q6", "mu", "kappa", "sigma_min", "action")


@dataclass
class ScanReport:
    samples: int
    percentiles: dict
    tier_fractions: dict
    probe: dict
    suggested_thresholds: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def workspace_scan(model: KinematicModel, n: int, out_path: str | Path | None = None, seed: int = 0,
                   thresholds: Thresholds | None = None, monitor_cfg: MonitorConfig | None = None,
                   quantile: float | None = None) -> ScanReport:
    """Scan ``n`` joint configurations; ``quantile`` additionally proposes filter thresholds."""
    t = thresholds or Thresholds()
    mc = monitor_cfg or MonitorConfig()
    sampler = qmc.Halton(d=6, scramble=True, seed=seed)
    qs = qmc.scale(sampler.random(n), model.lower, model.upper)
    qs = np.vstack([np.zeros(6), qs])
    zero_qdot = np.zeros(6)
    rows = np.empty((len(qs), 3))
    actions = []
    for i, q in enumerate(qs):
        _, J = kernels.forward_and_jacobian(model.dh, np.ascontiguousarray(q))
        m = metrics_from_jacobian(J, t)
        rows[i] = (m.mu, m.kappa, m.sigma_min)
        actions.append(emergency_decision(m.mu, m.kappa, zero_qdot, mc).action.value)

    body = rows[1:]
    pct = {
        name: {str(p): float(v) for p, v in zip(PERCENTILES, np.percentile(body[:, j], PERCENTILES))}
        for j, name in enumerate(("mu", "kappa", "sigma_min"))
    }
    mu, kappa = body[:, 0], body[:, 1]
    tiers = {
        "mu<0.005": float(np.mean(mu < mc.mu_stop)),
        "mu<0.01": float(np.mean(mu < mc.mu_critical)),
        "mu<0.05": float(np.mean(mu < mc.mu_warning)),
        "kappa>500": float(np.mean(kappa > mc.kappa_stop)),
        "kappa>100": float(np.mean(kappa > mc.kappa_critical)),
        "kappa>50": float(np.mean(kappa > mc.kappa_warning)),
    }
    for action in ("EMERGENCY_STOP", "CRITICAL_WARNING", "WARNING", "NORMAL"):
        tiers[action] = float(np.mean(np.array(actions[1:]) == action))
    probe = {"q": [0.0] * 6, "mu": float(rows[0, 0]), "kappa": float(rows[0, 1]),
             "sigma_min": float(rows[0, 2]), "action": actions[0]}
    suggested = None
    if quantile is not None:
        if not 0.0 < quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
        suggested = {
            "mu_threshold": float(np.quantile(mu, quantile)),
            "kappa_threshold": float(np.quantile(kappa, 1.0 - quantile)),
            "sigma_threshold": float(np.quantile(body[:, 2], quantile)),
        }
    report = ScanReport(n, pct, tiers, probe, suggested)
    if out_path is not None:
        write_scan_csv(out_path, qs, rows, actions)
    return report


def write_scan_csv(path: str | Path, qs: np.ndarray, rows: np.ndarray, actions: list[str]) -> None:
    """Row 0 is the zero-pose probe; the remaining rows are the scan samples."""
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCAN_SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i, (q, r, a) in enumerate(zip(qs, rows, actions)):
        w.writerow([i, *(repr(float(v)) for v in q), *(repr(float(v)) for v in r), a])
    Path(path).write_text(buf.getvalue())
