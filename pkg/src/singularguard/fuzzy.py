"""Weighted fuzzy safety classifier.

Inputs are manipulability, condition number and mean absolute joint speed,
each fuzzified over five triangular terms. Rule strength is the min of its
condition memberships times the rule weight; strengths are aggregated per
conclusion with max. The crisp score is the activation-weighted mean of the
per-level scores and the classification is the most activated level, with
ties going to the more dangerous level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path

import numpy as np
import yaml

from .metrics import SingularityMetrics

VARIABLES = ("manipulability", "condition_quality", "velocity")
RULE_COUNT = 45


class SafetyLevel(enum.IntEnum):
    """Ordered from most to least dangerous."""

    EmergencyStop = 0
    Critical = 1
    Warning = 2
    Caution = 3
    Safe = 4
    Optimal = 5


DEFAULT_SCORES = {
    SafetyLevel.EmergencyStop: 0.0,
    SafetyLevel.Critical: 20.0,
    SafetyLevel.Warning: 40.0,
    SafetyLevel.Caution: 60.0,
    SafetyLevel.Safe: 80.0,
    SafetyLevel.Optimal: 100.0,
}

# Allowed weight range per conclusion. Warning spans 0.5-1.0 so that rules 6
# and 8 (0.8 and 0.5) fit, as does the weight-1.0 Warning that keeps very
# fast motion from rating Optimal.
WEIGHT_BANDS = {
    SafetyLevel.EmergencyStop: (1.0, 1.0),
    SafetyLevel.Critical: (0.8, 0.9),
    SafetyLevel.Warning: (0.5, 1.0),
    SafetyLevel.Caution: (0.6, 0.7),
    SafetyLevel.Safe: (0.6, 0.8),
    SafetyLevel.Optimal: (0.9, 1.0),
}


class RuleBaseError(ValueError):
    """Raised when a rule base fails validation and is refused."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid rule base:\n  " + "\n  ".join(violations))


class NoRuleFired(RuntimeError):
    """All activations are zero: the rule base has a coverage hole."""


@dataclass(frozen=True)
class MembershipFunction:
    """Triangle with feet ``a``, ``c`` and peak ``b``.

    An infinite foot makes an open shoulder (membership 1 on that side of the
    peak). A degenerate side (``a == b`` or ``b == c``) is 1 at the peak.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.a <= self.b <= self.c:
            raise ValueError(f"breakpoints must satisfy a <= b <= c, got {(self.a, self.b, self.c)}")

    def __call__(self, x: float) -> float:
        return triangular_mf(x, self)


def triangular_mf(x: float, mf: MembershipFunction) -> float:
    a, b, c = mf.a, mf.b, mf.c
    if x < a or x > c:
        return 0.0
    if x == b:
        return 1.0
    if x < b:
        return 1.0 if math.isinf(a) else (x - a) / (b - a)
    return 1.0 if math.isinf(c) else (c - x) / (c - b)


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    terms: dict[str, MembershipFunction]
    axis: tuple[float, float]
    scale: str = "linear"

    def transform(self, x: float) -> float:
        if self.scale == "log10":
            return math.log10(x) if x > 0 else -math.inf
        return x

    def fuzzify(self, x: float) -> dict[str, float]:
        """Memberships of raw input ``x`` (already in axis units when ``scale`` is linear)."""
        u = self.transform(x)
        return {name: triangular_mf(u, mf) for name, mf in self.terms.items()}

    def cores(self) -> dict[str, float]:
        """Raw-unit input value at each term's peak."""
        if self.scale == "log10":
            return {n: 10.0 ** mf.b for n, mf in self.terms.items()}
        return {n: mf.b for n, mf in self.terms.items()}


def ruspini_partition(cores: dict[str, float]) -> dict[str, MembershipFunction]:
    """Triangles whose feet sit on the neighbouring cores; the end terms are shoulders."""
    names = list(cores)
    vals = [cores[n] for n in names]
    out = {}
    for i, n in enumerate(names):
        a = vals[i - 1] if i > 0 else -math.inf
        c = vals[i + 1] if i < len(vals) - 1 else math.inf
        out[n] = MembershipFunction(a, vals[i], c)
    return out


@dataclass(frozen=True)
class FuzzyRule:
    conditions: tuple[tuple[str, str], ...]
    conclusion: SafetyLevel
    weight: float
    description: str = ""
    rule_id: int = 0

    def strength(self, memberships: dict[str, dict[str, float]]) -> float:
        s = 1.0
        for var, term in self.conditions:
            s = min(s, memberships[var][term])
        return s * self.weight


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_rules(rules: list[FuzzyRule], variables: dict[str, LinguisticVariable],
                   expected_count: int = RULE_COUNT) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    if len(rules) != expected_count:
        v.append(f"expected {expected_count} rules, found {len(rules)}")
    for name in VARIABLES:
        if name not in variables:
            v.append(f"missing linguistic variable {name!r}")
            continue
        terms = variables[name].terms
        if len(terms) != 5:
            v.append(f"variable {name!r} has {len(terms)} terms, expected 5")
        peaks = [mf.b for mf in terms.values()]
        if any(p2 <= p1 for p1, p2 in zip(peaks, peaks[1:])):
            v.append(f"variable {name!r} term cores are not strictly increasing")
    for i, rule in enumerate(rules):
        tag = f"rule {rule.rule_id or i + 1}"
        if not 1 <= len(rule.conditions) <= 3:
            v.append(f"{tag}: {len(rule.conditions)} conditions, expected 1-3")
        for var, term in rule.conditions:
            if var not in variables:
                v.append(f"{tag}: unknown variable {var!r}")
            elif term not in variables[var].terms:
                v.append(f"{tag}: unknown term {term!r} for variable {var!r}")
        if not 0.0 < rule.weight <= 1.0:
            v.append(f"{tag}: weight {rule.weight} outside (0, 1]")
        lo, hi = WEIGHT_BANDS[rule.conclusion]
        if not lo - 1e-12 <= rule.weight <= hi + 1e-12:
            v.append(f"{tag}: weight {rule.weight} outside the {rule.conclusion.name} band [{lo}, {hi}]")
    if v or any(n not in variables for n in VARIABLES):
        return report
    term_lists = [list(variables[n].terms) for n in VARIABLES]
    for cell in product(*term_lists):
        assignment = dict(zip(VARIABLES, cell))
        if not any(all(assignment[var] == term for var, term in r.conditions) for r in rules):
            v.append(f"coverage hole: no rule fires at core cell {cell}")
    return report


@dataclass(frozen=True)
class SafetyAssessment:
    activations: tuple[float, ...]
    safety_score: float
    classification: SafetyLevel
    v_bar: float
    mu: float
    kappa: float

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "kappa": self.kappa,
            "v_bar": self.v_bar,
            "activations": {lvl.name: a for lvl, a in zip(SafetyLevel, self.activations)},
            "safety_score": self.safety_score,
            "safety_level": self.classification.name,
        }


def mean_joint_speed(qdot) -> float:
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != (6,) or not np.all(np.isfinite(qdot)):
        raise ValueError("joint velocities must be 6 finite values")
    return float(np.mean(np.abs(qdot)))


class FuzzyEngine:
    """Validated, immutable rule base plus its linguistic variables."""

    def __init__(self, variables: dict[str, LinguisticVariable], rules: list[FuzzyRule],
                 scores: dict[SafetyLevel, float] | None = None, expected_count: int = RULE_COUNT):
        report = validate_rules(rules, variables, expected_count)
        if not report.ok:
            raise RuleBaseError(report.violations)
        self.scores = dict(scores or DEFAULT_SCORES)
        ladder = [self.scores[lvl] for lvl in SafetyLevel]
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise RuleBaseError(["level scores must increase strictly from EmergencyStop to Optimal"])
        self.variables = dict(variables)
        self.rules = tuple(rules)

    def fuzzify(self, mu: float, kappa: float, v_bar: float) -> dict[str, dict[str, float]]:
        return {
            "manipulability": self.variables["manipulability"].fuzzify(mu),
            "condition_quality": self.variables["condition_quality"].fuzzify(kappa),
            "velocity": self.variables["velocity"].fuzzify(v_bar),
        }

    def activations(self, mu: float, kappa: float, v_bar: float) -> np.ndarray:
        memberships = self.fuzzify(mu, kappa, v_bar)
        act = np.zeros(len(SafetyLevel))
        for rule in self.rules:
            s = rule.strength(memberships)
            if s > act[rule.conclusion]:
                act[rule.conclusion] = s
        return act

    def assess_values(self, mu: float, kappa: float, v_bar: float) -> SafetyAssessment:
        act = self.activations(mu, kappa, v_bar)
        total = float(act.sum())
        if total <= 0.0:
            raise NoRuleFired(f"no rule fired for mu={mu}, kappa={kappa}, v_bar={v_bar}")
        scores = np.array([self.scores[lvl] for lvl in SafetyLevel])
        score = float(act @ scores) / total
        # argmax returns the first maximum, which is the most dangerous level
        level = SafetyLevel(int(np.argmax(act)))
        return SafetyAssessment(tuple(float(a) for a in act), score, level, float(v_bar),
                                float(mu), float(kappa))

    def assess(self, metrics: SingularityMetrics, qdot) -> SafetyAssessment:
        return self.assess_values(metrics.mu, metrics.kappa, mean_joint_speed(qdot))


def _parse_bound(x) -> float:
    if isinstance(x, str):
        return float(x.replace(".inf", "inf"))
    return float(x)


def _variable_from_block(name: str, block: dict) -> LinguisticVariable:
    scale = block.get("scale", "linear")
    if scale not in ("linear", "log10"):
        raise RuleBaseError([f"variable {name!r}: unknown scale {scale!r}"])
    tf = (lambda x: math.log10(x) if math.isfinite(x) else x) if scale == "log10" else (lambda x: x)
    terms = {}
    for term, pts in block["terms"].items():
        a, b, c = (tf(_parse_bound(p)) for p in pts)
        terms[term] = MembershipFunction(a, b, c)
    lo, hi = (tf(float(x)) for x in block["axis"])
    return LinguisticVariable(name, terms, (lo, hi), scale)


def load_rule_base(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("singularguard.data").joinpath("rules.yaml").read_text()
    else:
        text = Path(path).read_text()
    return yaml.safe_load(text)


def engine_from_data(data: dict) -> FuzzyEngine:
    variables = {n: _variable_from_block(n, b) for n, b in data["variables"].items()}
    try:
        rules = [
            FuzzyRule(
                conditions=tuple((str(k), str(t)) for k, t in r["if"].items()),
                conclusion=SafetyLevel[r["then"]],
                weight=float(r["weight"]),
                description=r.get("description", ""),
                rule_id=int(r.get("id", i + 1)),
            )
            for i, r in enumerate(data["rules"])
        ]
    except KeyError as exc:
        raise RuleBaseError([f"malformed rule record: missing or unknown {exc}"]) from exc
    scores = None
    if "scores" in data:
        scores = {SafetyLevel[k]: float(v) for k, v in data["scores"].items()}
        if set(scores) != set(SafetyLevel):
            raise RuleBaseError(["scores must list every safety level"])
    return FuzzyEngine(variables, rules, scores)


def load_engine(path: str | Path | None = None) -> FuzzyEngine:
    """Load and validate a rule-base file (the shipped one by default)."""
    return engine_from_data(load_rule_base(path))
