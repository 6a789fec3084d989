"""Robustness and resilience measures and their constrained-optimisation solver."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .estimator import monitor_gamma, uncertainty_trace

DEFAULT_EPSILON = {"robustness": 120.0, "resilience": 1.0}


class MissingOriginal(LookupError):
    """No zero-payoff (unattacked) path among the inputs."""


class Kind(str, enum.Enum):
    ROBUSTNESS = "robustness"
    RESILIENCE = "resilience"


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    VACUOUS = "vacuous"


@dataclass(frozen=True)
class TrackMeasures:
    phi: float
    dist_acc: float
    dist_max: float
    dist_end: float
    dist_max_step: Optional[int] = None
    gamma_ok: bool = True


@dataclass(frozen=True)
class VerificationProblem:
    kind: Kind
    epsilon: float
    theta: float = 0.0
    window: tuple = (1, 1, 1)  # (l, u, e)
    dist_max_window: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        l, u, e = self.window
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not l <= u <= e:
            raise ValueError(f"window must satisfy l <= u <= e, got {self.window}")

    @property
    def max_window(self) -> tuple:
        l, u, e = self.window
        return self.dist_max_window if self.dist_max_window is not None else (l, e)

    def constraint(self, m: TrackMeasures) -> float:
        return m.dist_acc if self.kind is Kind.ROBUSTNESS else m.dist_end

    def objective(self, m: TrackMeasures) -> float:
        return m.phi if self.kind is Kind.ROBUSTNESS else m.dist_max


@dataclass
class Row:
    """A labelled measure vector, e.g. one column of a measure table."""

    label: str
    measures: TrackMeasures
    is_original: bool = False


@dataclass
class VerificationResult:
    problem: VerificationProblem
    sol_opt: Optional[float]
    theta_star: Optional[float]
    rho_star: object
    p_plus: list = field(default_factory=list)
    p_minus: list = field(default_factory=list)
    verdict: Verdict = Verdict.VACUOUS


def step_dist(a, b, k: int) -> float:
    """Euclidean distance between the estimated positions of two paths at ``k``."""
    pa, pb = a.nodes[k].state.position, b.nodes[k].state.position
    return math.hypot(pa[0] - pb[0], pa[1] - pb[1])


def measures(original, attacked, problem: VerificationProblem) -> TrackMeasures:
    if len(original.nodes) != len(attacked.nodes):
        raise ValueError("paths differ in length")
    l, u, e = problem.window
    d = [step_dist(original, attacked, k) for k in range(e + 1)]
    lo, hi = problem.max_window
    m = max(range(lo, hi + 1), key=lambda k: (d[k], -k))
    taus = [uncertainty_trace(n.state) for n in attacked.nodes]
    gamma_ok = all(monitor_gamma(taus[k - 1], taus[k]) == 1 for k in range(max(l, 1), u + 1))
    return TrackMeasures(
        phi=attacked.phi,
        dist_acc=float(sum(d)),
        dist_max=d[m],
        dist_end=d[e],
        dist_max_step=m,
        gamma_ok=gamma_ok,
    )


def original_of(paths: Sequence):
    for p in paths:
        if getattr(p, "is_original", False):
            return p
    raise MissingOriginal("no original path among the inputs")


def measure_paths(paths: Sequence, problem: VerificationProblem) -> list:
    """Fill ``measures`` on every path against the original one."""
    ref = original_of(paths)
    for p in paths:
        p.measures = measures(ref, p, problem)
    return list(paths)


def monitor_filter(paths: Sequence) -> list:
    """Drop paths on which the covariance-trace monitor would have raised an alarm.

    The unattacked path is the reference and always kept.
    """
    return [p for p in paths if p.measures.gamma_ok or getattr(p, "is_original", False)]


def threshold_verdict(result: VerificationResult, theta: float) -> Verdict:
    if result.sol_opt is None or result.sol_opt > theta:
        return Verdict.HOLDS
    return Verdict.FAILS


def solve(rows: Sequence, problem: VerificationProblem) -> VerificationResult:
    """Optimal violating value, representative conforming path, and verdict.

    ``rows`` are anything with ``label`` and ``measures``.  Violating rows
    (constraint strictly above epsilon) go to ``p_plus``; the rest to
    ``p_minus``.  The representative is the ``p_minus`` row with the largest
    objective strictly below the optimum (first in input order on ties).
    """
    if not any(r.measures.phi == 0 for r in rows):
        raise MissingOriginal("no zero-payoff path among the inputs")
    p_plus, p_minus = [], []
    for r in rows:
        (p_plus if problem.constraint(r.measures) > problem.epsilon else p_minus).append(r)

    sol_opt = min((problem.objective(r.measures) for r in p_plus), default=None)
    theta_star, rho_star = None, None
    if sol_opt is not None:
        for r in p_minus:
            obj = problem.objective(r.measures)
            if obj < sol_opt and (theta_star is None or obj > theta_star):
                theta_star, rho_star = obj, r

    result = VerificationResult(problem, sol_opt, theta_star, rho_star, p_plus, p_minus)
    result.verdict = Verdict.VACUOUS if sol_opt is None else threshold_verdict(result, problem.theta)
    return result


def verify_paths(paths: Sequence, problem: VerificationProblem, monitor: bool = False):
    """Measure, optionally monitor-filter, and solve.  Returns ``(result, kept_paths)``."""
    measure_paths(paths, problem)
    kept = monitor_filter(paths) if monitor else list(paths)
    return solve(kept, problem), kept


def divergence_pairs(rows: Sequence, eps_robustness: float, eps_resilience: float) -> dict:
    """Rows separating the two properties.

    ``"robust_not_resilient"``: accumulated deviation within tolerance but the
    end-point deviation is not.  ``"resilient_not_robust"``: the converse.
    """
    out = {"robust_not_resilient": [], "resilient_not_robust": []}
    for r in rows:
        m = r.measures
        if m.dist_acc <= eps_robustness and m.dist_end > eps_resilience:
            out["robust_not_resilient"].append(r)
        if m.dist_acc > eps_robustness and m.dist_end <= eps_resilience:
            out["resilient_not_robust"].append(r)
    return out
