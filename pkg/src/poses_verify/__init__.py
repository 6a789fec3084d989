"""Robustness and resilience verification of a Kalman-filter tracker under detection-suppression attacks."""

from .estimator import FilterState, ModelParams, SingularInnovation
from .polts import Explosion, KnapsackInstance, Path, knapsack_lts, unfold
from .verify import Kind, Verdict, VerificationProblem, VerificationResult, solve
from .world import Detection, Scenario, ScenarioConfig, Vehicle, generate

__version__ = "0.1.0"
