"""Synthetic detection scenarios.

Stands in for the imagery front end: vehicles move on near-constant velocity
trajectories, each produces a noisy position detection per step (unless
missed), false alarms are scattered over the scene, and every detection
carries the cost an adversary would pay to suppress it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .estimator import DEFAULT_P0_DIAG


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Detection:
    id: int
    z: np.ndarray
    payoff: float = 1.0
    truth_id: Optional[int] = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if not self.payoff >= 0:
            raise ConfigError(f"detection {self.id}: payoff must be non-negative, got {self.payoff}")

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (self.id == other.id and self.payoff == other.payoff
                and self.truth_id == other.truth_id and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.id, self.payoff, self.truth_id, tuple(self.z)))


# --- payoff models ----------------------------------------------------------


@dataclass(frozen=True)
class ConstantPayoff:
    c: float = 1.0

    def draw(self, z, rng, centre) -> float:
        return float(self.c)


@dataclass(frozen=True)
class UniformPayoff:
    low: float
    high: float

    def draw(self, z, rng, centre) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class DistancePayoff:
    """``base + scale * |z - centre|``: detections far out are dearer to hide."""

    base: float = 1.0
    scale: float = 0.01

    def draw(self, z, rng, centre) -> float:
        return self.value(z, centre)

    def value(self, z, centre) -> float:
        return float(self.base + self.scale * math.hypot(z[0] - centre[0], z[1] - centre[1]))


PayoffModel = Union[ConstantPayoff, UniformPayoff, DistancePayoff]


def parse_payoff_model(text: str) -> PayoffModel:
    """``"constant 1.0"``, ``"uniform 2 4"`` or ``"distance 1.0 0.01"``."""
    kind, *args = text.split()
    try:
        values = [float(a) for a in args]
        if kind == "constant":
            return ConstantPayoff(*values)
        if kind == "uniform":
            return UniformPayoff(*values)
        if kind == "distance":
            return DistancePayoff(*values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad payoff model {text!r}: {exc}") from exc
    raise ConfigError(f"unknown payoff model {kind!r}")


def format_payoff_model(model: PayoffModel) -> str:
    if isinstance(model, ConstantPayoff):
        return f"constant {model.c!r}"
    if isinstance(model, UniformPayoff):
        return f"uniform {model.low!r} {model.high!r}"
    return f"distance {model.base!r} {model.scale!r}"


# --- configuration ----------------------------------------------------------


@dataclass
class Vehicle:
    position: tuple
    velocity: tuple
    # step -> position; the vehicle continues from there with its velocity
    waypoints: dict = field(default_factory=dict)
    # last step producing detections; the vehicle leaves the scene afterwards
    visible_until: Optional[int] = None

    def trajectory(self, n_steps: int) -> np.ndarray:
        out = np.empty((n_steps, 2))
        pos = np.array(self.position, dtype=float)
        vel = np.array(self.velocity, dtype=float)
        for k in range(n_steps):
            if k > 0:
                pos = pos + vel
            if k in self.waypoints:
                pos = np.array(self.waypoints[k], dtype=float)
            out[k] = pos
        return out


@dataclass
class ScenarioConfig:
    n_steps: int = 20
    vehicles: list = field(default_factory=list)
    misdetect_prob: float = 0.0
    false_alarm_rate: float = 0.0
    detection_noise_sigma: float = 0.0
    payoff_model: PayoffModel = field(default_factory=ConstantPayoff)
    seed: int = 0
    max_detections_per_step: int = 5
    scene: tuple = (0.0, 0.0, 1000.0, 1000.0)
    init_position: Optional[tuple] = None
    init_cov: tuple = DEFAULT_P0_DIAG

    def validate(self):
        if self.n_steps < 2:
            raise ConfigError(f"n_steps must be at least 2, got {self.n_steps}")
        if not 0.0 <= self.misdetect_prob <= 1.0:
            raise ConfigError(f"misdetect_prob out of [0, 1]: {self.misdetect_prob}")
        if self.false_alarm_rate < 0:
            raise ConfigError(f"false_alarm_rate must be non-negative: {self.false_alarm_rate}")
        if self.detection_noise_sigma < 0:
            raise ConfigError("detection_noise_sigma must be non-negative")
        if self.max_detections_per_step < 1:
            raise ConfigError("max_detections_per_step must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        x0, y0, x1, y1 = self.scene
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"degenerate scene box {self.scene}")
        if isinstance(self.payoff_model, UniformPayoff) and not (
            0 <= self.payoff_model.low <= self.payoff_model.high
        ):
            raise ConfigError("uniform payoff bounds must satisfy 0 <= low <= high")
        if isinstance(self.payoff_model, ConstantPayoff) and self.payoff_model.c < 0:
            raise ConfigError("constant payoff must be non-negative")
        if isinstance(self.payoff_model, DistancePayoff) and (
            self.payoff_model.base < 0 or self.payoff_model.scale <= 0
        ):
            raise ConfigError("distance payoff needs base >= 0 and scale > 0")


@dataclass(eq=False)
class Scenario:
    truth: list  # per vehicle, (n_steps, 2) arrays
    detections: list  # per step, list of Detection
    init_position: Optional[tuple] = None
    init_cov: tuple = DEFAULT_P0_DIAG

    @property
    def n_steps(self) -> int:
        return len(self.detections)

    @property
    def end(self) -> int:
        return self.n_steps - 1

    def start_position(self) -> tuple:
        if self.init_position is not None:
            return tuple(self.init_position)
        if self.truth:
            return tuple(self.truth[0][0])
        if self.detections and self.detections[0]:
            return tuple(self.detections[0][0].z)
        raise ConfigError("scenario has no initial position, vehicle or first detection")

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            len(self.truth) == len(other.truth)
            and all(np.array_equal(a, b) for a, b in zip(self.truth, other.truth))
            and self.detections == other.detections
            and _opt_tuple(self.init_position) == _opt_tuple(other.init_position)
            and tuple(self.init_cov) == tuple(other.init_cov)
        )


def _opt_tuple(x):
    return None if x is None else tuple(float(v) for v in x)


def generate(config: ScenarioConfig) -> Scenario:
    """Build the detection sets for ``config``; a pure function of the config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    x0, y0, x1, y1 = config.scene
    centre = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    truth = [v.trajectory(config.n_steps) for v in config.vehicles]

    detections = []
    for k in range(config.n_steps):
        true_hits = []
        for vi, (vehicle, track) in enumerate(zip(config.vehicles, truth)):
            missed = rng.random() < config.misdetect_prob
            noise = rng.normal(0.0, 1.0, 2) * config.detection_noise_sigma
            gone = vehicle.visible_until is not None and k > vehicle.visible_until
            if not (missed or gone):
                true_hits.append((float(np.hypot(*noise)), vi, track[k] + noise))
        n_false = rng.poisson(config.false_alarm_rate) if config.false_alarm_rate > 0 else 0
        false_hits = []
        for _ in range(n_false):
            z = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            near = min((float(np.hypot(*(z - t[k]))) for t in truth), default=0.0)
            false_hits.append((near, None, z))

        # truth first, then false alarms; nearest-to-truth kept under the cap
        true_hits.sort(key=lambda h: (h[0], h[1]))
        false_hits.sort(key=lambda h: h[0])
        kept = (true_hits + false_hits)[: config.max_detections_per_step]
        step = []
        for i, (_, vi, z) in enumerate(kept):
            payoff = config.payoff_model.draw(z, rng, centre)
            step.append(Detection(i, z, payoff, vi))
        detections.append(step)

    return Scenario(truth, detections, config.init_position, tuple(config.init_cov))


def attack_payoff(d: Detection) -> float:
    return d.payoff
