"""Kalman filter tracking for a single ground target.

Near-constant-velocity model with state ``[x, y, vx, vy]`` and position-only
measurements.  Besides the usual predict/update pair this module holds the
data-association rules used by the tracker (gated nearest neighbour for a
single filter, greedy likelihood association for joint filters) and the
covariance-trace monitor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

# Position block of the state vector.
POS = slice(0, 2)

DEFAULT_P0_DIAG = (30.0**2, 30.0**2, 20.0**2, 20.0**2)


class SingularInnovation(ArithmeticError):
    """The innovation covariance S cannot be inverted."""


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def transition_matrix(dt: float = 1.0) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def measurement_matrix() -> np.ndarray:
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    return H


def process_noise(sigma_q: float, dt: float = 1.0) -> np.ndarray:
    """Discrete white-noise acceleration covariance for the CV model."""
    I2 = np.eye(2)
    return sigma_q**2 * np.block(
        [
            [dt**3 / 3.0 * I2, dt**2 / 2.0 * I2],
            [dt**2 / 2.0 * I2, I2],
        ]
    )


def measurement_noise(sigma_r: float) -> np.ndarray:
    return sigma_r**2 * np.eye(2)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Filter matrices plus the association and halting thresholds.

    ``F``, ``H``, ``Q`` and ``R`` are derived from ``dt``, ``sigma_q`` and
    ``sigma_r`` unless passed explicitly.
    """

    sigma_q: float = 3.0
    sigma_r: float = 5.0
    dt: float = 1.0
    gate_g: float = 2.0
    trace_halt: float = 2000.0
    # joint-KF bookkeeping, in scene units
    refiner_radius: float = 50.0
    spawn_speed: float = 20.0
    F: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.gate_g > 0:
            raise ValueError(f"gate_g must be positive, got {self.gate_g}")
        if not self.trace_halt > 0:
            raise ValueError(f"trace_halt must be positive, got {self.trace_halt}")
        defaults = {
            "F": lambda: transition_matrix(self.dt),
            "H": measurement_matrix,
            "Q": lambda: process_noise(self.sigma_q, self.dt),
            "R": lambda: measurement_noise(self.sigma_r),
        }
        for name, make in defaults.items():
            value = getattr(self, name)
            value = make() if value is None else np.array(value, dtype=float)
            value.setflags(write=False)
            object.__setattr__(self, name, value)


@dataclass(frozen=True, eq=False)
class FilterState:
    """Gaussian estimate ``(s, P)`` at time step ``step``."""

    s: np.ndarray
    P: np.ndarray
    step: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.s[POS]


@dataclass(frozen=True, eq=False)
class Innovation:
    y: np.ndarray
    S: np.ndarray
    K: np.ndarray
    z_pred: np.ndarray
    S_inv: np.ndarray = field(repr=False, default=None)


def initial_state(position, P0_diag=DEFAULT_P0_DIAG, step: int = 0) -> FilterState:
    """Track start: given position, zero velocity, diagonal covariance."""
    x, y = position
    return FilterState(np.array([x, y, 0.0, 0.0]), np.diag(np.asarray(P0_diag, dtype=float)), step)


def predict(state: FilterState, params: ModelParams) -> FilterState:
    F = params.F
    P = symmetrize(F @ state.P @ F.T + params.Q)
    return FilterState(F @ state.s, P, state.step + 1)


def _inv2(S: np.ndarray) -> np.ndarray:
    a, b, c, d = S[0, 0], S[0, 1], S[1, 0], S[1, 1]
    det = a * d - b * c
    scale = max(abs(a), abs(b), abs(c), abs(d))
    if not math.isfinite(det) or scale == 0.0 or abs(det) <= 1e-12 * scale * scale:
        raise SingularInnovation(f"innovation covariance is singular: {S.tolist()}")
    return np.array([[d, -b], [-c, a]]) / det


def innovation(pred: FilterState, params: ModelParams, z=None) -> Innovation:
    """Innovation covariance and gain for ``pred``; residual against ``z`` if given."""
    H = params.H
    PHt = pred.P @ H.T
    S = symmetrize(H @ PHt + params.R)
    if S.shape == (2, 2):
        S_inv = _inv2(S)
    else:
        try:
            S_inv = np.linalg.inv(S)
        except np.linalg.LinAlgError as exc:
            raise SingularInnovation(str(exc)) from exc
    K = PHt @ S_inv
    z_pred = H @ pred.s
    y = np.zeros_like(z_pred) if z is None else np.asarray(z, dtype=float) - z_pred
    return Innovation(y=y, S=S, K=K, z_pred=z_pred, S_inv=S_inv)


def update(pred: FilterState, z, params: ModelParams) -> tuple[FilterState, Innovation]:
    innov = innovation(pred, params, z)
    s = pred.s + innov.K @ innov.y
    P = symmetrize((np.eye(pred.s.shape[0]) - innov.K @ params.H) @ pred.P)
    return FilterState(s, P, pred.step), innov


def mahalanobis(z, pred: FilterState, innov: Innovation) -> float:
    r = np.asarray(z, dtype=float) - innov.z_pred
    S_inv = innov.S_inv if innov.S_inv is not None else _inv2(innov.S)
    return math.sqrt(max(float(r @ S_inv @ r), 0.0))


def gaussian_likelihood(z, innov: Innovation) -> float:
    """Density of the residual ``z - H s`` under ``N(0, S)``."""
    r = np.asarray(z, dtype=float) - innov.z_pred
    S_inv = innov.S_inv if innov.S_inv is not None else _inv2(innov.S)
    det = float(np.linalg.det(innov.S))
    k = r.shape[0]
    return math.exp(-0.5 * float(r @ S_inv @ r)) / math.sqrt((2 * math.pi) ** k * det)


def gated(Z: Sequence, pred: FilterState, innov: Innovation, params: ModelParams) -> list:
    """Detections inside the Mahalanobis gate, as ``(distance, detection)`` pairs."""
    out = []
    for d in Z:
        dist = mahalanobis(d.z, pred, innov)
        if dist <= params.gate_g:
            out.append((dist, d))
    return out


def gnn_associate(Z: Sequence, pred: FilterState, innov: Innovation, params: ModelParams):
    """Nearest in-gate detection (lowest id on exact ties), or ``None``."""
    candidates = gated(Z, pred, innov, params)
    if not candidates:
        return None
    return min(candidates, key=lambda c: (c[0], c[1].id))[1]


def uncertainty_trace(state: FilterState) -> float:
    return float(state.P[0, 0] + state.P[1, 1])


def monitor_gamma(tau_prev: float, tau_cur: float) -> int:
    return 1 if tau_cur <= tau_prev else 0


def gnn_step(state: FilterState, Z: Sequence, params: ModelParams):
    """One predict/associate/update cycle of the single-filter tracker.

    Returns ``(new_state, detection_or_None)``.  A track whose position
    uncertainty exceeds ``trace_halt`` is halted: it coasts on predictions
    and no longer searches for detections.
    """
    pred = predict(state, params)
    if uncertainty_trace(state) > params.trace_halt:
        return pred, None
    innov = innovation(pred, params)
    det = gnn_associate(Z, pred, innov, params)
    if det is None:
        return pred, None
    return update(pred, det.z, params)[0], det


# --- joint Kalman filters -------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrackSet:
    """Primary track, refining tracks on nearby targets, and leftover detections."""

    primary: FilterState
    refiners: tuple = ()
    unassociated_prev: tuple = ()
    # detection the primary associated on the last step, if any
    primary_detection: object = None
    # (track index, detection id) pairs of the last association; 0 is the primary
    assignments: tuple = ()

    @property
    def step(self) -> int:
        return self.primary.step


def predict_tracks(tracks: TrackSet, params: ModelParams) -> TrackSet:
    return replace(
        tracks,
        primary=predict(tracks.primary, params),
        refiners=tuple(predict(r, params) for r in tracks.refiners),
        primary_detection=None,
        assignments=(),
    )


def joint_step(tracks: TrackSet, Z: Sequence, params: ModelParams,
               P0_diag=DEFAULT_P0_DIAG, primary_active: bool = True) -> TrackSet:
    """Greedy one-to-one association of predicted tracks to ``Z``.

    Track 0 is the primary.  Pairs are ranked by Gaussian likelihood
    (descending; ties by detection id, then track index) and accepted when
    both ends are free and the pair is inside the Mahalanobis gate.
    An unclaimed detection near the primary seeds a refining track when one
    of last step's leftovers lies within ``spawn_speed`` of it; every other
    unclaimed detection is carried over to the next step.  Refining tracks that drift beyond
    ``refiner_radius`` from the primary are dropped.
    """
    preds = [tracks.primary, *tracks.refiners]
    pairs = []
    for ti, pred in enumerate(preds):
        if ti == 0 and not primary_active:
            continue
        innov = innovation(pred, params)
        for d in Z:
            if mahalanobis(d.z, pred, innov) <= params.gate_g:
                pairs.append((-gaussian_likelihood(d.z, innov), d.id, ti, d))
    pairs.sort(key=lambda p: p[:3])

    assigned: dict[int, object] = {}
    used = set()
    for _, did, ti, d in pairs:
        if ti in assigned or did in used:
            continue
        assigned[ti] = d
        used.add(did)

    updated = [
        update(pred, assigned[ti].z, params)[0] if ti in assigned else pred
        for ti, pred in enumerate(preds)
    ]
    primary, refiners = updated[0], updated[1:]
    centre = primary.position

    leftovers = []
    prev = list(tracks.unassociated_prev)
    for d in Z:
        if d.id in used:
            continue
        best = None
        if prev and np.hypot(*(d.z - centre)) <= params.refiner_radius:
            best = min(prev, key=lambda p: (float(np.hypot(*(d.z - p.z))), p.id))
        if best is not None and np.hypot(*(d.z - best.z)) < params.spawn_speed:
            velocity = (d.z - best.z) / params.dt
            s = np.array([d.z[0], d.z[1], velocity[0], velocity[1]])
            refiners.append(FilterState(s, np.diag(np.asarray(P0_diag, dtype=float)), primary.step))
        else:
            leftovers.append(d)

    refiners = [
        r for r in refiners if np.hypot(*(r.position - centre)) <= params.refiner_radius
    ]
    return TrackSet(primary, tuple(refiners), tuple(leftovers), assigned.get(0),
                    tuple(sorted((ti, d.id) for ti, d in assigned.items())))


def joint_init(state: FilterState, Z: Sequence) -> TrackSet:
    """Start joint tracking at ``state``; the first detection set seeds the leftovers."""
    return TrackSet(state, (), tuple(Z))


def joint_track_step(tracks: TrackSet, Z: Sequence, params: ModelParams) -> TrackSet:
    halted = uncertainty_trace(tracks.primary) > params.trace_halt
    return joint_step(predict_tracks(tracks, params), Z, params, primary_active=not halted)
