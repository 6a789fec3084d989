"""Builders shared by the test modules."""

import numpy as np

from poses_verify import estimator as est
from poses_verify import world


def dets(*points, payoffs=None):
    """Detections with ids 0.. at ``points``."""
    payoffs = payoffs or [1.0] * len(points)
    return [world.Detection(i, p, c) for i, (p, c) in enumerate(zip(points, payoffs))]


def scenario(steps, init=None):
    """Scenario from per-step point lists (no truth tracks)."""
    detections = [dets(*pts) if pts and not isinstance(pts[0], world.Detection) else list(pts)
                  for pts in steps]
    return world.Scenario([], detections, init)


def random_state(rng, scale=30.0):
    s = rng.uniform(-500, 500, 4)
    A = rng.normal(0, 1, (4, 4)) * rng.uniform(0.1, scale)
    P = A @ A.T + np.eye(4) * rng.uniform(0, 5)
    return est.FilterState(s, P)


def assert_psd(P, tol=1e-9):
    assert np.array_equal(P, P.T), "covariance not exactly symmetric"
    jitter = tol * max(1.0, float(np.trace(P)))
    np.linalg.cholesky(P + jitter * np.eye(P.shape[0]))


def two_vehicle_config(decoy: world.Vehicle, **kw) -> world.ScenarioConfig:
    target = world.Vehicle((100.0, 500.0), (10.0, 0.0))
    return world.ScenarioConfig(vehicles=[target, decoy], **kw)
