"""Extended Kalman filter for range/azimuth tracking of a CV target."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensing import Measurement, measurement_function, wrap_angle, wrap_angles

_MAX_CONDITION = 1e12


class SingularInnovation(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Belief:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def position(self) -> tuple[float, float]:
        return float(self.mean[0]), float(self.mean[1])

    @property
    def azimuth(self) -> float:
        return math.atan2(self.mean[1], self.mean[0])

    @property
    def distance(self) -> float:
        return math.hypot(self.mean[0], self.mean[1])


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def initialize(prior_scale: float = 1.0) -> Belief:
    return Belief(np.zeros(4), prior_scale * np.eye(4))


def predict(b: Belief, F: np.ndarray, Q: np.ndarray) -> Belief:
    return Belief(F @ b.mean, _sym(F @ b.cov @ F.T + Q))


def update(b: Belief, z: Measurement, H: np.ndarray, R: np.ndarray) -> Belief:
    """Measurement update; the azimuth innovation is wrapped to (-pi, pi]."""
    P = b.cov
    PHt = P @ H.T
    S = H @ PHt + R
    if np.linalg.cond(S) > _MAX_CONDITION:
        raise SingularInnovation("innovation covariance is numerically singular")
    K = PHt @ np.linalg.inv(S)
    innov = np.asarray(z, dtype=float) - measurement_function(b.mean)
    innov[1] = wrap_angle(innov[1])
    mean = b.mean + K @ innov
    cov = _sym((np.eye(4) - K @ H) @ P)
    return Belief(mean, cov)


def azimuth_variance_mc(
    b: Belief,
    mean_pos: tuple[float, float],
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo variance of the azimuth of positions drawn around ``mean_pos``.

    Positions are sampled from N(mean_pos, position block of ``b.cov``); the
    spread is measured as wrapped deviations from the azimuth of ``mean_pos``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    mx, my = mean_pos
    P = b.cov[:2, :2]
    # 2x2 square root via eigendecomposition tolerates a singular block.
    w, V = np.linalg.eigh(P)
    L = V * np.sqrt(np.clip(w, 0.0, None))
    pts = rng.standard_normal((n_samples, 2)) @ L.T
    theta0 = math.atan2(my, mx)
    dev = wrap_angles(np.arctan2(pts[:, 1] + my, pts[:, 0] + mx) - theta0)
    return float(np.var(dev, ddof=1))


def nees(b: Belief, truth: np.ndarray) -> float:
    e = np.asarray(truth, dtype=float) - b.mean
    return float(e @ np.linalg.solve(b.cov, e))
