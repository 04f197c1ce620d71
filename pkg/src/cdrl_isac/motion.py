"""Constant-velocity target kinematics with Gaussian maneuverability noise.

State vector layout is ``[x, y, vx, vy]`` in metres and metres per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TargetState:
    x: float
    y: float
    vx: float
    vy: float
    age_slots: int = 0

    @property
    def distance(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def azimuth(self) -> float:
        return math.atan2(self.y, self.x)

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy], dtype=float)

    @classmethod
    def from_vector(cls, v, age_slots: int = 0) -> "TargetState":
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]), age_slots)


@dataclass(frozen=True)
class MotionConfig:
    revisit_interval_T0: float = 3.0
    sigma_w_sq: float = 5.0

    def __post_init__(self):
        if not self.revisit_interval_T0 > 0:
            raise ValueError("revisit_interval_T0 must be positive")
        if self.sigma_w_sq < 0:
            raise ValueError("sigma_w_sq must be non-negative")


def transition_matrix(T: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = T
    F[1, 3] = T
    return F


def process_noise_cov(T: float, sigma_w_sq: float) -> np.ndarray:
    """Discrete white-noise-acceleration covariance for one revisit interval."""
    a = T**4 / 4.0 * sigma_w_sq
    b = T**3 / 2.0 * sigma_w_sq
    c = T**2 * sigma_w_sq
    return np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [b, 0.0, c, 0.0],
            [0.0, b, 0.0, c],
        ]
    )


def process_noise_factor(T: float, sigma_w_sq: float) -> np.ndarray:
    """4x2 factor G with G @ G.T == process_noise_cov(T, sigma_w_sq).

    Q has rank 2 (one acceleration per axis), so this exact factor replaces a
    jittered Cholesky decomposition.
    """
    s = math.sqrt(sigma_w_sq)
    G = np.zeros((4, 2))
    G[0, 0] = G[1, 1] = T**2 / 2.0 * s
    G[2, 0] = G[3, 1] = T * s
    return G


def step_target(state: TargetState, cfg: MotionConfig, rng: np.random.Generator) -> TargetState:
    T = cfg.revisit_interval_T0
    x = transition_matrix(T) @ state.vector()
    if cfg.sigma_w_sq > 0:
        x = x + process_noise_factor(T, cfg.sigma_w_sq) @ rng.standard_normal(2)
    return TargetState.from_vector(x, state.age_slots + 1)


def with_velocity(state: TargetState, vx: float, vy: float) -> TargetState:
    return replace(state, vx=vx, vy=vy)
