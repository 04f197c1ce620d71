"""Radar SNR, beam misalignment loss and range/azimuth measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .motion import TargetState


class NoMeasurement(ValueError):
    """Raised when a slot yields zero SNR (no dwell or beam pointed away)."""


@dataclass(frozen=True)
class RadarConfig:
    snr0: float = 100.0
    tau0: float = 2.0
    r0: float = 800.0
    sigma_r0_sq: float = 10.0
    sigma_th0_sq: float = 1e-4
    beam_exponent_track_j: float = 4.0

    def __post_init__(self):
        for name in ("snr0", "tau0", "r0", "sigma_r0_sq", "sigma_th0_sq", "beam_exponent_track_j"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class Measurement(NamedTuple):
    range: float
    azimuth: float


class NoiseVariances(NamedTuple):
    sigma_r_sq: float
    sigma_th_sq: float


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    w = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


def beam_misalignment_loss(theta_true: float, theta_hat: float, exponent: float) -> float:
    delta = abs(wrap_angle(theta_true - theta_hat))
    if delta > math.pi / 2:
        return 0.0
    return max(math.cos(delta), 0.0) ** exponent


def snr(tau: float, r: float, theta_true: float, theta_hat: float, cfg: RadarConfig) -> float:
    if r <= 0:
        raise ValueError(f"degenerate geometry: range {r} <= 0")
    loss = beam_misalignment_loss(theta_true, theta_hat, cfg.beam_exponent_track_j)
    return cfg.snr0 * (tau / cfg.tau0) * (r / cfg.r0) ** -4 * loss


def measurement_noise_variances(snr_value: float, cfg: RadarConfig) -> NoiseVariances:
    if not snr_value > 0:
        raise NoMeasurement(f"no-measurement: snr={snr_value}")
    return NoiseVariances(cfg.sigma_r0_sq / snr_value, cfg.sigma_th0_sq / snr_value)


def measurement_function(state_vec) -> np.ndarray:
    x, y = state_vec[0], state_vec[1]
    return np.array([math.hypot(x, y), math.atan2(y, x)])


def observe(state: TargetState, variances: NoiseVariances, rng: np.random.Generator) -> Measurement:
    # Draws are taken even for zero variance so the stream advances identically.
    n_r, n_th = rng.standard_normal(2)
    rng_m = state.distance + math.sqrt(variances.sigma_r_sq) * n_r
    az = state.azimuth + math.sqrt(variances.sigma_th_sq) * n_th
    return Measurement(max(rng_m, 0.0), wrap_angle(az))


def measurement_jacobian(x: float, y: float) -> np.ndarray:
    r2 = x * x + y * y
    if r2 <= 0:
        raise ValueError("measurement Jacobian is singular at the origin")
    r = math.sqrt(r2)
    return np.array(
        [
            [x / r, y / r, 0.0, 0.0],
            [-y / r2, x / r2, 0.0, 0.0],
        ]
    )
