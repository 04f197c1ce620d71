"""Communication-phase model: path loss, sum rate and the Lagrangian reward."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .sensing import beam_misalignment_loss


@dataclass(frozen=True)
class CommConfig:
    bandwidth_B: float = 500.0
    tx_power_Pt: float = 1.0
    noise_sigma: float = 0.1
    ref_distance_d0: float = 500.0
    pathloss_eta: float = 2.0
    beam_exponent_comm_i: float = 4.0

    def __post_init__(self):
        for name in (
            "bandwidth_B",
            "tx_power_Pt",
            "noise_sigma",
            "ref_distance_d0",
            "pathloss_eta",
            "beam_exponent_comm_i",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def path_loss(d: float, cfg: CommConfig) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return (cfg.ref_distance_d0 / d) ** (cfg.pathloss_eta / 2.0)


def spectral_efficiency(d: float, misalignment_loss: float, cfg: CommConfig) -> float:
    """log2(1 + Pt L Lbm / sigma^2) for one target, in bit/s/Hz."""
    gain = cfg.tx_power_Pt * path_loss(d, cfg) * misalignment_loss / cfg.noise_sigma**2
    return math.log2(1.0 + gain)


def target_rate(tau_c: float, d: float, misalignment_loss: float, cfg: CommConfig) -> float:
    return tau_c * cfg.bandwidth_B * spectral_efficiency(d, misalignment_loss, cfg)


def sum_rate(tau_c: float, targets: Iterable[tuple[float, float]], cfg: CommConfig) -> float:
    """Sum rate over ``(distance, misalignment_loss)`` pairs for comm time ``tau_c``."""
    if tau_c < 0:
        raise ValueError("tau_c must be non-negative")
    return tau_c * cfg.bandwidth_B * sum(spectral_efficiency(d, l, cfg) for d, l in targets)


def pointing_loss(theta_true: float, theta_beam: float, cfg: CommConfig) -> float:
    return beam_misalignment_loss(theta_true, theta_beam, cfg.beam_exponent_comm_i)


def spread_loss(sigma_theta: float, cfg: CommConfig) -> float:
    """Misalignment loss evaluated at an azimuth standard deviation."""
    return math.cos(min(sigma_theta, math.pi / 2)) ** cfg.beam_exponent_comm_i


def communication_time(dwell_sum: float, T0: float) -> float:
    return max(0.0, T0 - dwell_sum)


def lagrangian_reward(rate: float, lam: float, dwell_sum: float, T0: float) -> float:
    if lam < 0:
        raise ValueError("dual variable must be non-negative")
    return rate - lam * (dwell_sum - T0)
