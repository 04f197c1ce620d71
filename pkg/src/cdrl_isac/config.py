"""Run configuration: one flat record, loadable from ``key = value`` text files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .comms import CommConfig
from .motion import MotionConfig
from .scenario import ScenarioConfig
from .sensing import RadarConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # Simulation parameters
    sigma_r0_sq: float = 10.0
    sigma_th0_sq: float = 1e-4
    sigma_w_sq: float = 5.0
    r0: float = 800.0
    tau0: float = 2.0
    T0: float = 3.0
    tx_power_Pt: float = 1.0
    noise_sigma: float = 0.1
    d0: float = 500.0
    bandwidth_B: float = 500.0
    gamma: float = 0.9
    batch_size: int = 32
    buffer_size: int = 50000
    epsilon: float = 0.1
    lambda0: float = 100.0
    alpha: float = 10.0

    # Radar / channel parameters left open by the table
    snr0: float = 100.0
    beam_j: float = 4.0
    beam_i: float = 4.0
    pathloss_eta: float = 2.0
    # "predicted": comm beams follow the one-step prediction of the last estimate;
    # "updated": they follow the estimate refined during the current slot.
    comm_pointing: str = "predicted"

    # Tracking
    prior_scale: float = 1.0
    acq_velocity_var: float = 300.0
    mc_samples: int = 1000

    # Learning
    hidden: int = 64
    lr: float = 1e-4
    optimizer: str = "adam"
    target_period: int = 500
    grad_clip: float = 10.0  # <= 0 disables
    reward_scale: float = 10000.0
    paper_faithful_state: bool = False
    train_slots: int = 100000

    # Scenario
    max_targets: int = 4
    max_age_slots: int = 3000
    spawn_prob: float = 0.002
    spawn_r_min: float = 200.0
    spawn_r_max: float = 1500.0
    spawn_v_min: float = 5.0
    spawn_v_max: float = 30.0
    min_range_m: float = 10.0
    max_range_m: float = 2500.0
    max_speed_mps: float = 30.0
    t_max_slots: int = 7000

    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.lambda0 < 0 or self.alpha <= 0:
            raise ConfigError("lambda0 must be >= 0 and alpha > 0")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= buffer_size")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.comm_pointing not in ("predicted", "updated"):
            raise ConfigError(f"unknown comm_pointing {self.comm_pointing!r}")
        if self.target_period < 1 or self.mc_samples < 2 or self.reward_scale <= 0:
            raise ConfigError("target_period >= 1, mc_samples >= 2, reward_scale > 0 required")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.motion()
            self.radar()
            self.comm()
            self.scenario()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def motion(self) -> MotionConfig:
        return MotionConfig(self.T0, self.sigma_w_sq)

    def radar(self) -> RadarConfig:
        return RadarConfig(self.snr0, self.tau0, self.r0, self.sigma_r0_sq, self.sigma_th0_sq, self.beam_j)

    def comm(self) -> CommConfig:
        return CommConfig(
            self.bandwidth_B, self.tx_power_Pt, self.noise_sigma, self.d0, self.pathloss_eta, self.beam_i
        )

    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig(
            max_targets_N=self.max_targets,
            max_age_slots=self.max_age_slots,
            spawn_prob_per_slot=self.spawn_prob,
            spawn_range_m=(self.spawn_r_min, self.spawn_r_max),
            spawn_speed_mps=(self.spawn_v_min, self.spawn_v_max),
            t_max_slots=self.t_max_slots,
            min_range_m=self.min_range_m,
            max_range_m=self.max_range_m if self.max_range_m > 0 else None,
            max_speed_mps=self.max_speed_mps if self.max_speed_mps > 0 else None,
        )

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, items: dict[str, str]) -> "RunConfig":
        """Apply string-valued overrides, converting each to its field type."""
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, raw in items.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _convert(key, types[key], raw)
        return self.replace(**changes)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, str] | None = None) -> "RunConfig":
        items = parse_config_text(Path(path).read_text())
        items.update(overrides or {})
        return cls().with_overrides(items)

    def dumps(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(out) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    return items


def _convert(key: str, typ: str, raw: str):
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
