"""Dynamic multi-target scenarios: random spawning, CV motion, age-based removal.

Scenarios are either generated from a seed or replayed from a script file::

    # comment
    spawn <slot> <x> <y> <vx> <vy>
    remove <slot> <target_id>

Scripted targets get ids in the order their ``spawn`` lines appear (from 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .motion import MotionConfig, TargetState, step_target


class ScenarioFull(RuntimeError):
    pass


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    max_targets_N: int = 4
    max_age_slots: int = 3000
    spawn_prob_per_slot: float = 0.002
    spawn_range_m: tuple[float, float] = (200.0, 1500.0)
    spawn_speed_mps: tuple[float, float] = (5.0, 30.0)
    t_max_slots: int = 7000
    min_range_m: float = 10.0
    # Surveillance-region constraints; None disables each one.
    max_range_m: float | None = 2500.0
    max_speed_mps: float | None = 30.0

    def __post_init__(self):
        if self.max_targets_N < 1:
            raise ValueError("max_targets_N must be at least 1")
        r_min, r_max = self.spawn_range_m
        v_min, v_max = self.spawn_speed_mps
        if not 0 < r_min <= r_max:
            raise ValueError("spawn_range_m must satisfy 0 < r_min <= r_max")
        if not 0 <= v_min <= v_max:
            raise ValueError("spawn_speed_mps must satisfy 0 <= v_min <= v_max")
        if not 0 <= self.spawn_prob_per_slot <= 1:
            raise ValueError("spawn_prob_per_slot must be a probability")
        if self.max_range_m is not None and self.max_range_m <= self.min_range_m:
            raise ValueError("max_range_m must exceed min_range_m")


@dataclass
class Target:
    target_id: int
    state: TargetState


@dataclass
class World:
    """Live targets keyed by their fixed slot index in ``0..N-1``."""

    max_targets: int
    targets: dict[int, Target] = field(default_factory=dict)
    next_id: int = 0

    @property
    def live_count(self) -> int:
        return len(self.targets)

    def free_index(self) -> int | None:
        for i in range(self.max_targets):
            if i not in self.targets:
                return i
        return None

    def add(self, state: TargetState, target_id: int | None = None) -> int:
        idx = self.free_index()
        if idx is None:
            raise ScenarioFull("environment already holds the maximum number of targets")
        if target_id is None:
            target_id = self.next_id
        self.next_id = max(self.next_id, target_id + 1)
        self.targets[idx] = Target(target_id, state)
        return idx

    def remove_id(self, target_id: int) -> int | None:
        for idx, t in self.targets.items():
            if t.target_id == target_id:
                del self.targets[idx]
                return idx
        return None


def spawn_target(cfg: ScenarioConfig, rng: np.random.Generator, world: World | None = None) -> TargetState:
    if world is not None and world.live_count >= cfg.max_targets_N:
        raise ScenarioFull("environment already holds the maximum number of targets")
    r = rng.uniform(*cfg.spawn_range_m)
    phi = math.pi - rng.uniform(0.0, 2.0 * math.pi)  # (-pi, pi]
    speed = rng.uniform(*cfg.spawn_speed_mps)
    heading = rng.uniform(-math.pi, math.pi)
    return TargetState(
        r * math.cos(phi),
        r * math.sin(phi),
        speed * math.cos(heading),
        speed * math.sin(heading),
        0,
    )


def constrain(state: TargetState, cfg: ScenarioConfig) -> TargetState:
    """Keep a target inside the surveillance annulus with bounded speed.

    Targets closer than ``min_range_m`` have their velocity negated. Targets
    beyond ``max_range_m`` moving outward have the radial velocity component
    reflected. Speeds above ``max_speed_mps`` are rescaled onto the limit.
    """
    x, y, vx, vy = state.x, state.y, state.vx, state.vy
    r = math.hypot(x, y)
    if r < cfg.min_range_m:
        vx, vy = -vx, -vy
    elif cfg.max_range_m is not None and r > cfg.max_range_m:
        ux, uy = x / r, y / r
        radial = vx * ux + vy * uy
        if radial > 0:
            vx -= 2.0 * radial * ux
            vy -= 2.0 * radial * uy
    if cfg.max_speed_mps is not None:
        speed = math.hypot(vx, vy)
        if speed > cfg.max_speed_mps:
            k = cfg.max_speed_mps / speed
            vx, vy = vx * k, vy * k
    if (vx, vy) == (state.vx, state.vy):
        return state
    return TargetState(x, y, vx, vy, state.age_slots)


def move_targets(world: World, cfg: ScenarioConfig, motion: MotionConfig, rng: np.random.Generator) -> None:
    for idx in sorted(world.targets):
        t = world.targets[idx]
        t.state = constrain(step_target(t.state, motion, rng), cfg)


def remove_aged(world: World, cfg: ScenarioConfig) -> list[int]:
    gone = [i for i, t in world.targets.items() if t.state.age_slots > cfg.max_age_slots]
    for i in gone:
        del world.targets[i]
    return gone


def maybe_spawn(world: World, cfg: ScenarioConfig, rng: np.random.Generator) -> int | None:
    # The Bernoulli draw is taken every slot so the stream does not depend on occupancy.
    fire = rng.random() < cfg.spawn_prob_per_slot
    if fire and world.live_count < cfg.max_targets_N:
        return world.add(spawn_target(cfg, rng))
    return None


def step_scenario(world: World, cfg: ScenarioConfig, motion: MotionConfig, rng: np.random.Generator) -> World:
    """Advance one slot: move, drop targets older than the age limit, maybe spawn."""
    move_targets(world, cfg, motion, rng)
    remove_aged(world, cfg)
    maybe_spawn(world, cfg, rng)
    return world


@dataclass(frozen=True)
class SpawnDirective:
    slot: int
    target_id: int
    state: TargetState


@dataclass(frozen=True)
class RemoveDirective:
    slot: int
    target_id: int


@dataclass
class ScenarioScript:
    spawns: list[SpawnDirective] = field(default_factory=list)
    removals: list[RemoveDirective] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "ScenarioScript":
        script = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "spawn" and len(parts) == 6:
                    slot = int(parts[1])
                    x, y, vx, vy = map(float, parts[2:])
                    st = TargetState(x, y, vx, vy, 0)
                    if st.distance <= 0:
                        raise ScriptError(f"line {lineno}: target at the radar origin")
                    script.spawns.append(SpawnDirective(slot, len(script.spawns), st))
                elif parts[0] == "remove" and len(parts) == 3:
                    script.removals.append(RemoveDirective(int(parts[1]), int(parts[2])))
                else:
                    raise ScriptError(f"line {lineno}: cannot parse {raw!r}")
            except ValueError as exc:
                if isinstance(exc, ScriptError):
                    raise
                raise ScriptError(f"line {lineno}: {exc}") from None
            if parts[1].startswith("-"):
                raise ScriptError(f"line {lineno}: negative slot")
        return script

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioScript":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        lines = [
            f"spawn {d.slot} {d.state.x!r} {d.state.y!r} {d.state.vx!r} {d.state.vy!r}" for d in self.spawns
        ]
        lines += [f"remove {d.slot} {d.target_id}" for d in self.removals]
        return "\n".join(lines) + "\n"

    def apply(self, world: World, slot: int) -> None:
        for d in self.removals:
            if d.slot == slot:
                world.remove_id(d.target_id)
        for d in self.spawns:
            if d.slot == slot:
                world.add(d.state, d.target_id)


def window_script(
    far_radii: Sequence[float],
    near_radii: Sequence[float],
    window_slots: int,
    windows: int,
    rng: np.random.Generator,
    speed: float = 0.0,
) -> ScenarioScript:
    """Alternate far and near windows, starting with far.

    Each window spawns one target per radius at a random bearing (and random
    heading when ``speed`` > 0) and removes them all when the window ends.
    """
    script = ScenarioScript()
    slot = 0
    for w in range(windows):
        ids = []
        for r in far_radii if w % 2 == 0 else near_radii:
            phi, head = rng.uniform(-math.pi, math.pi, size=2)
            st = TargetState(r * math.cos(phi), r * math.sin(phi), speed * math.cos(head), speed * math.sin(head), 0)
            ids.append(len(script.spawns))
            script.spawns.append(SpawnDirective(slot, ids[-1], st))
        slot += window_slots
        script.removals.extend(RemoveDirective(slot, i) for i in ids)
    return script
