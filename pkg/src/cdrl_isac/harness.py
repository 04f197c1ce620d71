"""Evaluation episodes, policy comparison, CSV export and tracking-only runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import cdrl, comms, ekf, qnet, sensing
from .baselines import FixedPolicy
from .config import RunConfig
from .env import IsacEnv, make_streams
from .motion import TargetState, process_noise_cov, step_target, transition_matrix
from .scenario import ScenarioScript


class Policy(Protocol):
    name: str

    def decide(self, env: IsacEnv) -> np.ndarray: ...


@dataclass
class GreedyCdrl:
    """Learned policy acting greedily; the dual variable is frozen at ``lam``."""

    params: qnet.QNetParams
    cfg: RunConfig
    lam: float = 0.0
    name: str = "cdrl"

    def __post_init__(self):
        dim = cdrl.state_dim(self.cfg.max_targets, self.cfg.paper_faithful_state)
        if self.params.input_dim != dim or self.params.n_actions != len(cdrl.ACTION_LEVELS):
            raise ValueError(f"checkpoint shape {self.params.layer_dims} does not fit state size {dim}")

    def decide(self, env: IsacEnv) -> np.ndarray:
        idx = np.flatnonzero(env.live_mask())
        feats = cdrl.features(self.cfg, cdrl.Snapshot(env.prev_azimuth_vars, env.prev_dwells, self.lam), idx)
        out = np.zeros(env.N)
        out[idx] = cdrl.ACTION_LEVELS[cdrl.greedy_actions(self.params, feats)]
        return out


@dataclass
class FixedDwell:
    policy: FixedPolicy
    lam: float = 0.0

    @property
    def name(self) -> str:
        return self.policy.name

    def decide(self, env: IsacEnv) -> np.ndarray:
        return self.policy.dwells(env.live_mask())


def as_policy(p) -> Policy:
    return FixedDwell(p) if isinstance(p, FixedPolicy) else p


@dataclass
class SlotRecord:
    slot: int
    live_count: int
    dwells: np.ndarray
    tau_c: float
    sum_rate: float
    target_rates: np.ndarray
    reward: float
    lam: float
    distances: np.ndarray
    sigma_theta: np.ndarray


@dataclass
class EpisodeMetrics:
    n_targets: int
    records: list[SlotRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def mean_rate(self) -> float:
        return float(np.mean([r.sum_rate for r in self.records])) if self.records else 0.0

    def header(self) -> list[str]:
        n = range(self.n_targets)
        return (
            ["slot", "live_count"]
            + [f"dwell_{k}" for k in n]
            + ["tau_c", "sum_rate"]
            + [f"rate_{k}" for k in n]
            + ["reward", "lambda"]
            + [f"distance_{k}" for k in n]
            + [f"sigma_theta_{k}" for k in n]
        )

    def rows(self) -> Iterable[list]:
        for r in self.records:
            yield (
                [r.slot, r.live_count, *r.dwells, r.tau_c, r.sum_rate, *r.target_rates, r.reward, r.lam]
                + [*r.distances, *r.sigma_theta]
            )


def run_episode(
    policy,
    cfg: RunConfig,
    seed: int,
    *,
    script: ScenarioScript | None = None,
    slots: int | None = None,
    spawn: bool = True,
) -> EpisodeMetrics:
    """One greedy evaluation episode; realized rates use the true target geometry."""
    pol = as_policy(policy)
    env = IsacEnv(cfg, seed, training=False, script=script, spawn=spawn)
    out = EpisodeMetrics(cfg.max_targets)
    lam = float(getattr(pol, "lam", 0.0))
    total = cfg.t_max_slots if slots is None else slots
    for _ in range(total):
        live = env.begin_slot()
        res = env.execute(pol.decide(env))
        reward = comms.lagrangian_reward(res.proxy_rate, lam, res.dwell_sum, cfg.T0)
        out.records.append(
            SlotRecord(
                slot=res.slot,
                live_count=int(live.sum()),
                dwells=res.dwells,
                tau_c=res.tau_c,
                sum_rate=res.rate,
                target_rates=res.target_rates,
                reward=reward,
                lam=lam,
                distances=res.distances,
                sigma_theta=np.sqrt(res.azimuth_vars),
            )
        )
    return out


def episode_seeds(base_seed: int, count: int) -> list[int]:
    """Seeds for a set of evaluation scenarios; every policy sees the same set."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence([base_seed, 1]).spawn(count)]


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    mean_rate: float
    percentage: float
    per_seed: tuple[float, ...]


def compare_policies(
    policies: Sequence,
    seeds: Sequence[int],
    cfg: RunConfig,
    *,
    reference: str | None = "cdrl",
    script: ScenarioScript | None = None,
    slots: int | None = None,
) -> list[SummaryRow]:
    """Average realized sum rate of each policy over the same scenario seeds.

    Percentages are relative to the policy named ``reference`` when present,
    otherwise to the best average.
    """
    if not policies or not seeds:
        raise ValueError("need at least one policy and one scenario")
    pols = [as_policy(p) for p in policies]
    per = [tuple(run_episode(p, cfg, s, script=script, slots=slots).mean_rate for s in seeds) for p in pols]
    means = [float(np.mean(v)) for v in per]
    names = [p.name for p in pols]
    base = means[names.index(reference)] if reference in names else max(means)
    return [
        SummaryRow(n, m, 100.0 * m / base if base > 0 else math.nan, v) for n, m, v in zip(names, means, per)
    ]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.10g}"


def write_table(header: Sequence[str], rows: Iterable[Sequence], path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def export_csv(metrics: EpisodeMetrics, path: str | Path) -> None:
    write_table(metrics.header(), metrics.rows(), path)


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return header, data


def training_table(records: Sequence[cdrl.TrainingRecord], n_targets: int):
    header = (
        ["slot", "live_count"]
        + [f"dwell_{k}" for k in range(n_targets)]
        + ["tau_c", "sum_rate", "proxy_rate", "reward", "lambda", "loss"]
    )
    rows = (
        [r.slot, r.live_count, *r.dwells, r.tau_c, r.rate, r.proxy_rate, r.reward, r.lam, r.loss] for r in records
    )
    return header, rows


def summary_table(rows: Sequence[SummaryRow]):
    return ["policy", "mean_sum_rate", "percentage"], ([r.policy, r.mean_rate, r.percentage] for r in rows)


@dataclass
class NeesResult:
    per_slot: np.ndarray  # mean NEES over runs, one value per slot
    per_run: np.ndarray  # mean NEES over slots, one value per run

    @property
    def average(self) -> float:
        return float(self.per_slot.mean())


def simulate_tracking(
    cfg: RunConfig,
    seed: int,
    *,
    runs: int = 500,
    slots: int = 50,
    dwell_fraction: float = 0.5,
    start_range: float = 5000.0,
    outward: bool = True,
    prior_pos_var: float = 100.0,
    prior_vel_var: float = 25.0,
) -> NeesResult:
    """Tracking only, no learning: one target observed every slot with an aligned beam.

    The filter starts from a prior whose error is drawn from its own covariance,
    so a consistent filter yields NEES close to the state dimension. By default
    targets start at ``start_range`` heading straight away from the radar: a
    random walk that passes close to the origin makes the range/azimuth map
    strongly nonlinear and first-order linearization is no longer honest.
    """
    F = transition_matrix(cfg.T0)
    Q = process_noise_cov(cfg.T0, cfg.sigma_w_sq)
    motion = cfg.motion()
    radar = cfg.radar()
    P0 = np.diag([prior_pos_var, prior_pos_var, prior_vel_var, prior_vel_var])
    L0 = np.sqrt(P0)
    scen_rng, sensor_rng = make_streams(seed, 2)
    tau = dwell_fraction * cfg.T0
    out = np.zeros((runs, slots))
    for k in range(runs):
        phi = scen_rng.uniform(-math.pi, math.pi)
        head = scen_rng.uniform(-math.pi, math.pi)
        if outward:
            head = phi
        speed = scen_rng.uniform(cfg.spawn_v_min, cfg.spawn_v_max)
        truth = TargetState(
            start_range * math.cos(phi), start_range * math.sin(phi), speed * math.cos(head), speed * math.sin(head)
        )
        b = ekf.Belief(truth.vector() + L0 @ scen_rng.standard_normal(4), P0.copy())
        for t in range(slots):
            truth = step_target(truth, motion, scen_rng)
            b = ekf.predict(b, F, Q)
            var = sensing.measurement_noise_variances(sensing.snr(tau, truth.distance, 0.0, 0.0, radar), radar)
            z = sensing.observe(truth, var, sensor_rng)
            H = sensing.measurement_jacobian(b.mean[0], b.mean[1])
            b = ekf.update(b, z, H, np.diag([var.sigma_r_sq, var.sigma_th_sq]))
            out[k, t] = ekf.nees(b, truth.vector())
    return NeesResult(out.mean(axis=0), out.mean(axis=1))


def window_dwell_means(metrics: EpisodeMetrics, far_m: float = 1200.0, near_m: float = 400.0) -> tuple[float, float]:
    """Mean total dwell fraction over far slots (every live target beyond ``far_m``)
    and over near slots (some live target inside ``near_m``), by true distance."""
    far, near = [], []
    for r in metrics.records:
        d = r.distances[r.distances > 0]
        if d.size == 0:
            continue
        if d.min() > far_m:
            far.append(r.dwells.sum())
        elif d.min() < near_m:
            near.append(r.dwells.sum())
    return (float(np.mean(far)) if far else math.nan, float(np.mean(near)) if near else math.nan)
