"""Constrained deep Q-learning for dwell-time allocation.

A single Q-network is shared by all tracking tasks. Each slot every live task
picks a dwell fraction, the slot's global Lagrangian reward is credited to all
of them, and the dual variable is moved by projected ascent on the budget
violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import comms, qnet
from .config import RunConfig
from .env import IsacEnv, SlotResult, make_streams
from .scenario import ScenarioScript

ACTION_LEVELS = np.arange(11) / 10.0


@dataclass(frozen=True)
class ActionSpace:
    levels: tuple[float, ...] = tuple(ACTION_LEVELS)

    def __post_init__(self):
        lv = self.levels
        if lv[0] != 0.0 or lv[-1] != 1.0 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("action levels must increase strictly from 0 to 1")

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class Snapshot:
    """Outcome of the previous slot as seen by the agents."""

    azimuth_vars: np.ndarray
    dwells: np.ndarray
    lam: float


@dataclass(frozen=True)
class AgentState:
    azimuth_vars: np.ndarray
    prev_dwells: np.ndarray
    lambda_prev: float
    agent_onehot: np.ndarray | None

    def vector(self) -> np.ndarray:
        parts = [self.azimuth_vars, self.prev_dwells, [self.lambda_prev]]
        if self.agent_onehot is not None:
            parts.append(self.agent_onehot)
        return np.concatenate(parts).astype(float)


def state_dim(n_targets: int, paper_faithful: bool = False) -> int:
    return 2 * n_targets + 1 if paper_faithful else 3 * n_targets + 1


def build_state(snapshot: Snapshot, agent_index: int, n_targets: int = 4, paper_faithful: bool = False) -> AgentState:
    if not 0 <= agent_index < n_targets:
        raise IndexError(f"agent index {agent_index} outside 0..{n_targets - 1}")
    onehot = None
    if not paper_faithful:
        onehot = np.zeros(n_targets)
        onehot[agent_index] = 1.0
    return AgentState(
        np.asarray(snapshot.azimuth_vars, dtype=float).copy(),
        np.asarray(snapshot.dwells, dtype=float).copy(),
        float(snapshot.lam),
        onehot,
    )


def encode(vec: np.ndarray, n_targets: int, sigma_th0_sq: float, lambda_ref: float) -> np.ndarray:
    """Condition raw state features for the network.

    Azimuth variances span several decades, so they enter on a log scale;
    the dual variable is divided by its initial value.
    """
    out = np.array(vec, dtype=float)
    n = n_targets
    out[..., :n] = np.log10(1.0 + out[..., :n] / sigma_th0_sq) / 2.0
    out[..., 2 * n] = out[..., 2 * n] / lambda_ref
    return out


def select_action(params: qnet.QNetParams, state, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties resolve to the lowest index."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    vec = state.vector() if isinstance(state, AgentState) else state
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(params.n_actions))
    return int(np.argmax(qnet.forward(params, vec)))


@dataclass(frozen=True)
class DualState:
    lam: float
    alpha: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("dual variable must be non-negative")
        if not self.alpha > 0:
            raise ValueError("dual step size must be positive")


def dual_update(d: DualState, dwell_sum: float, T0: float) -> DualState:
    return DualState(max(0.0, d.lam + d.alpha * (dwell_sum - T0)), d.alpha)


@dataclass
class TrainingRecord:
    slot: int
    live_count: int
    dwells: np.ndarray
    tau_c: float
    rate: float
    proxy_rate: float
    reward: float
    lam: float
    loss: float


@dataclass
class TrainingResult:
    params: qnet.QNetParams
    dual: DualState
    records: list[TrainingRecord] = field(default_factory=list)


def features(cfg: RunConfig, snapshot: Snapshot, idx) -> np.ndarray:
    """Encoded network inputs for the agents at slot indices ``idx``."""
    N = cfg.max_targets
    if len(idx) == 0:
        return np.zeros((0, state_dim(N, cfg.paper_faithful_state)))
    raw = np.stack([build_state(snapshot, int(n), N, cfg.paper_faithful_state).vector() for n in idx])
    return encode(raw, N, cfg.sigma_th0_sq, max(cfg.lambda0, 1.0))


def greedy_actions(params: qnet.QNetParams, feats: np.ndarray) -> np.ndarray:
    if len(feats) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(qnet.forward(params, feats), axis=1)


# (encoded states of live agents, live indices, rng) -> action indices
Policy = Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


class Agent:
    """Shared Q-network plus replay memory and the dual variable."""

    def __init__(self, cfg: RunConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.N = cfg.max_targets
        self.dim = state_dim(self.N, cfg.paper_faithful_state)
        self.actions = ActionSpace()
        dims = [self.dim, cfg.hidden, cfg.hidden, len(self.actions)]
        self.params = qnet.init_params(dims, rng)
        self.target = self.params.copy()
        self.buffer = qnet.ReplayBuffer(self.dim, cfg.buffer_size)
        self.optimizer = qnet.Adam(cfg.lr) if cfg.optimizer == "adam" else None
        self.dual = DualState(cfg.lambda0, cfg.alpha)
        self.updates = 0

    def features(self, snapshot: Snapshot, idx: np.ndarray) -> np.ndarray:
        return features(self.cfg, snapshot, idx)

    def act(self, feats: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
        if len(feats) == 0:
            return np.zeros(0, dtype=np.int64)
        greedy = greedy_actions(self.params, feats)
        out = np.empty(len(feats), dtype=np.int64)
        for k in range(len(feats)):
            if epsilon > 0 and rng.random() < epsilon:
                out[k] = rng.integers(len(self.actions))
            else:
                out[k] = greedy[k]
        return out

    def learn(self, rng: np.random.Generator) -> float:
        cfg = self.cfg
        if len(self.buffer) < cfg.batch_size:
            return math.nan
        batch = self.buffer.sample(cfg.batch_size, rng)
        clip = cfg.grad_clip if cfg.grad_clip > 0 else None
        self.params, loss = qnet.train_step(
            self.params, self.target, batch, cfg.gamma, cfg.lr, self.optimizer, grad_clip=clip
        )
        self.updates += 1
        if self.updates % cfg.target_period == 0:
            self.target = self.params.copy()
        return loss


def training_slots(
    cfg: RunConfig,
    *,
    slots: int | None = None,
    script: ScenarioScript | None = None,
    policy: Policy | None = None,
    agent: Agent | None = None,
) -> Iterator[tuple[Agent, TrainingRecord]]:
    """Run the training loop lazily, yielding the agent and one record per slot."""
    env_seed, agent_seed, init_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(3))
    env = IsacEnv(cfg, env_seed, training=True, script=script)
    act_rng, replay_rng = make_streams(agent_seed, 2)
    if agent is None:
        agent = Agent(cfg, np.random.Generator(np.random.PCG64(init_seed)))
    levels = ACTION_LEVELS
    lam_prev = agent.dual.lam
    total = cfg.train_slots if slots is None else slots
    for t in range(total):
        live = np.flatnonzero(env.begin_slot())
        snap = Snapshot(env.prev_azimuth_vars, env.prev_dwells, lam_prev)
        feats = agent.features(snap, live)
        if policy is not None:
            actions = np.asarray(policy(feats, live, act_rng), dtype=np.int64)
        else:
            actions = agent.act(feats, cfg.epsilon, act_rng)
        dwells = np.zeros(agent.N)
        dwells[live] = levels[actions]
        res: SlotResult = env.execute(dwells)
        lam = agent.dual.lam
        reward = comms.lagrangian_reward(res.proxy_rate, lam, res.dwell_sum, cfg.T0)
        next_feats = agent.features(Snapshot(res.azimuth_vars, res.dwells, lam), live)
        losses = []
        for k in range(len(live)):
            agent.buffer.add(qnet.Experience(feats[k], int(actions[k]), reward / cfg.reward_scale, next_feats[k]))
            loss = agent.learn(replay_rng)
            if not math.isnan(loss):
                losses.append(loss)
        lam_prev = lam
        agent.dual = dual_update(agent.dual, res.dwell_sum, cfg.T0)
        yield agent, TrainingRecord(
            slot=t,
            live_count=len(live),
            dwells=res.dwells,
            tau_c=res.tau_c,
            rate=res.rate,
            proxy_rate=res.proxy_rate,
            reward=reward,
            lam=lam,
            loss=float(np.mean(losses)) if losses else math.nan,
        )


def run_training(
    cfg: RunConfig,
    *,
    slots: int | None = None,
    script: ScenarioScript | None = None,
    policy: Policy | None = None,
) -> TrainingResult:
    """Train for ``slots`` (default ``cfg.train_slots``) and collect every record."""
    agent = None
    records = []
    for agent, rec in training_slots(cfg, slots=slots, script=script, policy=policy):
        records.append(rec)
    if agent is None:
        init_seed = int(np.random.SeedSequence(cfg.seed).spawn(3)[2].generate_state(1)[0])
        agent = Agent(cfg, np.random.Generator(np.random.PCG64(init_seed)))
    return TrainingResult(agent.params, agent.dual, records)


def constant_policy(level_index: int) -> Policy:
    def policy(feats, live, rng):
        return np.full(len(live), level_index, dtype=np.int64)

    return policy
