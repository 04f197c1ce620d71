"""Small fully connected Q-network with hand-written backpropagation.

Also holds the replay buffer and the one-step Bellman update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

CHECKPOINT_MAGIC = "qnet-v1"


@dataclass
class QNetParams:
    weights: list[np.ndarray]  # weights[k] has shape (fan_out, fan_in)
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have the same number of layers")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: inconsistent weight/bias shapes")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: input size does not match previous layer")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "QNetParams":
        return QNetParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(W).all() and np.isfinite(b).all() for W, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def init_params(layer_dims: Sequence[int], rng: np.random.Generator) -> QNetParams:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return QNetParams(weights, biases)


def zeros_like(params: QNetParams) -> QNetParams:
    return QNetParams([np.zeros_like(W) for W in params.weights], [np.zeros_like(b) for b in params.biases])


def _check_input(params: QNetParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"expected input of length {params.input_dim}, got {x.shape[-1]}")
    return x


def forward(params: QNetParams, x) -> np.ndarray:
    """Q-values for one input vector or a batch (rows)."""
    h = _check_input(params, x)
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W.T + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cache(params: QNetParams, X: np.ndarray):
    acts = [X]
    pre = []
    h = X
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if k < last else z
        acts.append(h)
    return acts, pre


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @classmethod
    def from_experiences(cls, exps: Sequence["Experience"]) -> "Batch":
        return cls(
            np.array([e.state for e in exps], dtype=float),
            np.array([e.action for e in exps], dtype=np.int64),
            np.array([e.reward for e in exps], dtype=float),
            np.array([e.next_state for e in exps], dtype=float),
        )

    def experiences(self) -> list["Experience"]:
        return [Experience(s, int(a), float(r), s2) for s, a, r, s2 in zip(*self)]


def as_batch(batch) -> Batch:
    return batch if isinstance(batch, Batch) else Batch.from_experiences(list(batch))


def bellman_targets(target_params: QNetParams, batch: Batch, gamma: float) -> np.ndarray:
    return batch.rewards + gamma * forward(target_params, batch.next_states).max(axis=1)


def loss_and_grads(params: QNetParams, states, actions, targets) -> tuple[float, QNetParams]:
    """Mean squared TD error over the batch and its gradient w.r.t. params."""
    X = _check_input(params, states)
    actions = np.asarray(actions)
    n = X.shape[0]
    acts, pre = _forward_cache(params, X)
    rows = np.arange(n)
    err = acts[-1][rows, actions] - targets
    loss = float(np.mean(err**2))
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = 2.0 * err / n
    gW = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        gW[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ params.weights[k]) * (pre[k - 1] > 0)
    return loss, QNetParams(gW, gb)


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: QNetParams | None = None
    v: QNetParams | None = None

    def step(self, params: QNetParams, grads: QNetParams) -> QNetParams:
        if self.m is None:
            self.m, self.v = zeros_like(params), zeros_like(params)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        new_w, new_b = [], []
        for store, grad_list, param_list, out in (
            ("weights", grads.weights, params.weights, new_w),
            ("biases", grads.biases, params.biases, new_b),
        ):
            ms, vs = getattr(self.m, store), getattr(self.v, store)
            for k, (g, p) in enumerate(zip(grad_list, param_list)):
                ms[k] = self.beta1 * ms[k] + (1 - self.beta1) * g
                vs[k] = self.beta2 * vs[k] + (1 - self.beta2) * g * g
                out.append(p - self.lr * (ms[k] / c1) / (np.sqrt(vs[k] / c2) + self.eps))
        return QNetParams(new_w, new_b)


def clip_by_norm(grads: QNetParams, max_norm: float) -> QNetParams:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.weights + grads.biases)))
    if not norm > max_norm:
        return grads
    k = max_norm / norm
    return QNetParams([g * k for g in grads.weights], [g * k for g in grads.biases])


def sgd_step(params: QNetParams, grads: QNetParams, lr: float) -> QNetParams:
    return QNetParams(
        [W - lr * g for W, g in zip(params.weights, grads.weights)],
        [b - lr * g for b, g in zip(params.biases, grads.biases)],
    )


def train_step(
    params: QNetParams,
    target_params: QNetParams,
    batch,
    gamma: float,
    lr: float,
    optimizer: Adam | None = None,
    grad_clip: float | None = None,
) -> tuple[QNetParams, float]:
    """One gradient step on the squared Bellman error; returns the pre-step loss.

    ``batch`` is a :class:`Batch` or a sequence of :class:`Experience`. With an
    ``optimizer`` the step uses adaptive moments instead of plain SGD.
    ``grad_clip`` rescales the gradient to at most that global L2 norm.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    b = as_batch(batch)
    if len(b.actions) == 0:
        raise ValueError("empty batch")
    y = bellman_targets(target_params, b, gamma)
    loss, grads = loss_and_grads(params, b.states, b.actions, y)
    if grad_clip is not None:
        grads = clip_by_norm(grads, grad_clip)
    if optimizer is not None:
        return optimizer.step(params, grads), loss
    return sgd_step(params, grads, lr), loss


class Experience(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class InsufficientExperience(ValueError):
    pass


@dataclass
class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest entry is overwritten first."""

    input_dim: int
    capacity: int = 50000
    _states: np.ndarray = field(init=False, repr=False)
    _actions: np.ndarray = field(init=False, repr=False)
    _rewards: np.ndarray = field(init=False, repr=False)
    _next: np.ndarray = field(init=False, repr=False)
    _head: int = field(init=False, default=0)
    _size: int = field(init=False, default=0)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        self._states = np.zeros((self.capacity, self.input_dim))
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rewards = np.zeros(self.capacity)
        self._next = np.zeros((self.capacity, self.input_dim))

    def __len__(self) -> int:
        return self._size

    def add(self, exp: Experience) -> None:
        i = self._head
        self._states[i] = exp.state
        self._actions[i] = exp.action
        self._rewards[i] = exp.reward
        self._next[i] = exp.next_state
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def items(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        return self.gather(self._order()).experiences()

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx], self._next[idx])

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self._size < batch_size:
            raise InsufficientExperience(
                f"insufficient experience: {self._size} stored, {batch_size} requested"
            )
        return rng.choice(self._size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(batch_size, rng))


def sample_batch(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> list[Experience]:
    return buffer.sample(batch_size, rng).experiences()


def save_checkpoint(params: QNetParams, path: str | Path) -> None:
    lines = [CHECKPOINT_MAGIC, " ".join(str(d) for d in params.layer_dims)]
    for W, b in zip(params.weights, params.biases):
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in W)
        lines.append(" ".join(f"{v:.17g}" for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> QNetParams:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    dims = [int(t) for t in lines[1].split()]
    pos = 2
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        rows = lines[pos : pos + fan_out]
        if len(rows) != fan_out:
            raise ValueError(f"{path}: truncated checkpoint")
        weights.append(np.array([[float(t) for t in r.split()] for r in rows]).reshape(fan_out, fan_in))
        biases.append(np.array([float(t) for t in lines[pos + fan_out].split()]).reshape(fan_out))
        pos += fan_out + 1
    return QNetParams(weights, biases)
