"""Deep Q-learning for discrete beam selection, in plain numpy.

Online and target multilayer perceptrons (rectified-linear hidden layers,
logistic output so Q-values live in (0, 1)), a uniform replay buffer, epsilon
greedy exploration, and Adam updates.  Everything is float64 and owned by the
agent, which keeps training bit-reproducible and makes the weights directly
accessible to the finite-difference gradient checks in :mod:`nrpos.oracles`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DqnParams:
    hidden: tuple[int, ...] = (64, 32, 32)
    replay_capacity: int = 10_000
    batch_size: int = 64
    target_refresh_steps: int = 100
    learning_rate: float = 1e-3
    discount: float = 1.0
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 0.995
    log_features: bool = True


class MlpQNet:
    """Fully connected net: relu hidden layers, logistic output head."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray, keep: bool = False):
        """Q-values for a batch; with ``keep`` also the layer activations."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = np.where(z > 0, z, 0.0) if i < n - 1 else 1.0 / (1.0 + np.exp(-z))
            acts.append(a)
        return (a, acts) if keep else a

    def gradients(self, x: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        """Mean-squared-error loss on the chosen actions and its weight gradients."""
        q, acts = self.forward(x, keep=True)
        batch = q.shape[0]
        sel = q[np.arange(batch), actions]
        err = sel - targets
        loss = float(np.mean(err**2))
        dq = np.zeros_like(q)
        dq[np.arange(batch), actions] = 2.0 * err / batch
        # logistic head
        delta = dq * q * (1.0 - q)
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return loss, gw, gb

    def copy_from(self, other: "MlpQNet") -> None:
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "MlpQNet":
        out = MlpQNet.__new__(MlpQNet)
        out.sizes = list(self.sizes)
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out

    # flat views used by the finite-difference oracle
    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for arr in self.weights + self.biases:
            arr[...] = vec[pos : pos + arr.size].reshape(arr.shape)
            pos += arr.size


class _Adam:
    def __init__(self, shapes, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m[...] = self.b1 * m + (1 - self.b1) * g
            v[...] = self.b2 * v + (1 - self.b2) * g * g
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class DqnAgent:
    """Beam-selection agent over a fixed discrete codebook.

    Raw state entries are channel-gain norms spanning many decades, so inputs
    pass through a fixed log compression before the net (disable with
    ``log_features=False``).
    """

    def __init__(self, state_dim: int, n_actions: int, params: DqnParams, rng: np.random.Generator):
        self.params = params
        self.n_actions = n_actions
        self.rng = rng
        sizes = [state_dim, *params.hidden, n_actions]
        self.online = MlpQNet(sizes, rng)
        self.target = self.online.clone()
        self.replay: deque[Transition] = deque(maxlen=params.replay_capacity)
        self.epsilon = params.eps_start
        self.step_count = 0
        self.train_count = 0
        self._adam = _Adam(
            [w.shape for w in self.online.weights] + [b.shape for b in self.online.biases],
            params.learning_rate,
        )

    def features(self, state_vec: np.ndarray) -> np.ndarray:
        x = np.asarray(state_vec, dtype=float)
        if not self.params.log_features:
            return x
        return (np.log10(np.abs(x) + 1e-30) + 4.0) / 3.0

    def q_values(self, state_vec: np.ndarray) -> np.ndarray:
        return self.online.forward(self.features(state_vec))[0]

    def select_beam(self, state_vec: np.ndarray, explore: bool) -> int:
        x = np.asarray(state_vec, dtype=float)
        if x.size != self.online.sizes[0]:
            raise ValueError(f"state has {x.size} entries, net expects {self.online.sizes[0]}")
        if explore and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(x)))

    def remember(self, state, action: int, reward: float, next_state) -> None:
        self.replay.append(
            Transition(np.asarray(state, float).copy(), int(action), float(reward), np.asarray(next_state, float).copy())
        )

    def train_step(self, batch: list[Transition] | None = None) -> float | None:
        """One Adam update on a replay batch; returns the batch loss.

        Target: reward + discount * max_a Q_target(next_state).  The target
        net is refreshed every ``target_refresh_steps`` updates.
        """
        if batch is None:
            n = len(self.replay)
            if n < self.params.batch_size:
                return None
            idx = self.rng.choice(n, size=self.params.batch_size, replace=False)
            batch = [self.replay[int(i)] for i in idx]
        states = np.stack([self.features(t.state) for t in batch])
        nexts = np.stack([self.features(t.next_state) for t in batch])
        actions = np.array([t.action for t in batch])
        rewards = np.array([t.reward for t in batch])
        q_next = self.target.forward(nexts)
        targets = rewards + self.params.discount * q_next.max(axis=1)
        loss, gw, gb = self.online.gradients(states, actions, targets)
        self._adam.step(self.online.weights + self.online.biases, gw + gb)
        self.train_count += 1
        if self.train_count % self.params.target_refresh_steps == 0:
            self.target.copy_from(self.online)
        return loss

    def batch_loss(self, batch: list[Transition]) -> float:
        """Loss of the current online weights on a fixed batch (no update)."""
        states = np.stack([self.features(t.state) for t in batch])
        nexts = np.stack([self.features(t.next_state) for t in batch])
        actions = np.array([t.action for t in batch])
        rewards = np.array([t.reward for t in batch])
        q_next = self.target.forward(nexts)
        targets = rewards + self.params.discount * q_next.max(axis=1)
        q = self.online.forward(states)
        sel = q[np.arange(len(batch)), actions]
        return float(np.mean((sel - targets) ** 2))

    def end_episode(self) -> None:
        self.epsilon = max(self.params.eps_end, self.epsilon * self.params.eps_decay)
