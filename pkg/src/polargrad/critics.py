"""Joint-action value estimation: tabular and feedforward critics, double
critics with target copies, a ring replay buffer, and 1-step TD learning.

The TD target for critic k bootstraps from its own target copy at the
greedy joint action of the current policies; targets are constants (no
gradient flows through them) and only move on an explicit sync.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import kernels
from .envs import joint_action_index
from .policies import greedy_joint

__all__ = [
    "Transition",
    "Minibatch",
    "TabularCritic",
    "FeedforwardCritic",
    "CriticEnsemble",
    "ReplayBuffer",
    "predict",
    "td_update",
    "sync_targets",
]


@dataclass(frozen=True)
class Transition:
    """One step of experience. Observations equal the state (full observability)."""

    state: int
    actions: tuple
    reward: float
    next_state: int
    done: bool


@dataclass(frozen=True)
class Minibatch:
    """Column-oriented batch of transitions."""

    states: np.ndarray
    actions: np.ndarray  # (K, n)
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


class TabularCritic:
    """Exact joint-action value table over (state, flattened joint action)."""

    def __init__(self, state_count, n, action_count, learning_rate=0.1, init_noise=0.0, seed=None):
        self.n = n
        self.action_count = action_count
        self.learning_rate = learning_rate
        self.q = np.zeros((state_count, action_count**n))
        if init_noise:
            rng = np.random.default_rng(seed)
            self.q += init_noise * rng.uniform(-1.0, 1.0, self.q.shape)

    def index(self, joint_action) -> int:
        idx = 0
        for u in joint_action:
            idx = idx * self.action_count + int(u)
        return idx

    def predict(self, state, joint_action) -> float:
        return float(self.q[state, self.index(joint_action)])

    def predict_indexed(self, states, action_indices) -> np.ndarray:
        return self.q[states, action_indices]

    def to_dict(self) -> dict:
        return {"kind": "tabular", "q": self.q.tolist()}


class FeedforwardCritic:
    """Small tanh MLP over concatenated joint-action features.

    Layer sizes are (input, hidden, hidden, 1); continuous actions are scaled
    by ``feature_scale`` before entering the network so inputs stay near
    [-1, 1]. Trained with plain SGD via the selected kernel backend.
    """

    def __init__(self, layer_sizes=(2, 64, 64, 1), learning_rate=1e-3,
                 feature_scale=1.0, seed=None):
        if len(layer_sizes) != 4 or layer_sizes[-1] != 1:
            raise ValueError("layer_sizes must be (input, hidden, hidden, 1)")
        self.layer_sizes = tuple(layer_sizes)
        self.learning_rate = learning_rate
        self.feature_scale = feature_scale
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            w = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-w, w, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-w, w, fan_out))

    def features(self, state, joint_action) -> np.ndarray:
        del state  # single-state games: features are the scaled actions
        return np.asarray(tuple(joint_action), dtype=np.float64) / self.feature_scale

    def predict(self, state, joint_action) -> float:
        x = self.features(state, joint_action)[None, :]
        return float(kernels.forward(x, self.weights, self.biases)[0])

    def predict_batch(self, X) -> np.ndarray:
        return kernels.forward(np.ascontiguousarray(X), self.weights, self.biases)

    def sgd_step(self, X, y) -> float:
        """One SGD step on the halved MSE against targets ``y``; returns the MSE."""
        return kernels.sgd_mse_step(
            np.ascontiguousarray(X), np.ascontiguousarray(y, dtype=np.float64),
            self.weights, self.biases, self.learning_rate,
        )

    def output_gradients(self, x):
        """Analytic gradients of the scalar output at input ``x`` w.r.t. parameters."""
        X = np.ascontiguousarray(x, dtype=np.float64)[None, :]
        _, h1, h2 = kernels.forward_cached(X, self.weights, self.biases)
        return kernels.param_grads(X, h1, h2, np.ones(1), self.weights)

    def to_dict(self) -> dict:
        return {
            "kind": "feedforward",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


def predict(critic, state, joint_action) -> float:
    """Q(state, joint action) from either critic family."""
    return critic.predict(state, joint_action)


class CriticEnsemble:
    """Two critics plus target copies; targets sync by exact parameter copy."""

    def __init__(self, critic_1, critic_2, sync_period=200):
        self.critic_1 = critic_1
        self.critic_2 = critic_2
        self.sync_period = sync_period
        self.target_1 = copy.deepcopy(critic_1)
        self.target_2 = copy.deepcopy(critic_2)

    @property
    def critics(self):
        return (self.critic_1, self.critic_2)

    @property
    def targets(self):
        return (self.target_1, self.target_2)

    @classmethod
    def tabular(cls, state_count, n, action_count, learning_rate=0.1,
                init_noise=0.01, seed=0, sync_period=200):
        c1 = TabularCritic(state_count, n, action_count, learning_rate, init_noise, seed)
        c2 = TabularCritic(state_count, n, action_count, learning_rate, init_noise, seed + 1)
        return cls(c1, c2, sync_period)

    @classmethod
    def feedforward(cls, input_dim, hidden=64, learning_rate=1e-3,
                    feature_scale=1.0, seed=0, sync_period=200):
        sizes = (input_dim, hidden, hidden, 1)
        c1 = FeedforwardCritic(sizes, learning_rate, feature_scale, seed)
        c2 = FeedforwardCritic(sizes, learning_rate, feature_scale, seed + 1)
        return cls(c1, c2, sync_period)


def sync_targets(ensemble: CriticEnsemble) -> None:
    """target_k <- critic_k, bit-exactly."""
    ensemble.target_1 = copy.deepcopy(ensemble.critic_1)
    ensemble.target_2 = copy.deepcopy(ensemble.critic_2)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, n_agents: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros(capacity, dtype=np.int64)
        self.actions = np.zeros((capacity, n_agents))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros(capacity, dtype=np.int64)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._pos = 0

    def __len__(self):
        return self.size

    def add(self, transition: Transition) -> None:
        i = self._pos
        self.states[i] = transition.state
        self.actions[i] = transition.actions
        self.rewards[i] = transition.reward
        self.next_states[i] = transition.next_state
        self.dones[i] = transition.done
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, k: int, rng) -> Minibatch:
        """Uniform sample of ``k`` transitions with replacement."""
        if self.size == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=k)
        return Minibatch(
            states=self.states[idx].copy(),
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            next_states=self.next_states[idx].copy(),
            dones=self.dones[idx].copy(),
        )


def _greedy_features(critic, policies, states):
    """Feedforward features of the greedy joint action at each batch state."""
    greedy = np.asarray(tuple(greedy_joint(policies, 0)), dtype=np.float64)
    X = np.tile(greedy / critic.feature_scale, (len(states), 1))
    return X


def td_update(ensemble: CriticEnsemble, minibatch: Minibatch, policies,
              gamma: float = 0.99) -> float:
    """One TD step per critic on y = r + (1-done) * gamma * target(s', greedy).

    Returns the mean squared TD error across both critics, measured before
    the step. Target networks are never touched here.
    """
    if len(minibatch) == 0:
        raise ValueError("minibatch must be nonempty")
    losses = []
    if isinstance(ensemble.critic_1, TabularCritic):
        c = ensemble.critic_1
        a_idx = np.zeros(len(minibatch), dtype=np.int64)
        for col in range(minibatch.actions.shape[1]):
            a_idx = a_idx * c.action_count + minibatch.actions[:, col].astype(np.int64)
        greedy_idx = np.array(
            [joint_action_index(c, greedy_joint(policies, s)) for s in range(c.q.shape[0])]
        )
        boot = greedy_idx[minibatch.next_states]
        for critic, target in zip(ensemble.critics, ensemble.targets):
            y = minibatch.rewards + np.where(
                minibatch.dones, 0.0, gamma * target.q[minibatch.next_states, boot]
            )
            resid = y - critic.q[minibatch.states, a_idx]
            update = np.zeros_like(critic.q)
            np.add.at(update, (minibatch.states, a_idx), resid / len(minibatch))
            critic.q += critic.learning_rate * update
            losses.append(float(np.mean(resid * resid)))
    else:
        c1 = ensemble.critic_1
        X = np.ascontiguousarray(minibatch.actions / c1.feature_scale)
        for critic, target in zip(ensemble.critics, ensemble.targets):
            if np.all(minibatch.dones):
                y = minibatch.rewards
            else:
                Xg = _greedy_features(critic, policies, minibatch.next_states)
                boot = target.predict_batch(Xg)
                y = minibatch.rewards + np.where(minibatch.dones, 0.0, gamma * boot)
            losses.append(critic.sgd_step(X, y))
    return float(np.mean(losses))
