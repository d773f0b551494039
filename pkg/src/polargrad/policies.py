"""Per-agent stochastic policies with exact log-probability gradients.

Two families: tabular softmax over logits (discrete actions, one row per
state) and a scalar diagonal Gaussian (continuous actions). Gradients of the
log-density are analytic; tests pin them against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envs import JointAction

__all__ = [
    "SoftmaxPolicy",
    "GaussianPolicy",
    "ExplorationSchedule",
    "prob",
    "log_prob",
    "sample",
    "greedy_joint",
    "grad_log_prob",
    "other_agents_prob",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SoftmaxPolicy:
    """Tabular softmax policy: pi(u|s) = exp(logits[s,u]) / sum_u' exp(logits[s,u'])."""

    logits: np.ndarray  # (states, actions)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a (states, actions) table")

    @classmethod
    def uniform(cls, state_count: int, action_count: int) -> "SoftmaxPolicy":
        """All-zero logits: the uniform policy."""
        return cls(logits=np.zeros((state_count, action_count)))

    @property
    def action_count(self) -> int:
        return self.logits.shape[1]

    def probs(self, state: int) -> np.ndarray:
        row = self.logits[state]
        z = np.exp(row - row.max())
        return z / z.sum()

    def greedy(self, state: int) -> int:
        # np.argmax returns the first maximum: ties break to the lowest index.
        return int(np.argmax(self.probs(state)))

    def copy(self) -> "SoftmaxPolicy":
        return SoftmaxPolicy(logits=self.logits.copy())

    def to_dict(self) -> dict:
        return {"kind": "softmax", "logits": self.logits.tolist()}


@dataclass
class GaussianPolicy:
    """Scalar Gaussian policy with a learned mean and log standard deviation.

    The density never sees clamping: sampled actions are clamped to the action
    bounds only at the environment boundary. The standard deviation used for
    densities and gradients is floored at ``std_floor``.
    """

    mean: float = 0.0
    log_std: float = 0.0
    bounds: tuple = (-10.0, 10.0)
    std_floor: float = 1e-3

    @property
    def std(self) -> float:
        return max(math.exp(self.log_std), self.std_floor)

    def greedy(self, state: int = 0) -> float:
        return self.mean

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean, self.log_std, self.bounds, self.std_floor)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "log_std": self.log_std}


@dataclass(frozen=True)
class ExplorationSchedule:
    """Behaviour-noise schedule: epsilon-greedy or uniform-then-Gaussian-noise.

    epsilon(t) anneals linearly from ``epsilon_start`` at t=0 to
    ``epsilon_end`` at t=anneal_steps and stays there. The uniform-then-noise
    schedule acts uniformly over the action bounds for the first
    ``uniform_steps`` steps, then samples mean + noise_std * N(0, 1).
    """

    kind: str = "epsilon_greedy"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_steps: int = 10_000
    noise_std: float = 1.0
    uniform_steps: int = 10_000

    def __post_init__(self):
        if self.kind not in ("epsilon_greedy", "uniform_then_noise"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon must be nonincreasing over time")

    def epsilon(self, t: int) -> float:
        if t >= self.anneal_steps:
            return self.epsilon_end
        frac = t / self.anneal_steps
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def prob(policy, state, action) -> float:
    """pi(action | state); a probability for softmax, a density for Gaussian."""
    if isinstance(policy, SoftmaxPolicy):
        return float(policy.probs(state)[int(action)])
    return math.exp(log_prob(policy, state, action))


def log_prob(policy, state, action) -> float:
    if isinstance(policy, SoftmaxPolicy):
        row = policy.logits[state]
        shifted = row - row.max()
        return float(shifted[int(action)] - np.log(np.exp(shifted).sum()))
    z = (action - policy.mean) / policy.std
    return -0.5 * z * z - math.log(policy.std) - 0.5 * LOG_2PI


def sample(policy, state, schedule, t, rng):
    """Draw one action under the exploration schedule at step ``t``."""
    if isinstance(policy, SoftmaxPolicy):
        if schedule is not None and schedule.kind != "epsilon_greedy":
            raise ValueError("discrete policies explore with epsilon_greedy")
        if schedule is not None and rng.random() < schedule.epsilon(t):
            return int(rng.integers(policy.action_count))
        p = policy.probs(state)
        return int(rng.choice(policy.action_count, p=p))
    if schedule is not None and schedule.kind != "uniform_then_noise":
        raise ValueError("continuous policies explore with uniform_then_noise")
    lo, hi = policy.bounds
    if schedule is not None and t < schedule.uniform_steps:
        return float(rng.uniform(lo, hi))
    noise = schedule.noise_std if schedule is not None else policy.std
    return float(np.clip(policy.mean + noise * rng.standard_normal(), lo, hi))


def greedy_joint(policies, state) -> JointAction:
    """Per-agent argmax actions (softmax) or the mean vector (Gaussian)."""
    return JointAction(actions=tuple(p.greedy(state) for p in policies))


def grad_log_prob(policy, state, action) -> np.ndarray:
    """Gradient of log pi(action|state) w.r.t. the policy parameters.

    Softmax: the gradient over the state's logit row, ``onehot(action) - pi``
    (rows of other states are identically zero and omitted).
    Gaussian: the vector (d/d mean, d/d log_std).
    """
    if isinstance(policy, SoftmaxPolicy):
        g = -policy.probs(state)
        g[int(action)] += 1.0
        return g
    std = policy.std
    z = (action - policy.mean) / std
    d_mean = z / std
    # When the floor is active the density no longer depends on log_std.
    d_log_std = z * z - 1.0 if math.exp(policy.log_std) > policy.std_floor else 0.0
    return np.array([d_mean, d_log_std])


def other_agents_prob(policies, state, joint_action, excluded_agent) -> float:
    """Product of pi_b(u_b|s) over all agents b except ``excluded_agent``."""
    p = 1.0
    for b, policy in enumerate(policies):
        if b == excluded_agent:
            continue
        p *= prob(policy, state, joint_action[b])
    return p
