"""Enumerable cooperative games with exact reward and transition oracles.

All games share one interface: ``step`` executes a joint action, discrete
games can enumerate their joint action space, and ``optimal_joint_action``
recovers the argmax joint action by brute force (via value iteration for
multi-step games). Games are immutable after construction and safe to share
across concurrent runs; RNG state is always owned by the caller.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AssumptionError",
    "JointAction",
    "MatrixGame",
    "QuadraticBowl",
    "DifferentialGame",
    "TabularMDP",
    "step",
    "enumerate_joint_actions",
    "joint_action_index",
    "optimal_joint_action",
    "value_iteration",
    "bellman_residual",
    "matrix_game_from_dict",
    "tabular_mdp_from_dict",
    "load_game",
    "qtran_matrix_game",
    "max_of_two_quadratics",
]


class AssumptionError(ValueError):
    """A uniqueness assumption (single maximizing joint action) is violated."""


@dataclass(frozen=True)
class JointAction:
    """One action per agent; indices for discrete games, reals for continuous."""

    actions: tuple

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, agent):
        return self.actions[agent]

    def __iter__(self):
        return iter(self.actions)

    def agent(self, a):
        """Action of agent ``a``."""
        return self.actions[a]

    def others(self, a):
        """Actions of all agents except ``a``, in agent order."""
        return self.actions[:a] + self.actions[a + 1 :]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MatrixGame:
    """Single-state one-step game defined by an n-dimensional payoff tensor."""

    n: int
    action_count: int
    payoff: np.ndarray

    discrete = True
    state_count = 1
    initial_state = 0

    def __post_init__(self):
        payoff = np.asarray(self.payoff, dtype=np.float64)
        expected = (self.action_count,) * self.n
        if payoff.shape != expected:
            if payoff.size == self.action_count**self.n:
                payoff = payoff.reshape(expected)
            else:
                raise ValueError(
                    f"payoff has {payoff.size} entries, expected {self.action_count**self.n}"
                )
        object.__setattr__(self, "payoff", _frozen(payoff))

    def reward(self, joint_action) -> float:
        idx = tuple(int(u) for u in joint_action)
        if len(idx) != self.n:
            raise ValueError(f"expected {self.n} actions, got {len(idx)}")
        if any(u < 0 or u >= self.action_count for u in idx):
            raise ValueError(f"action index out of range: {idx}")
        return float(self.payoff[idx])


@dataclass(frozen=True)
class QuadraticBowl:
    """One inverted quadratic: scale * -sum(((u_i - center) / width)^2) + offset."""

    center: float
    width: float
    scale: float
    offset: float = 0.0

    def value(self, actions) -> float:
        z = (np.asarray(actions, dtype=np.float64) - self.center) / self.width
        return float(self.scale * -(z @ z) + self.offset)


@dataclass(frozen=True)
class DifferentialGame:
    """Single-state continuous game whose reward is the max over quadratic bowls."""

    n: int = 2
    bounds: tuple = (-10.0, 10.0)
    surfaces: tuple = (
        QuadraticBowl(center=-5.0, width=5.0, scale=0.8),
        QuadraticBowl(center=5.0, width=1.0, scale=1.0, offset=5.0),
    )

    discrete = False
    state_count = 1
    initial_state = 0

    def reward(self, joint_action) -> float:
        u = np.asarray(tuple(joint_action), dtype=np.float64)
        if u.shape != (self.n,):
            raise ValueError(f"expected {self.n} actions, got {u.shape}")
        lo, hi = self.bounds
        if np.any(u < lo) or np.any(u > hi):
            raise ValueError(f"action outside bounds {self.bounds}: {u}")
        return max(s.value(u) for s in self.surfaces)

    def clamp(self, actions) -> np.ndarray:
        """Clamp raw actions to the game's bounds (the environment boundary)."""
        lo, hi = self.bounds
        return np.clip(np.asarray(actions, dtype=np.float64), lo, hi)


@dataclass(frozen=True)
class TabularMDP:
    """Fully observable cooperative MDP with explicit transition/reward tables.

    Joint actions are flattened lexicographically: the tuple (u_0, ..., u_{n-1})
    maps to index sum(u_a * action_count**(n-1-a)).
    """

    n: int
    state_count: int
    action_count: int
    gamma: float
    transition: np.ndarray  # (S, A^n, S)
    reward: np.ndarray  # (S, A^n)
    initial_state: int = 0
    horizon: int = 100

    discrete = True

    def __post_init__(self):
        A = self.action_count**self.n
        P = np.asarray(self.transition, dtype=np.float64).reshape(
            self.state_count, A, self.state_count
        )
        r = np.asarray(self.reward, dtype=np.float64).reshape(self.state_count, A)
        sums = P.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=1e-9, rtol=0.0):
            raise ValueError("transition rows must sum to 1 within 1e-9")
        if np.any(P < 0):
            raise ValueError("transition probabilities must be nonnegative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "reward", _frozen(r))

    @property
    def joint_action_count(self) -> int:
        return self.action_count**self.n


def joint_action_index(game, joint_action) -> int:
    """Flat lexicographic index of a discrete joint action."""
    idx = 0
    for u in joint_action:
        idx = idx * game.action_count + int(u)
    return idx


def step(game, state, joint_action, rng=None):
    """Execute one joint action; returns (reward, next_state, done).

    One-step games (matrix, differential) terminate immediately and report
    the single absorbing state 0. TabularMDP samples the successor from its
    transition row using ``rng``.
    """
    if isinstance(game, (MatrixGame, DifferentialGame)):
        return game.reward(joint_action), 0, True
    if isinstance(game, TabularMDP):
        idx = tuple(int(u) for u in joint_action)
        if len(idx) != game.n or any(u < 0 or u >= game.action_count for u in idx):
            raise ValueError(f"invalid joint action {idx}")
        a = joint_action_index(game, idx)
        r = float(game.reward[state, a])
        if rng is None:
            raise ValueError("TabularMDP.step requires an rng for the transition draw")
        s2 = int(rng.choice(game.state_count, p=game.transition[state, a]))
        return r, s2, False
    raise TypeError(f"unknown game type {type(game).__name__}")


def enumerate_joint_actions(game):
    """All joint actions of a discrete game in lexicographic order."""
    if not getattr(game, "discrete", False):
        raise TypeError("joint actions of a continuous game cannot be enumerated")
    return [
        JointAction(actions=u)
        for u in itertools.product(range(game.action_count), repeat=game.n)
    ]


def _unique_argmax(values: np.ndarray) -> int:
    """Index of the strict maximum; AssumptionError when the top is tied."""
    order = np.argsort(values)
    best, second = order[-1], order[-2]
    if values[best] - values[second] <= 1e-12 * max(1.0, abs(values[best])):
        raise AssumptionError("joint action values have a tied maximum")
    return int(best)


def optimal_joint_action(game, state=0):
    """Brute-force argmax joint action and its value for a discrete game.

    For one-step games the joint value equals the reward; for TabularMDP the
    optimal Q-function is computed first by value iteration over joint actions.
    """
    if not getattr(game, "discrete", False):
        raise TypeError("optimal joint action requires a discrete game")
    if isinstance(game, MatrixGame):
        values = game.payoff.reshape(-1)
    else:
        q = value_iteration(game)
        values = q[state]
    best = _unique_argmax(values)
    shape = (game.action_count,) * game.n
    actions = tuple(int(i) for i in np.unravel_index(best, shape))
    return JointAction(actions=actions), float(values[best])


def value_iteration(mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal joint-action Q table of a TabularMDP, solved to residual ``tol``.

    This is the independent oracle used by tests: plain fixed-point iteration
    of the Bellman optimality operator, nothing shared with TD learning.
    """
    q = np.zeros((mdp.state_count, mdp.joint_action_count))
    for _ in range(max_iter):
        v = q.max(axis=1)
        q_new = mdp.reward + mdp.gamma * (mdp.transition @ v)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


def bellman_residual(mdp: TabularMDP, q: np.ndarray) -> float:
    """Max-norm residual of the Bellman optimality equation at ``q``."""
    v = q.max(axis=1)
    return float(np.max(np.abs(mdp.reward + mdp.gamma * (mdp.transition @ v) - q)))


def matrix_game_from_dict(obj: dict) -> MatrixGame:
    """Build a MatrixGame from {"n", "actions", "payoff"} with a flat payoff list."""
    return MatrixGame(
        n=int(obj["n"]),
        action_count=int(obj["actions"]),
        payoff=np.asarray(obj["payoff"], dtype=np.float64),
    )


def tabular_mdp_from_dict(obj: dict) -> TabularMDP:
    """Build a TabularMDP from its JSON document form.

    Schema: {"n", "states", "actions", "gamma", "initial_state", "horizon",
    "transition": [S][A^n][S], "reward": [S][A^n]} with joint actions
    flattened lexicographically.
    """
    return TabularMDP(
        n=int(obj["n"]),
        state_count=int(obj["states"]),
        action_count=int(obj["actions"]),
        gamma=float(obj["gamma"]),
        transition=np.asarray(obj["transition"], dtype=np.float64),
        reward=np.asarray(obj["reward"], dtype=np.float64),
        initial_state=int(obj.get("initial_state", 0)),
        horizon=int(obj.get("horizon", 100)),
    )


def load_game(path: str):
    """Load a game from a JSON file; dispatches on the fields present."""
    with open(path) as f:
        obj = json.load(f)
    if "states" in obj:
        return tabular_mdp_from_dict(obj)
    if "payoff" in obj:
        return matrix_game_from_dict(obj)
    raise ValueError(f"unrecognized game document in {path}")


def qtran_matrix_game() -> MatrixGame:
    """The modified 2-agent, 3-action cooperative matrix game benchmark.

    Optimal joint action (A, A) pays 15; the (B, C) x (B, C) block pays 10;
    every mixed A/non-A pairing pays -12.
    """
    payoff = np.array(
        [
            [15.0, -12.0, -12.0],
            [-12.0, 10.0, 10.0],
            [-12.0, 10.0, 10.0],
        ]
    )
    return MatrixGame(n=2, action_count=3, payoff=payoff)


def max_of_two_quadratics() -> DifferentialGame:
    """The two-agent continuous benchmark: suboptimum 0 at (-5,-5), optimum 5 at (5,5)."""
    return DifferentialGame()
