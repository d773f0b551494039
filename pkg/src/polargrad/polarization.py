"""Polarization transforms of joint-action values, marginal values, the
enlargement-factor threshold, the pessimistic two-critic bound, and the
gradient clipping rule.

Exponentials are computed in log space and saturate at the largest finite
double instead of overflowing; saturations are counted for diagnostics.
Ranking decisions in the verification suite use the log-space forms directly,
so saturation never corrupts an argmax.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .policies import SoftmaxPolicy, prob

__all__ = [
    "PolarizationParams",
    "SaturationCounter",
    "SATURATION",
    "saturating_exp",
    "DegeneratePolicyError",
    "q_ppg_hard",
    "q_ppg_soft",
    "q_ppg_baseline",
    "q_hat_ppg",
    "marginal",
    "marginal_ppg",
    "log_polarized_marginals",
    "alpha_threshold",
    "clipped_coefficient",
]

log = logging.getLogger(__name__)

_EXP_MAX = math.log(np.finfo(np.float64).max)  # ~709.78
_F64_MAX = float(np.finfo(np.float64).max)


class DegeneratePolicyError(ValueError):
    """A policy assigns zero probability where the threshold needs log of it."""


class SaturationCounter:
    """Counts saturated exponentials for post-hoc diagnostics."""

    def __init__(self):
        self.count = 0
        self._warned = False

    def hit(self):
        self.count += 1
        if not self._warned:
            log.warning("polarization exponential saturated; value capped at float max")
            self._warned = True

    def reset(self):
        self.count = 0
        self._warned = False


SATURATION = SaturationCounter()


def saturating_exp(exponent: float, counter: SaturationCounter = None) -> float:
    """exp(exponent), saturating at the largest finite double instead of inf."""
    if exponent >= _EXP_MAX:
        (counter or SATURATION).hit()
        return _F64_MAX
    return math.exp(exponent)


@dataclass(frozen=True)
class PolarizationParams:
    """alpha: enlargement factor; beta: scale; cap_L: pessimistic cap on the
    polarized coefficient; prob_clip_P: probability threshold of the clipping rule."""

    alpha: float = 1.0
    beta: float = 1.0
    cap_L: float = 10.0
    prob_clip_P: float = 0.9

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.5 <= self.prob_clip_P < 1.0:
            raise ValueError("prob_clip_P must lie in [0.5, 1)")
        if self.cap_L <= 0:
            raise ValueError("cap_L must be positive")


def q_ppg_hard(joint_action, optimal_joint_action) -> float:
    """Indicator polarization: 1 when the joint action is the optimum, else 0."""
    return 1.0 if tuple(joint_action) == tuple(optimal_joint_action) else 0.0


def q_ppg_soft(q: float, alpha: float) -> float:
    """Soft polarization exp(alpha * q)."""
    return saturating_exp(alpha * q)


def q_ppg_baseline(q: float, q_curr: float, params: PolarizationParams) -> float:
    """Baselined polarization (1/beta) * exp(alpha * (q - q_curr))."""
    return saturating_exp(params.alpha * (q - q_curr) - math.log(params.beta))


def q_hat_ppg(ensemble, state, joint_action, u_curr, params: PolarizationParams) -> float:
    """Pessimistic polarized value from the two target critics.

    exp(alpha * (min_k target_k(s, u) - max_k target_k(s, u_curr))); the
    1/beta prefactor is applied by the loss, not here.
    """
    q_u = min(t.predict(state, joint_action) for t in ensemble.targets)
    q_c = max(t.predict(state, u_curr) for t in ensemble.targets)
    return saturating_exp(params.alpha * (q_u - q_c))


def marginal(q_fn, state, agent, action, policies, n_samples=None, rng=None) -> float:
    """Expected joint value over the other agents' policies at a fixed own action.

    Discrete policies: the exact sum over all completions. Gaussian policies:
    a Monte Carlo mean over ``n_samples`` draws from the other agents' action
    distributions (draws are clamped to the action bounds before evaluation).
    """
    if isinstance(policies[agent], SoftmaxPolicy):
        total = 0.0
        others = [b for b in range(len(policies)) if b != agent]
        rows = {b: policies[b].probs(state) for b in others}
        for completion in itertools.product(
            *(range(policies[b].action_count) for b in others)
        ):
            weight = 1.0
            joint = [None] * len(policies)
            joint[agent] = action
            for b, u_b in zip(others, completion):
                weight *= rows[b][u_b]
                joint[b] = u_b
            total += weight * q_fn(state, tuple(joint))
        return total
    if n_samples is None or rng is None:
        raise ValueError("continuous marginals need n_samples and an rng")
    total = 0.0
    for _ in range(n_samples):
        joint = []
        for b, p in enumerate(policies):
            if b == agent:
                joint.append(action)
            else:
                lo, hi = p.bounds
                joint.append(float(np.clip(p.mean + p.std * rng.standard_normal(), lo, hi)))
        total += q_fn(state, tuple(joint))
    return total / n_samples


def marginal_ppg(state, agent, action, policies, q_ppg_fn, n_samples=None, rng=None) -> float:
    """Polarized marginal: ``marginal`` with a polarized joint value function."""
    return marginal(q_ppg_fn, state, agent, action, policies, n_samples, rng)


def _prob_rows(q: np.ndarray, policies, state: int) -> np.ndarray:
    rows = np.stack([p.probs(state) for p in policies])
    if rows.shape != (q.ndim, q.shape[0]):
        raise ValueError("policies do not match the joint value table")
    return rows


def log_polarized_marginals(q: np.ndarray, policies, agent: int, alpha: float,
                            state: int = 0, q_curr: float = 0.0) -> np.ndarray:
    """log M^PPG(s, u_a) for every action of ``agent``, by exact enumeration.

    ``q`` is the joint value tensor of one state, shape (U,)*n. Computed fully
    in log space so huge enlargement factors keep exact rankings. ``q_curr``
    shifts all entries identically and cannot change the argmax.
    """
    q = np.asarray(q, dtype=np.float64)
    rows = _prob_rows(q, policies, state)
    n = q.ndim
    logw = alpha * (q - q_curr)
    for b in range(n):
        if b == agent:
            continue
        shape = [1] * n
        shape[b] = q.shape[b]
        logw = logw + np.log(rows[b]).reshape(shape)
    axes = tuple(b for b in range(n) if b != agent)
    return logsumexp(logw, axis=axes)


def alpha_threshold(q: np.ndarray, policies, state: int = 0) -> float:
    """Smallest enlargement factor guaranteeing optimality consistency.

    max over agents of log pi_{-a}(u*_{-a}|s) / (Q(s, u^sec) - Q(s, u*)),
    where u* and u^sec are the best and second-best joint actions. Both
    numerator and denominator are negative, so the result is positive.
    """
    q = np.asarray(q, dtype=np.float64)
    rows = _prob_rows(q, policies, state)
    flat = q.reshape(-1)
    order = np.argsort(flat)
    best, second = order[-1], order[-2]
    if flat[best] - flat[second] <= 1e-12 * max(1.0, abs(flat[best])):
        raise ValueError("joint action values have a tied maximum")
    u_star = np.unravel_index(best, q.shape)
    gap = float(flat[second] - flat[best])  # negative
    worst = 0.0
    for a in range(q.ndim):
        log_pi = sum(
            math.log(rows[b][u_star[b]]) if rows[b][u_star[b]] > 0 else -math.inf
            for b in range(q.ndim)
            if b != a
        )
        if math.isinf(log_pi):
            raise DegeneratePolicyError(
                "some agent gives the optimal joint action zero probability"
            )
        worst = max(worst, log_pi / gap)
    return worst


def clipped_coefficient(q_hat: float, probs_of_taken_actions, params: PolarizationParams) -> float:
    """Actor-gradient coefficient after the clipping rule.

    Zero when the pessimistic polarized value is below 1 or when every
    taken-action probability exceeds P; otherwise min(q_hat, L) / beta.
    """
    if q_hat < 1.0:
        return 0.0
    if len(probs_of_taken_actions) > 0 and all(
        p > params.prob_clip_P for p in probs_of_taken_actions
    ):
        return 0.0
    return min(q_hat, params.cap_L) / params.beta
