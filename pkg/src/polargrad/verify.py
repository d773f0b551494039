"""Numeric verification of the optimality results by exact enumeration.

Three checks: optimality consistency (every agent's polarized marginal peaks
at its component of the optimal joint action once the enlargement factor
clears its threshold), single-agent ascent (monotone value improvement to the
marginal argmax under the smooth stepsize bound), and joint improvement
(per-agent ascent against frozen co-players reaches the optimal joint
action). A witness search reproduces the miscoordination pathology that the
polarization removes.

Ascent marginals anchor the polarization baseline at the best joint value, so
the transformed values lie in (0, 1] for any enlargement factor; the anchor
rescales all marginals identically and never changes an argmax. Ranking
checks work in log space for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .learner import ConfigError
from .polarization import alpha_threshold, log_polarized_marginals
from .policies import SoftmaxPolicy

__all__ = [
    "TheoremReport",
    "CdmWitness",
    "stepsize_bound",
    "random_instance",
    "check_optimality_consistency",
    "lemma1_ascent",
    "theorem2_joint_improvement",
    "find_cdm_instance",
    "theorem1_sweep",
    "lemma1_sweep",
    "theorem2_sweep",
]


@dataclass(frozen=True)
class TheoremReport:
    kind: str
    n: int
    action_count: int
    seed: int
    threshold: float
    alpha: float
    passed: bool
    agent_argmax: tuple
    optimal: tuple
    extra: dict = field(default_factory=dict)

    CSV_HEADER = "kind,n,actions,seed,threshold,alpha,passed,agent_argmax,optimal"

    def csv_row(self) -> str:
        return ",".join(
            [
                self.kind,
                str(self.n),
                str(self.action_count),
                str(self.seed),
                "%.6f" % self.threshold,
                "%.6f" % self.alpha,
                str(int(self.passed)),
                "|".join(map(str, self.agent_argmax)),
                "|".join(map(str, self.optimal)),
            ]
        )


@dataclass(frozen=True)
class CdmWitness:
    """An agent whose raw marginal ranks a suboptimal action above its
    component of the optimal joint action."""

    agent: int
    u_star: tuple
    u_sharp: int
    marginals: np.ndarray


def stepsize_bound(gamma: float) -> float:
    """The smooth-ascent stepsize bound (1 - gamma)^3 / 8."""
    return (1.0 - gamma) ** 3 / 8.0


def _unique_best(q: np.ndarray):
    flat = q.reshape(-1)
    order = np.argsort(flat)
    best, second = order[-1], order[-2]
    if flat[best] - flat[second] <= 1e-12 * max(1.0, abs(flat[best])):
        raise ValueError("joint action values have a tied maximum")
    return tuple(int(i) for i in np.unravel_index(best, q.shape)), float(flat[best])


def random_instance(rng, n: int, action_count: int):
    """A random joint value tensor (entries i.i.d. uniform on [-1, 1], ties
    within 1e-9 regenerated) and random positive policies (flat simplex draws
    floored at 1e-3)."""
    while True:
        q = rng.uniform(-1.0, 1.0, (action_count,) * n)
        flat = np.sort(q.reshape(-1))
        if np.min(np.diff(flat)) > 1e-9:
            break
    policies = []
    for _ in range(n):
        p = rng.dirichlet(np.ones(action_count))
        p = np.maximum(p, 1e-3)
        p = p / p.sum()
        policies.append(SoftmaxPolicy(logits=np.log(p)[None, :]))
    return q, policies


def check_optimality_consistency(q, policies, alpha: float, seed: int = -1) -> TheoremReport:
    """Does every agent's polarized marginal argmax match the optimal joint
    action's component? Exact enumeration in log space."""
    q = np.asarray(q, dtype=np.float64)
    u_star, _ = _unique_best(q)
    argmaxes = []
    for a in range(q.ndim):
        log_m = log_polarized_marginals(q, policies, a, alpha)
        argmaxes.append(int(np.argmax(log_m)))
    passed = all(m == u for m, u in zip(argmaxes, u_star))
    return TheoremReport(
        kind="theorem1",
        n=q.ndim,
        action_count=q.shape[0],
        seed=seed,
        threshold=alpha_threshold(q, policies),
        alpha=alpha,
        passed=passed,
        agent_argmax=tuple(argmaxes),
        optimal=u_star,
    )


def _anchored_marginal(q, policies, agent: int, alpha: float, beta: float = 1.0,
                       prob_rows=None) -> np.ndarray:
    """Polarized marginal vector with the baseline anchored at max q.

    Anchoring keeps every transformed value in (0, 1/beta]; tiny joint-value
    gaps with huge enlargement factors underflow harmlessly to zero instead
    of overflowing.
    """
    q = np.asarray(q, dtype=np.float64)
    n = q.ndim
    w = np.exp(alpha * (q - q.max())) / beta
    for b in range(n):
        if b == agent:
            continue
        row = prob_rows[b] if prob_rows is not None else policies[b].probs(0)
        view = [1] * n
        view[b] = q.shape[b]
        w = w * row.reshape(view)
    return w.sum(axis=tuple(b for b in range(n) if b != agent))


def lemma1_ascent(q, agent: int, frozen_policies, eta: float, iterations: int,
                  alpha: float = 1.0, beta: float = 1.0, gamma: float = 0.9,
                  force: bool = False):
    """Exact softmax gradient ascent of one agent against frozen co-players.

    The objective is V = sum_u pi(u) M(u) with M the (fixed) polarized
    marginal of the agent. Starts from all-zero logits (the uniform policy).
    Returns (V trajectory including the initial value, final probabilities,
    the marginal vector M).
    """
    bound = stepsize_bound(gamma)
    if eta > bound and not force:
        raise ConfigError(
            f"stepsize {eta} exceeds the smooth-ascent bound {bound}; "
            "pass force=True to demonstrate anyway"
        )
    m = _anchored_marginal(q, frozen_policies, agent, alpha, beta)
    psi = np.zeros_like(m)
    history = np.empty(iterations + 1)
    for it in range(iterations):
        z = np.exp(psi - psi.max())
        pi = z / z.sum()
        v = float(pi @ m)
        history[it] = v
        psi = psi + eta * pi * (m - v)
    z = np.exp(psi - psi.max())
    pi = z / z.sum()
    history[iterations] = float(pi @ m)
    return history, pi, m


def theorem2_joint_improvement(q, initial_policies, alpha: float, eta: float,
                               iterations: int, current_policy: bool = False,
                               beta: float = 1.0, gamma: float = 0.9,
                               seed: int = -1, force: bool = False) -> TheoremReport:
    """Apply single-agent ascent to every agent; pass iff the joint greedy
    action afterwards is the optimal joint action.

    With ``current_policy`` the agents update simultaneously against each
    other's live policies instead of the frozen initial ones (the sampling
    strategy actually used in training; optimality is then empirical).
    """
    q = np.asarray(q, dtype=np.float64)
    u_star, _ = _unique_best(q)
    n = q.ndim
    if not current_policy:
        finals = []
        for a in range(n):
            _, pi, _ = lemma1_ascent(q, a, initial_policies, eta, iterations,
                                     alpha, beta, gamma, force=force)
            finals.append(pi)
    else:
        bound = stepsize_bound(gamma)
        if eta > bound and not force:
            raise ConfigError(f"stepsize {eta} exceeds the smooth-ascent bound {bound}")
        psis = [np.zeros(q.shape[a]) for a in range(n)]
        for _ in range(iterations):
            rows = []
            for psi in psis:
                z = np.exp(psi - psi.max())
                rows.append(z / z.sum())
            grads = []
            for a in range(n):
                m = _anchored_marginal(q, None, a, alpha, beta, prob_rows=rows)
                grads.append(rows[a] * (m - rows[a] @ m))
            for a in range(n):
                psis[a] = psis[a] + eta * grads[a]
        finals = []
        for psi in psis:
            z = np.exp(psi - psi.max())
            finals.append(z / z.sum())
    greedy = tuple(int(np.argmax(p)) for p in finals)
    return TheoremReport(
        kind="theorem2_current" if current_policy else "theorem2",
        n=n,
        action_count=q.shape[0],
        seed=seed,
        threshold=alpha_threshold(q, initial_policies),
        alpha=alpha,
        passed=greedy == u_star,
        agent_argmax=greedy,
        optimal=u_star,
    )


def find_cdm_instance(q, policies):
    """Search for a raw-marginal ranking violation; None when there is none."""
    q = np.asarray(q, dtype=np.float64)
    u_star, _ = _unique_best(q)
    n = q.ndim
    for a in range(n):
        w = q.copy()
        for b in range(n):
            if b == a:
                continue
            view = [1] * n
            view[b] = q.shape[b]
            w = w * policies[b].probs(0).reshape(view)
        m = w.sum(axis=tuple(b for b in range(n) if b != a))
        sharp = int(np.argmax(m))
        if sharp != u_star[a]:
            return CdmWitness(agent=a, u_star=u_star, u_sharp=sharp, marginals=m)
    return None


def theorem1_sweep(count: int, seed: int = 0, n_range=(2, 3), action_range=(2, 5),
                   multiplier_range=(1.1, 3.0)):
    """Random above-threshold instances checked for optimality consistency."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        u = int(rng.integers(action_range[0], action_range[1] + 1))
        q, policies = random_instance(rng, n, u)
        threshold = alpha_threshold(q, policies)
        alpha = threshold * rng.uniform(*multiplier_range)
        reports.append(check_optimality_consistency(q, policies, alpha, seed=i))
    return reports


def lemma1_sweep(count: int, seed: int = 0, eta: float = None, iterations: int = 5000,
                 gamma: float = 0.9, alpha: float = 1.0, n_range=(2, 3),
                 action_range=(2, 4), force: bool = False):
    """Ascent runs on random instances; each report carries the V trajectory.

    Passes when V is monotone nondecreasing (1e-12 tolerance per step) and
    the final policy's argmax equals the marginal argmax.
    """
    if eta is None:
        eta = stepsize_bound(gamma)
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        u = int(rng.integers(action_range[0], action_range[1] + 1))
        q, policies = random_instance(rng, n, u)
        agent = int(rng.integers(n))
        history, pi, m = lemma1_ascent(q, agent, policies, eta, iterations,
                                       alpha=alpha, gamma=gamma, force=force)
        monotone = bool(np.all(np.diff(history) >= -1e-12))
        argmax_ok = int(np.argmax(pi)) == int(np.argmax(m))
        reports.append(
            TheoremReport(
                kind="lemma1",
                n=n,
                action_count=u,
                seed=i,
                threshold=stepsize_bound(gamma),
                alpha=alpha,
                passed=monotone and argmax_ok,
                agent_argmax=(int(np.argmax(pi)),),
                optimal=(int(np.argmax(m)),),
                extra={"monotone": monotone, "max_drop": float(np.min(np.diff(history)))},
            )
        )
    return reports


def theorem2_sweep(count: int, seed: int = 0, iterations: int = 5000,
                   current_policy: bool = False, gamma: float = 0.9,
                   n_range=(2, 3), action_range=(2, 4)):
    """Joint-improvement runs at alpha = 2x the instance threshold."""
    rng = np.random.default_rng(seed)
    eta = stepsize_bound(gamma)
    reports = []
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        u = int(rng.integers(action_range[0], action_range[1] + 1))
        q, policies = random_instance(rng, n, u)
        alpha = 2.0 * alpha_threshold(q, policies)
        reports.append(
            theorem2_joint_improvement(q, policies, alpha, eta, iterations,
                                       current_policy=current_policy, gamma=gamma, seed=i)
        )
    return reports
