"""Training loops: the polarized policy-gradient learner, the vanilla
stochastic policy-gradient and counterfactual-advantage baselines, and the
ablations (no polarization, no pessimistic bound).

One run owns its game, policies, critic ensemble, buffer, and RNG; runs are
deterministic given the config seed. Critics train on buffered minibatches;
actor updates follow the algorithm tag. Discrete actor updates evaluate the
estimator at the buffered actions. Continuous runs of the vanilla estimator
instead draw fresh actions from the current acting distribution (see
``update_actors_vanilla``); the polarized update keeps the buffered actions,
whose bounded coefficients make replayed off-policy data safe.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .critics import CriticEnsemble, ReplayBuffer, Transition, sync_targets, td_update
from .envs import DifferentialGame, MatrixGame, TabularMDP, step
from .policies import (
    ExplorationSchedule,
    GaussianPolicy,
    SoftmaxPolicy,
    greedy_joint,
    sample,
)
from .polarization import (
    _EXP_MAX,
    _F64_MAX,
    PolarizationParams,
    SaturationCounter,
)

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "CoefficientScale",
    "TrainConfig",
    "RunRecord",
    "RunLog",
    "default_train_config",
    "make_policies",
    "make_ensemble",
    "run",
    "greedy_return",
    "update_actors_mappg",
    "update_actors_vanilla",
    "update_actors_coma",
    "update_actors_mappg_exact",
    "vanilla_exact_coefficients",
    "update_actors_vanilla_exact",
]

ALGORITHMS = (
    "mappg",
    "vanilla_mapg",
    "coma",
    "mappg_no_polarization",
    "mappg_no_pessimistic_bound",
)


class ConfigError(ValueError):
    """Invalid or inconsistent training configuration."""


class CoefficientScale:
    """Participation gate and per-batch rescale for continuous actor steps.

    The polarized coefficient spans tens of e-folds (alpha * gap can top 60
    on the continuous benchmark), so following it with a fixed learning rate
    either explodes or freezes. Instead, each batch's coefficients are
    rescaled so the best one equals 1 (a positive per-batch factor, leaving
    the ascent direction intact), and a batch only participates when its best
    raw value gap comes within ``margin`` of the best gap seen recently (a
    running maximum decaying by ``decay`` value units per update). The gate
    silences batches that happened to contain only micro-improvements, which
    would otherwise take full-size steps toward local noise, while the decay
    lets the scale track the shrinking gaps as the policy closes in.
    """

    def __init__(self, decay: float = 0.005, margin: float = 1.0):
        self.decay = decay
        self.margin = margin
        self.best_gap = -math.inf

    def admits(self, batch_best_gap: float) -> bool:
        if math.isinf(self.best_gap):
            self.best_gap = batch_best_gap
        else:
            self.best_gap = max(batch_best_gap, self.best_gap - self.decay)
        return batch_best_gap >= self.best_gap - self.margin


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "mappg"
    polarization: PolarizationParams = field(default_factory=PolarizationParams)
    actor_lr: float = 0.05
    critic_lr: float = 0.1
    batch_size: int = 32
    buffer_capacity: int = 50_000
    sync_period: int = 200
    total_steps: int = 10_000
    update_period: int = 1
    exploration: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    seed: int = 0
    eval_period: int = 100
    gamma: float = 0.9
    hidden: int = 64
    critic_init_noise: float = 0.01
    max_std: float = 2.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ConfigError("batch_size and total_steps must be positive")


def default_train_config(game, algorithm="mappg", seed=0) -> TrainConfig:
    """Benchmark defaults: epsilon-greedy on discrete games, uniform-then-noise
    with a larger enlargement factor on the continuous game."""
    if isinstance(game, DifferentialGame):
        # cap_L sits far above exp(alpha * suboptimal-basin gaps) so the cap
        # cannot flatten the optimal/suboptimal distinction (see README).
        return TrainConfig(
            algorithm=algorithm,
            polarization=PolarizationParams(alpha=10.0, cap_L=1e18),
            actor_lr=0.1,
            critic_lr=0.05,
            total_steps=20_000,
            exploration=ExplorationSchedule(kind="uniform_then_noise", noise_std=1.0,
                                            uniform_steps=10_000),
            seed=seed,
        )
    return TrainConfig(
        algorithm=algorithm,
        polarization=PolarizationParams(alpha=1.0),
        actor_lr=0.05,
        critic_lr=0.1,
        total_steps=10_000,
        exploration=ExplorationSchedule(kind="epsilon_greedy", epsilon_start=1.0,
                                        epsilon_end=0.05, anneal_steps=10_000),
        seed=seed,
    )


@dataclass(frozen=True)
class RunRecord:
    step: int
    episode_return: float
    greedy_actions: tuple
    greedy_probs: tuple
    q_greedy: float
    q_target_greedy: float
    clip_fraction: float
    saturation_count: int


@dataclass
class RunLog:
    records: list
    policies: list
    ensemble: CriticEnsemble
    config: TrainConfig

    CSV_FLOAT = "%.6f"

    def header(self) -> list:
        n = len(self.policies)
        return (
            ["step", "return"]
            + [f"greedy_action_{a}" for a in range(n)]
            + [f"greedy_prob_{a}" for a in range(n)]
            + ["q_greedy", "q_target_greedy", "clip_fraction", "saturation_count"]
        )

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.header()) + "\n")
        discrete = isinstance(self.policies[0], SoftmaxPolicy)
        f = self.CSV_FLOAT
        for r in self.records:
            actions = [
                str(int(u)) if discrete else f % u for u in r.greedy_actions
            ]
            cells = (
                [str(r.step), f % r.episode_return]
                + actions
                + [f % p for p in r.greedy_probs]
                + [f % r.q_greedy, f % r.q_target_greedy, f % r.clip_fraction,
                   str(r.saturation_count)]
            )
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    @property
    def final(self) -> RunRecord:
        return self.records[-1]


def make_policies(game, config: TrainConfig):
    if getattr(game, "discrete", False):
        return [
            SoftmaxPolicy.uniform(game.state_count, game.action_count)
            for _ in range(game.n)
        ]
    return [GaussianPolicy(mean=0.0, log_std=0.0, bounds=game.bounds) for _ in range(game.n)]


def make_ensemble(game, config: TrainConfig) -> CriticEnsemble:
    if getattr(game, "discrete", False):
        return CriticEnsemble.tabular(
            game.state_count, game.n, game.action_count,
            learning_rate=config.critic_lr, init_noise=config.critic_init_noise,
            seed=config.seed * 1000 + 7, sync_period=config.sync_period,
        )
    scale = max(abs(b) for b in game.bounds)
    return CriticEnsemble.feedforward(
        input_dim=game.n, hidden=config.hidden, learning_rate=config.critic_lr,
        feature_scale=scale, seed=config.seed * 1000 + 7, sync_period=config.sync_period,
    )


def _validate_pairing(config: TrainConfig, game) -> None:
    discrete = getattr(game, "discrete", False)
    if config.algorithm == "coma" and not discrete:
        raise ConfigError("the counterfactual baseline supports discrete games only")
    if discrete and config.exploration.kind != "epsilon_greedy":
        raise ConfigError("discrete games use the epsilon_greedy schedule")
    if not discrete and config.exploration.kind != "uniform_then_noise":
        raise ConfigError("continuous games use the uniform_then_noise schedule")


def _saturating_exp_array(exponents: np.ndarray, counter: SaturationCounter) -> np.ndarray:
    hot = exponents >= _EXP_MAX
    if np.any(hot):
        for _ in range(int(hot.sum())):
            counter.hit()
    return np.where(hot, _F64_MAX, np.exp(np.minimum(exponents, _EXP_MAX - 1.0)))


def _softmax_table(policy: SoftmaxPolicy) -> np.ndarray:
    z = np.exp(policy.logits - policy.logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _apply_softmax_updates(policies, states, actions, coeffs, lr, tables) -> np.ndarray:
    """Ascend each agent's logits along coeff * (onehot(u_a) - pi), batch-averaged."""
    k = len(coeffs)
    norms = np.zeros(len(policies))
    for a, pol in enumerate(policies):
        delta = np.zeros_like(pol.logits)
        np.add.at(delta, states, -tables[a][states] * coeffs[:, None])
        np.add.at(delta, (states, actions[:, a]), coeffs)
        upd = lr * delta / k
        pol.logits += upd
        norms[a] = float(np.linalg.norm(upd))
    return norms


def _tabular_setup(policies, ensemble, minibatch):
    c = ensemble.critic_1
    tables = [_softmax_table(p) for p in policies]
    states = minibatch.states
    actions = minibatch.actions.astype(np.int64)
    a_idx = np.zeros(len(states), dtype=np.int64)
    for col in range(actions.shape[1]):
        a_idx = a_idx * c.action_count + actions[:, col]
    return tables, states, actions, a_idx


def _greedy_index(tables, action_count) -> np.ndarray:
    idx = np.zeros(tables[0].shape[0], dtype=np.int64)
    for t in tables:
        idx = idx * action_count + np.argmax(t, axis=1)
    return idx


def update_actors_mappg(policies, ensemble, minibatch, params: PolarizationParams,
                        lr: float, counter: SaturationCounter = None,
                        pessimistic: bool = True, max_std: float = 2.0,
                        scale: CoefficientScale = None):
    """Polarized actor step with gradient clipping.

    Coefficients come from the pessimistic two-target bound (or from the first
    target alone, uncapped, when ``pessimistic`` is False: the ablation) and
    are constants w.r.t. the actor parameters. Returns (gradient norms,
    fraction of samples whose coefficient was clipped to zero).
    """
    counter = counter or SaturationCounter()
    if isinstance(policies[0], SoftmaxPolicy):
        tables, states, actions, a_idx = _tabular_setup(policies, ensemble, minibatch)
        t1, t2 = ensemble.target_1.q, ensemble.target_2.q
        curr_idx = _greedy_index(tables, ensemble.critic_1.action_count)
        if pessimistic:
            q_u = np.minimum(t1, t2)[states, a_idx]
            q_c = np.maximum(t1, t2)[states, curr_idx[states]]
        else:
            q_u = t1[states, a_idx]
            q_c = t1[states, curr_idx[states]]
        q_hat = _saturating_exp_array(params.alpha * (q_u - q_c), counter)
        taken = np.stack(
            [tables[a][states, actions[:, a]] for a in range(len(policies))], axis=1
        )
        zero = (q_hat < 1.0) | np.all(taken > params.prob_clip_P, axis=1)
        capped = np.minimum(q_hat, params.cap_L) if pessimistic else q_hat
        coeffs = np.where(zero, 0.0, capped / params.beta)
        norms = _apply_softmax_updates(policies, states, actions, coeffs, lr, tables)
        return norms, float(np.mean(zero))
    return _update_gaussian_mappg(policies, ensemble, minibatch, params, lr,
                                  counter, pessimistic, max_std, scale)


def _update_gaussian_mappg(policies, ensemble, minibatch, params, lr, counter,
                           pessimistic, max_std, scale):
    means = np.array([p.mean for p in policies])
    stds = np.array([p.std for p in policies])
    feat = ensemble.critic_1.feature_scale
    U = minibatch.actions
    Xu = np.ascontiguousarray(U / feat)
    xc = (means / feat)[None, :]
    if pessimistic:
        q_u = np.minimum(ensemble.target_1.predict_batch(Xu),
                         ensemble.target_2.predict_batch(Xu))
        q_c = max(ensemble.target_1.predict_batch(xc)[0],
                  ensemble.target_2.predict_batch(xc)[0])
    else:
        q_u = ensemble.target_1.predict_batch(Xu)
        q_c = ensemble.target_1.predict_batch(xc)[0]
    gaps = q_u - q_c
    log_raw = params.alpha * gaps
    for _ in range(int(np.sum(log_raw >= _EXP_MAX))):
        counter.hit()
    z = (U - means) / stds
    dens = np.exp(-0.5 * z * z) / (stds * math.sqrt(2.0 * math.pi))
    zero = (log_raw < 0.0) | np.all(dens > params.prob_clip_P, axis=1)
    if np.all(zero):
        return np.zeros(len(policies)), 1.0
    if scale is None:
        scale = CoefficientScale()
    if not scale.admits(float(gaps[~zero].max())):
        return np.zeros(len(policies)), float(np.mean(zero))
    log_capped = np.minimum(log_raw, math.log(params.cap_L)) if pessimistic else log_raw
    log_coeff = np.where(zero, -np.inf, log_capped - math.log(params.beta))
    coeffs = np.exp(log_coeff - log_coeff[~zero].max())
    k = len(coeffs)
    norms = np.zeros(len(policies))
    for a, pol in enumerate(policies):
        d_mean = float(np.sum(coeffs * (U[:, a] - pol.mean)) / (pol.std**2 * k))
        if math.exp(pol.log_std) > pol.std_floor:
            d_log_std = float(np.sum(coeffs * (z[:, a] ** 2 - 1.0)) / k)
        else:
            d_log_std = 0.0
        new_mean = pol.mean + lr * d_mean
        new_log_std = pol.log_std + lr * d_log_std
        if not (math.isfinite(new_mean) and math.isfinite(new_log_std)):
            continue  # reject non-finite updates; the run stays usable
        pol.mean = new_mean
        pol.log_std = min(max(new_log_std, math.log(pol.std_floor)), math.log(max_std))
        norms[a] = abs(lr * d_mean) + abs(lr * d_log_std)
    return norms, float(np.mean(zero))


def update_actors_vanilla(policies, ensemble, minibatch, lr: float,
                          rng=None, noise_std: float = None):
    """Plain stochastic policy-gradient step: coefficient = Q from critic 1.

    Discrete games evaluate the score at the buffered actions. Continuous
    games evaluate it on-policy: fresh actions from the current acting
    distribution (mean + exploration noise), scored against that
    distribution's density. Replaying uniform-exploration actions through the
    raw-Q estimator has no importance correction and diverges, so during the
    uniform phase (``noise_std`` None) the continuous update is a no-op.
    """
    if isinstance(policies[0], SoftmaxPolicy):
        tables, states, actions, a_idx = _tabular_setup(policies, ensemble, minibatch)
        coeffs = ensemble.critic_1.q[states, a_idx]
        norms = _apply_softmax_updates(policies, states, actions, coeffs, lr, tables)
        return norms, 0.0
    if noise_std is None:
        return np.zeros(len(policies)), 0.0
    if rng is None:
        raise ValueError("continuous vanilla updates need an rng")
    means = np.array([p.mean for p in policies])
    lo, hi = policies[0].bounds
    k = len(minibatch)
    U = np.clip(means + noise_std * rng.standard_normal((k, len(policies))), lo, hi)
    scale = ensemble.critic_1.feature_scale
    coeffs = ensemble.critic_1.predict_batch(np.ascontiguousarray(U / scale))
    norms = np.zeros(len(policies))
    for a, pol in enumerate(policies):
        d_mean = float(np.sum(coeffs * (U[:, a] - pol.mean)) / (noise_std**2 * k))
        new_mean = pol.mean + lr * d_mean
        if math.isfinite(new_mean):
            pol.mean = new_mean
            norms[a] = abs(lr * d_mean)
    return norms, 0.0


def update_actors_coma(policies, ensemble, minibatch, lr: float):
    """Counterfactual-advantage step: coefficient for agent a is
    Q(s,u) - sum_u' pi_a(u'|s) Q(s, (u', u_{-a})). Discrete games only."""
    if not isinstance(policies[0], SoftmaxPolicy):
        raise ConfigError("the counterfactual baseline supports discrete games only")
    tables, states, actions, a_idx = _tabular_setup(policies, ensemble, minibatch)
    c = ensemble.critic_1
    n = len(policies)
    norms = np.zeros(n)
    q_taken = c.q[states, a_idx]
    k = len(states)
    for a, pol in enumerate(policies):
        place = c.action_count ** (n - 1 - a)
        base_idx = a_idx - actions[:, a] * place
        cf = np.stack(
            [c.q[states, base_idx + u * place] for u in range(c.action_count)], axis=1
        )
        baseline = np.sum(tables[a][states] * cf, axis=1)
        coeffs = q_taken - baseline
        delta = np.zeros_like(pol.logits)
        np.add.at(delta, states, -tables[a][states] * coeffs[:, None])
        np.add.at(delta, (states, actions[:, a]), coeffs)
        upd = lr * delta / k
        pol.logits += upd
        norms[a] = float(np.linalg.norm(upd))
    return norms, 0.0


def _coefficient_tensor(policies, ensemble, params, state, counter):
    """Clipped polarized coefficient for every joint action of one state."""
    c = ensemble.critic_1
    shape = (c.action_count,) * len(policies)
    t1 = ensemble.target_1.q[state].reshape(shape)
    t2 = ensemble.target_2.q[state].reshape(shape)
    tables = [p.probs(state) for p in policies]
    curr = tuple(int(np.argmax(t)) for t in tables)
    q_c = max(t1[curr], t2[curr])
    q_hat = _saturating_exp_array(params.alpha * (np.minimum(t1, t2) - q_c), counter)
    taken = np.ones(shape, dtype=bool)
    for a, row in enumerate(tables):
        view = [1] * len(policies)
        view[a] = len(row)
        taken &= (row > params.prob_clip_P).reshape(view)
    zero = (q_hat < 1.0) | taken
    return np.where(zero, 0.0, np.minimum(q_hat, params.cap_L) / params.beta)


def _exact_softmax_step(policies, coeff_tensor, state, lr):
    """Exact-expectation actor step: E_pi[coeff * grad log pi_a] per agent."""
    n = len(policies)
    marginals = []
    for a, pol in enumerate(policies):
        weighted = coeff_tensor
        for b in range(n):
            if b == a:
                continue
            view = [1] * n
            view[b] = policies[b].action_count
            weighted = weighted * policies[b].probs(state).reshape(view)
        m = weighted.sum(axis=tuple(b for b in range(n) if b != a))
        marginals.append(m)
    for a, pol in enumerate(policies):
        pi = pol.probs(state)
        pol.logits[state] += lr * pi * (marginals[a] - pi @ marginals[a])
    return marginals


def update_actors_mappg_exact(policies, ensemble, params: PolarizationParams,
                              lr: float, state: int = 0,
                              counter: SaturationCounter = None):
    """Exact-expectation polarized step over all joint actions (test mode)."""
    counter = counter or SaturationCounter()
    coeff = _coefficient_tensor(policies, ensemble, params, state, counter)
    return _exact_softmax_step(policies, coeff, state, lr)


def vanilla_exact_coefficients(policies, q_tensor, state: int = 0):
    """Per-agent marginal coefficient vectors of the vanilla estimator."""
    n = len(policies)
    q = np.asarray(q_tensor, dtype=np.float64)
    out = []
    for a in range(n):
        weighted = q.copy()
        for b in range(n):
            if b == a:
                continue
            view = [1] * n
            view[b] = policies[b].action_count
            weighted = weighted * policies[b].probs(state).reshape(view)
        out.append(weighted.sum(axis=tuple(b for b in range(n) if b != a)))
    return out


def update_actors_vanilla_exact(policies, q_tensor, lr: float, state: int = 0):
    """Exact-expectation vanilla step against a fixed joint value tensor."""
    q = np.asarray(q_tensor, dtype=np.float64)
    return _exact_softmax_step(policies, q, state, lr)


def greedy_return(game, policies, rng) -> float:
    """Return of one exploration-free greedy episode."""
    if isinstance(game, (MatrixGame, DifferentialGame)):
        u = tuple(greedy_joint(policies, 0))
        if isinstance(game, DifferentialGame):
            u = tuple(game.clamp(u))
        r, _, _ = step(game, 0, u, rng)
        return r
    total = 0.0
    s = game.initial_state
    for _ in range(game.horizon):
        r, s, done = step(game, s, tuple(greedy_joint(policies, s)), rng)
        total += r
        if done:
            break
    return total


def _record(game, policies, ensemble, t, rng, clip_fraction, counter) -> RunRecord:
    greedy = tuple(greedy_joint(policies, game.initial_state))
    if isinstance(policies[0], SoftmaxPolicy):
        probs = tuple(
            float(p.probs(game.initial_state)[u]) for p, u in zip(policies, greedy)
        )
        q_in = greedy
    else:
        # Density of the greedy action (the mean): the Gaussian peak.
        probs = tuple(1.0 / (p.std * math.sqrt(2.0 * math.pi)) for p in policies)
        q_in = tuple(np.clip(greedy, *policies[0].bounds))
    return RunRecord(
        step=t,
        episode_return=greedy_return(game, policies, rng),
        greedy_actions=greedy,
        greedy_probs=probs,
        q_greedy=ensemble.critic_1.predict(game.initial_state, q_in),
        q_target_greedy=ensemble.target_1.predict(game.initial_state, q_in),
        clip_fraction=clip_fraction,
        saturation_count=counter.count,
    )


def run(config: TrainConfig, game) -> RunLog:
    """Train per the config's algorithm tag; deterministic given the seed.

    Interact with exploration, buffer every transition, and once the buffer
    holds a full batch update the critics (1-step TD) and the actors every
    ``update_period`` steps; hard-sync the targets every ``sync_period``
    updates. Greedy evaluations are recorded every ``eval_period`` steps.
    """
    _validate_pairing(config, game)
    rng = np.random.default_rng(config.seed)
    policies = make_policies(game, config)
    ensemble = make_ensemble(game, config)
    buffer = ReplayBuffer(config.buffer_capacity, game.n)
    counter = SaturationCounter()
    scale = CoefficientScale()
    gamma = game.gamma if isinstance(game, TabularMDP) else config.gamma
    params = config.polarization
    schedule = config.exploration

    records = []
    state = game.initial_state
    episode_steps = 0
    updates = 0
    clip_fraction = 0.0

    for t in range(config.total_steps):
        if t % config.eval_period == 0:
            records.append(_record(game, policies, ensemble, t, rng, clip_fraction, counter))
        u = tuple(sample(p, state, schedule, t, rng) for p in policies)
        r, s2, done = step(game, state, u, rng)
        buffer.add(Transition(state, u, r, s2, done))
        episode_steps += 1
        if done or episode_steps >= getattr(game, "horizon", 1):
            state = game.initial_state
            episode_steps = 0
        else:
            state = s2

        if len(buffer) >= config.batch_size and t % config.update_period == 0:
            mb = buffer.sample(config.batch_size, rng)
            td_update(ensemble, mb, policies, gamma=gamma)
            if config.algorithm in ("mappg", "mappg_no_pessimistic_bound"):
                _, clip_fraction = update_actors_mappg(
                    policies, ensemble, mb, params, config.actor_lr, counter,
                    pessimistic=config.algorithm == "mappg", max_std=config.max_std,
                    scale=scale,
                )
            elif config.algorithm in ("vanilla_mapg", "mappg_no_polarization"):
                noise = None
                if schedule.kind == "uniform_then_noise" and t >= schedule.uniform_steps:
                    noise = schedule.noise_std
                _, clip_fraction = update_actors_vanilla(
                    policies, ensemble, mb, config.actor_lr, rng=rng, noise_std=noise,
                )
            else:
                _, clip_fraction = update_actors_coma(
                    policies, ensemble, mb, config.actor_lr
                )
            updates += 1
            if updates % config.sync_period == 0:
                sync_targets(ensemble)

    records.append(
        _record(game, policies, ensemble, config.total_steps, rng, clip_fraction, counter)
    )
    return RunLog(records=records, policies=policies, ensemble=ensemble, config=config)
