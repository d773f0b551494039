import math

import numpy as np
import pytest
from scipy import stats

from polargrad.policies import (
    ExplorationSchedule,
    GaussianPolicy,
    SoftmaxPolicy,
    grad_log_prob,
    greedy_joint,
    log_prob,
    other_agents_prob,
    prob,
    sample,
)


class TestSoftmaxProbabilities:
    def test_uniform_at_zero_logits(self):
        p = SoftmaxPolicy.uniform(1, 3)
        assert prob(p, 0, 0) == pytest.approx(1 / 3)
        assert p.probs(0).sum() == pytest.approx(1.0, abs=1e-9)

    def test_one_hot_lean(self):
        p = SoftmaxPolicy(logits=np.array([[1.0, 0.0, 0.0]]))
        assert prob(p, 0, 0) == pytest.approx(math.e / (math.e + 2), abs=1e-12)

    def test_log_prob_consistent(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = SoftmaxPolicy(logits=rng.normal(size=(2, 4)))
            s = int(rng.integers(2))
            a = int(rng.integers(4))
            assert math.exp(log_prob(p, s, a)) == pytest.approx(prob(p, s, a), abs=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        row = rng.normal(size=(1, 5))
        p1 = SoftmaxPolicy(logits=row)
        p2 = SoftmaxPolicy(logits=row + 123.456)
        assert np.allclose(p1.probs(0), p2.probs(0), atol=1e-12)
        assert p1.greedy(0) == p2.greedy(0)

    def test_probs_strictly_positive(self):
        p = SoftmaxPolicy(logits=np.array([[0.0, -700.0, 40.0]]))
        assert np.all(p.probs(0) > 0.0)


class TestGaussian:
    def test_standard_normal_at_mean(self):
        p = GaussianPolicy(mean=0.0, log_std=0.0)
        assert log_prob(p, 0, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_density_integrates_to_one(self):
        p = GaussianPolicy(mean=1.0, log_std=0.3)
        xs = np.linspace(-20, 20, 200_001)
        dens = np.array([prob(p, 0, x) for x in xs])
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-6)

    def test_std_floor(self):
        p = GaussianPolicy(mean=0.0, log_std=-50.0)
        assert p.std == pytest.approx(1e-3)
        assert math.isfinite(log_prob(p, 0, 5.0))


class TestGradLogProb:
    def test_uniform_softmax_gradient(self):
        p = SoftmaxPolicy.uniform(1, 3)
        g = grad_log_prob(p, 0, 0)
        assert g == pytest.approx([2 / 3, -1 / 3, -1 / 3], abs=1e-12)

    def test_softmax_gradient_sums_to_zero(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            p = SoftmaxPolicy(logits=rng.normal(size=(1, 4)) * 3)
            g = grad_log_prob(p, 0, int(rng.integers(4)))
            assert abs(g.sum()) < 1e-12

    def test_gaussian_mean_gradient(self):
        p = GaussianPolicy(mean=0.0, log_std=0.0)
        d_mean, _ = grad_log_prob(p, 0, 0.5)
        assert d_mean == pytest.approx(0.5, abs=1e-12)

    def test_matches_finite_differences(self):
        # 1000 random policies/actions split over both families, 1e-5 step.
        rng = np.random.default_rng(3)
        eps = 1e-5
        for _ in range(500):
            logits = rng.normal(size=(1, 3)) * 2
            a = int(rng.integers(3))
            g = grad_log_prob(SoftmaxPolicy(logits=logits.copy()), 0, a)
            for j in range(3):
                bump = np.zeros_like(logits)
                bump[0, j] = eps
                fd = (
                    log_prob(SoftmaxPolicy(logits=logits + bump), 0, a)
                    - log_prob(SoftmaxPolicy(logits=logits - bump), 0, a)
                ) / (2 * eps)
                assert g[j] == pytest.approx(fd, abs=1e-6)
        for _ in range(500):
            mean = rng.normal() * 3
            log_std = rng.uniform(-1.0, 1.0)
            u = mean + rng.normal() * 2
            g = grad_log_prob(GaussianPolicy(mean, log_std), 0, u)
            fd_mean = (
                log_prob(GaussianPolicy(mean + eps, log_std), 0, u)
                - log_prob(GaussianPolicy(mean - eps, log_std), 0, u)
            ) / (2 * eps)
            fd_std = (
                log_prob(GaussianPolicy(mean, log_std + eps), 0, u)
                - log_prob(GaussianPolicy(mean, log_std - eps), 0, u)
            ) / (2 * eps)
            assert g[0] == pytest.approx(fd_mean, abs=1e-6)
            assert g[1] == pytest.approx(fd_std, abs=1e-6)


class TestSchedule:
    def test_endpoints_exact(self):
        sched = ExplorationSchedule(epsilon_start=1.0, epsilon_end=0.05, anneal_steps=10_000)
        assert sched.epsilon(0) == 1.0
        assert sched.epsilon(10_000) == 0.05
        assert sched.epsilon(20_000) == 0.05

    def test_monotone_nonincreasing(self):
        sched = ExplorationSchedule(epsilon_start=0.9, epsilon_end=0.1, anneal_steps=1000)
        eps = [sched.epsilon(t) for t in range(0, 2000, 7)]
        assert all(a >= b for a, b in zip(eps, eps[1:]))

    def test_increasing_epsilon_rejected(self):
        with pytest.raises(ValueError):
            ExplorationSchedule(epsilon_start=0.1, epsilon_end=0.5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ExplorationSchedule(kind="thompson")


class TestSampling:
    def test_full_epsilon_is_uniform(self):
        rng = np.random.default_rng(4)
        # Sharply peaked policy, but epsilon=1 forces uniform actions.
        p = SoftmaxPolicy(logits=np.array([[30.0, 0.0, 0.0]]))
        sched = ExplorationSchedule(epsilon_start=1.0, epsilon_end=1.0, anneal_steps=1)
        n = 100_000
        counts = np.bincount([sample(p, 0, sched, 0, rng) for _ in range(n)], minlength=3)
        se = math.sqrt((1 / 3) * (2 / 3) / n)
        assert np.all(np.abs(counts / n - 1 / 3) <= 3 * se + 1e-12)

    def test_zero_epsilon_greedy_limit(self):
        rng = np.random.default_rng(5)
        p = SoftmaxPolicy(logits=np.array([[40.0, 0.0, 0.0]]))
        sched = ExplorationSchedule(epsilon_start=0.0, epsilon_end=0.0, anneal_steps=1)
        assert all(sample(p, 0, sched, 9999, rng) == 0 for _ in range(1000))

    def test_uniform_phase_is_uniform_ks(self):
        rng = np.random.default_rng(6)
        p = GaussianPolicy(mean=3.0, log_std=0.0, bounds=(-10, 10))
        sched = ExplorationSchedule(kind="uniform_then_noise", uniform_steps=10_000)
        draws = np.array([sample(p, 0, sched, 5000, rng) for _ in range(5000)])
        res = stats.kstest(draws, stats.uniform(loc=-10, scale=20).cdf)
        assert res.pvalue > 0.01

    def test_noise_phase_centers_on_mean(self):
        rng = np.random.default_rng(7)
        p = GaussianPolicy(mean=2.0, log_std=0.0, bounds=(-10, 10))
        sched = ExplorationSchedule(kind="uniform_then_noise", uniform_steps=100,
                                    noise_std=1.0)
        draws = np.array([sample(p, 0, sched, 200, rng) for _ in range(20_000)])
        assert draws.mean() == pytest.approx(2.0, abs=0.05)
        assert draws.std() == pytest.approx(1.0, abs=0.05)
        assert np.all(draws >= -10) and np.all(draws <= 10)

    def test_schedule_family_mismatch(self):
        rng = np.random.default_rng(8)
        soft = SoftmaxPolicy.uniform(1, 2)
        gauss = GaussianPolicy()
        with pytest.raises(ValueError):
            sample(soft, 0, ExplorationSchedule(kind="uniform_then_noise"), 0, rng)
        with pytest.raises(ValueError):
            sample(gauss, 0, ExplorationSchedule(kind="epsilon_greedy"), 0, rng)


class TestGreedyJoint:
    def test_tie_breaks_to_lowest_index(self):
        ps = [SoftmaxPolicy.uniform(1, 3), SoftmaxPolicy.uniform(1, 3)]
        assert tuple(greedy_joint(ps, 0)) == (0, 0)

    def test_argmax(self):
        p = SoftmaxPolicy(logits=np.array([[0.0, 3.0, 1.0]]))
        assert tuple(greedy_joint([p], 0)) == (1,)

    def test_gaussian_greedy_is_mean(self):
        ps = [GaussianPolicy(mean=5.0), GaussianPolicy(mean=-4.8)]
        assert tuple(greedy_joint(ps, 0)) == (5.0, -4.8)


class TestOtherAgentsProb:
    def test_two_uniform_agents(self):
        ps = [SoftmaxPolicy.uniform(1, 3), SoftmaxPolicy.uniform(1, 3)]
        assert other_agents_prob(ps, 0, (0, 0), 1) == pytest.approx(1 / 3)

    def test_single_agent_empty_product(self):
        ps = [SoftmaxPolicy.uniform(1, 3)]
        assert other_agents_prob(ps, 0, (2,), 0) == 1.0

    def test_three_agents(self):
        def with_prob_on_action(p0):
            logits = np.log(np.array([[p0, (1 - p0) / 2, (1 - p0) / 2]]))
            return SoftmaxPolicy(logits=logits)

        ps = [with_prob_on_action(0.5), with_prob_on_action(0.2), with_prob_on_action(0.1)]
        assert other_agents_prob(ps, 0, (0, 0, 0), 0) == pytest.approx(0.02, abs=1e-12)

    def test_completes_joint_probability(self):
        rng = np.random.default_rng(9)
        ps = [SoftmaxPolicy(logits=rng.normal(size=(1, 3))) for _ in range(3)]
        joint = (1, 2, 0)
        full = np.prod([prob(p, 0, joint[b]) for b, p in enumerate(ps)])
        for a in range(3):
            back = other_agents_prob(ps, 0, joint, a) * prob(ps[a], 0, joint[a])
            assert back == pytest.approx(full, abs=1e-12)
