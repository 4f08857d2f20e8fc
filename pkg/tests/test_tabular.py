"""Enumerable-toy oracles: the variational bound chain and exact policy gradients."""

import numpy as np
import pytest

from ibol_lab.tabular import (
    TabularToy,
    enumerate_trajectories,
    exact_ib_objective,
    exact_lower_bound,
    exact_policy_gradient,
    latent_marginal,
    optimal_variational,
    random_toy,
    sample_trajectory,
    softmax_policy,
    state_sequence_distribution,
)


class TestEnumeration:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(42)
        toy = random_toy(rng)
        total = sum(p for _, _, p in enumerate_trajectories(toy))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_state_sequence_distribution_normalized(self):
        rng = np.random.default_rng(43)
        toy = random_toy(rng, horizon=1)
        assert state_sequence_distribution(toy).sum() == pytest.approx(1.0, abs=1e-12)

    def test_latent_marginal_normalized(self):
        rng = np.random.default_rng(44)
        toy = random_toy(rng)
        assert latent_marginal(toy).sum() == pytest.approx(1.0, abs=1e-12)


class TestBoundChain:
    """The exact objective dominates every variational bound value and the
    gap closes at the true posterior policy and aggregated latent marginal."""

    @pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
    def test_bound_holds_and_is_tight_at_optimum(self, beta):
        rng = np.random.default_rng(45)
        for _ in range(20):
            toy = random_toy(rng, n_states=2, n_goals=3, n_latents=2, horizon=2)
            exact = exact_ib_objective(toy, beta)
            pi_star, r_star = optimal_variational(toy)
            tight = exact_lower_bound(toy, beta, pi_star, r_star)
            assert exact >= tight - 1e-12
            assert abs(exact - tight) < 1e-9

    def test_random_variational_choices_stay_below(self):
        rng = np.random.default_rng(46)
        for _ in range(20):
            toy = random_toy(rng, n_states=3, n_goals=2, n_latents=3, horizon=2)
            exact = exact_ib_objective(toy, beta=1.0)
            pi = rng.dirichlet(np.ones(toy.n_goals),
                               size=(toy.horizon, toy.n_states, toy.n_latents))
            r = rng.dirichlet(np.ones(toy.n_latents))
            assert exact_lower_bound(toy, 1.0, pi, r) <= exact + 1e-12

    def test_suboptimal_prior_strictly_below(self):
        rng = np.random.default_rng(47)
        toy = random_toy(rng)
        pi_star, r_star = optimal_variational(toy)
        skewed = np.roll(r_star, 1)
        assert exact_lower_bound(toy, 1.0, pi_star, skewed) < \
            exact_lower_bound(toy, 1.0, pi_star, r_star) - 1e-9


class TestExactPolicyGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(48)
        toy = random_toy(rng, n_states=2, n_goals=2, horizon=2)
        logits = rng.normal(size=(2, 2))

        def reward(states, goals):
            return float(states[-1] == 1) + 0.25 * goals[0]

        grad = exact_policy_gradient(toy, logits, reward)
        eps = 1e-6
        for i in range(2):
            for j in range(2):
                lp = logits.copy(); lp[i, j] += eps
                lm = logits.copy(); lm[i, j] -= eps
                def value(lg):
                    t = TabularToy(toy.p0, toy.trans, softmax_policy(lg),
                                   toy.encoder, toy.horizon)
                    return sum(p * reward(s, g)
                               for s, g, p in enumerate_trajectories(t))
                fd = (value(lp) - value(lm)) / (2 * eps)
                assert grad[i, j] == pytest.approx(fd, abs=1e-6)

    def test_reinforce_estimator_unbiased(self):
        """Monte-Carlo REINFORCE gradient within 2 standard errors of exact."""
        rng = np.random.default_rng(49)
        toy = random_toy(rng, n_states=2, n_goals=2, horizon=2)
        logits = rng.normal(scale=0.5, size=(2, 2))
        toy = TabularToy(toy.p0, toy.trans, softmax_policy(logits),
                         toy.encoder, toy.horizon)

        def reward(states, goals):
            return float(states[-1]) + 0.5 * float(goals[-1])

        exact = exact_policy_gradient(toy, logits, reward)
        pi = toy.pi_s
        n = 10_000
        draws = np.zeros((n,) + logits.shape)
        for i in range(n):
            states, goals = sample_trajectory(toy, rng)
            r = reward(states, goals)
            for t in range(toy.horizon):
                row = np.zeros(toy.n_goals)
                row[goals[t]] = 1.0
                draws[i, states[t]] += r * (row - pi[states[t]])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(mean - exact) <= 2.0 * se + 1e-12)
