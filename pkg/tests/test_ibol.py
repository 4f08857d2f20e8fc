"""Skill-discovery objective: enumeration oracle, bookkeeping identities,
REINFORCE behavior, masking, rollout determinism, checkpoint round trip."""

import numpy as np
import pytest

from ibol_lab.autodiff import ParamVector, Tensor, grad_check, log_mean_exp
from ibol_lab.distributions import DiagGaussian
from ibol_lab.envs import PointEnv
from ibol_lab.errors import ConfigError, NumericError
from ibol_lab.ibol import (
    IbolTrainer,
    RolloutDriver,
    SkillBatch,
    SkillConfig,
    SkillModel,
    build_batch,
    collect_sampling_rollouts,
    compute_objective,
    encode_trajectory,
    latents_grid,
    load_skill_model,
    rollout_skill,
    rollout_skills,
    save_skill_checkpoint,
    vpg_update,
)
from ibol_lab.seeding import SeedBank
from ibol_lab.trajectory import Trajectory


def _tiny_model(seed=0, **overrides):
    cfg = SkillConfig(epochs=1, trajectories_per_epoch=4, L=3, hidden=8, **overrides)
    env = PointEnv(horizon=6)
    trainer = IbolTrainer(env, cfg, seed)
    return trainer, env, cfg


def _manual_batch(n=2, T=3, d=2, beta=0.1, lam=0.5):
    """Hand-filled batch with known log-probs for the enumeration oracle."""
    rng = np.random.default_rng(42)
    trajs = [Trajectory(rng.normal(size=(T + 1, 2)), rng.normal(size=(T, 2)),
                        context=rng.normal(size=d)) for _ in range(n)]
    enc = DiagGaussian(Tensor(rng.normal(size=(n, d))),
                       Tensor(rng.normal(scale=0.3, size=(n, d))))
    z = enc.sample(rng.normal(size=(n, d)))
    logp_z = Tensor(rng.normal(size=(n, T)))
    logp_s = Tensor(rng.normal(size=(n, T, 4)))
    u_own = np.stack([t.context for t in trajs])
    batch = SkillBatch(trajs, enc, z, logp_z, logp_s, enc.log_prob(u_own))
    cfg = SkillConfig(beta=beta, lam=lam, L=4)
    return batch, cfg


class TestComputeObjective:
    def test_matches_direct_enumeration(self):
        """Explicit loops over trajectories/steps/prior samples within 1e-10."""
        batch, cfg = _manual_batch()
        objective, _, returns = compute_objective(batch, cfg)
        n, T, L = batch.logp_s_matrix.shape
        expected_returns = []
        for i in range(n):
            pred = 0.0
            for t in range(T):
                marg = log_mean_exp([batch.logp_s_matrix.data[i, t, j]
                                     for j in range(L)])
                pred += batch.logp_z.data[i, t] - marg
            pred /= T
            mu = batch.encodings.mean.data[i]
            sig = np.exp(batch.encodings.log_std.data[i])
            kl = 0.5 * np.sum(mu ** 2 + sig ** 2 - 1.0 - 2.0 * np.log(sig))
            u = batch.trajectories[i].context
            aux = np.sum(-0.5 * np.log(2 * np.pi) - np.log(sig)
                         - (u - mu) ** 2 / (2 * sig ** 2))
            expected_returns.append(pred - cfg.beta * kl + cfg.lam * aux)
        np.testing.assert_allclose(returns, expected_returns, atol=1e-10)
        assert float(objective.data) == pytest.approx(np.mean(expected_returns),
                                                      abs=1e-10)

    def test_standard_normal_encoder_zero_compression(self):
        batch, cfg = _manual_batch()
        n, d = batch.encodings.mean.shape
        batch.encodings = DiagGaussian(Tensor(np.zeros((n, d))),
                                       Tensor(np.zeros((n, d))))
        _, components, _ = compute_objective(batch, cfg)
        assert components["compression"] == 0.0

    def test_identical_policies_cancel(self):
        # L=1 with pi_z == pi_s pointwise: the prediction part is exactly 0.
        batch, cfg = _manual_batch()
        cfg.L = 1
        batch.logp_s_matrix = Tensor(batch.logp_z.data[:, :, None].copy())
        _, components, _ = compute_objective(batch, cfg)
        assert components["prediction"] + components["entropy"] == pytest.approx(0.0, abs=1e-12)

    def test_beta_lambda_zero_reduction(self):
        batch, cfg = _manual_batch(beta=0.0, lam=0.0)
        objective, components, returns = compute_objective(batch, cfg)
        assert components["compression"] == 0.0
        assert components["auxiliary"] == 0.0
        # Per-trajectory returns collapse bit-exactly to prediction + entropy.
        pred = batch.logp_z.data.mean(axis=1)
        ent = -np.array([[log_mean_exp(batch.logp_s_matrix.data[i, t])
                          for t in range(batch.logp_z.shape[1])]
                         for i in range(batch.logp_z.shape[0])]).mean(axis=1)
        np.testing.assert_allclose(returns, pred + ent, rtol=1e-14, atol=0)
        assert float(objective.data) == pytest.approx(
            components["prediction"] + components["entropy"], abs=1e-12)

    def test_components_sum_to_total(self):
        batch, cfg = _manual_batch()
        objective, c, _ = compute_objective(batch, cfg)
        total = c["prediction"] + c["entropy"] + c["compression"] + c["auxiliary"]
        assert float(objective.data) == pytest.approx(total, abs=1e-9)

    def test_batch_order_invariance(self):
        batch, cfg = _manual_batch(n=4)
        obj1 = float(compute_objective(batch, cfg)[0].data)
        perm = [2, 0, 3, 1]
        shuffled = SkillBatch(
            [batch.trajectories[i] for i in perm],
            DiagGaussian(Tensor(batch.encodings.mean.data[perm]),
                         Tensor(batch.encodings.log_std.data[perm])),
            Tensor(batch.z.data[perm]),
            Tensor(batch.logp_z.data[perm]),
            Tensor(batch.logp_s_matrix.data[perm]),
            Tensor(batch.logp_aux.data[perm]),
        )
        obj2 = float(compute_objective(shuffled, cfg)[0].data)
        assert obj1 == pytest.approx(obj2, abs=1e-12)

    def test_density_mode_exponentiates(self):
        batch, cfg = _manual_batch(lam=0.5)
        cfg.aux_log_density = False
        _, c_density, _ = compute_objective(batch, cfg)
        cfg.aux_log_density = True
        _, c_log, _ = compute_objective(batch, cfg)
        assert c_density["auxiliary"] == pytest.approx(
            0.5 * np.mean(np.exp(c_log["auxiliary"] * 0 + batch.logp_aux.data)), abs=1e-12)

    def test_non_finite_component_named(self):
        batch, cfg = _manual_batch()
        batch.logp_z.data[0, 0] = np.inf
        with pytest.raises(NumericError, match="prediction"):
            compute_objective(batch, cfg)


class TestBuildBatchAndGradients:
    def test_full_objective_gradcheck(self):
        """Finite differences through encoder and skill-policy parameters."""
        trainer, env, cfg = _tiny_model()
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 3,
                                          trainer.streams)
        u_L = np.random.default_rng(1).normal(size=(cfg.L, cfg.d))
        z_noise = np.random.default_rng(2).normal(size=(3, cfg.d))
        merged = ParamVector()
        merged.merge("enc", trainer.model.enc_params)
        merged.merge("piz", trainer.model.piz_params)

        def fn():
            batch = build_batch(trainer.model, trajs, u_L, z_noise)
            objective, _, _ = compute_objective(batch, cfg)
            return objective
        assert grad_check(fn, merged) < 1e-4

    def test_pg_surrogate_gradcheck(self):
        trainer, env, cfg = _tiny_model(seed=3)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 3,
                                          trainer.streams)
        from ibol_lab.ibol import sampling_policy_log_prob_sums
        returns = np.array([1.0, -0.3, 0.1])

        def fn():
            sums = sampling_policy_log_prob_sums(trainer.model, trajs)
            return (Tensor(returns - returns.mean()) * sums).mean()
        assert grad_check(fn, trainer.model.pis_params) < 1e-4

    def test_z_sampled_once_per_trajectory(self):
        trainer, env, cfg = _tiny_model(seed=4)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 2,
                                          trainer.streams)
        z_noise = np.zeros((2, cfg.d))
        batch = build_batch(trainer.model, trajs,
                            np.zeros((cfg.L, cfg.d)), z_noise)
        np.testing.assert_array_equal(batch.z.data, batch.encodings.mean.data)


class TestVpgUpdate:
    def test_equal_returns_zero_gradient(self):
        trainer, env, cfg = _tiny_model(seed=5)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 4,
                                          trainer.streams)
        before = trainer.model.pis_params.copy_data()
        vpg_update(trainer.model, trainer.opt_pis, trajs, np.full(4, 2.5))
        for name, t in trainer.model.pis_params:
            np.testing.assert_allclose(t.grad, 0.0, atol=1e-15)

    def test_signed_returns_move_log_probs(self):
        trainer, env, cfg = _tiny_model(seed=6)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 2,
                                          trainer.streams)
        from ibol_lab.ibol import sampling_policy_log_prob_sums
        before = sampling_policy_log_prob_sums(trainer.model, trajs).data.copy()
        vpg_update(trainer.model, trainer.opt_pis, trajs, np.array([1.0, -1.0]))
        after = sampling_policy_log_prob_sums(trainer.model, trajs).data
        assert after[0] > before[0]
        assert after[1] < before[1]

    def test_single_trajectory_warns(self):
        trainer, env, cfg = _tiny_model(seed=7)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 1,
                                          trainer.streams)
        with pytest.warns(UserWarning):
            vpg_update(trainer.model, trainer.opt_pis, trajs, np.array([1.0]))


class TestEncoderContract:
    def test_identical_trajectories_identical_encodings(self):
        trainer, env, cfg = _tiny_model(seed=8)
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 1,
                                          trainer.streams)
        d1 = encode_trajectory(trainer.model, trajs[0])
        d2 = encode_trajectory(trainer.model, trajs[0])
        np.testing.assert_array_equal(d1.mean.data, d2.mean.data)

    def test_masked_dimension_has_no_influence(self):
        trainer, env, cfg = _tiny_model(seed=9, observation_mask=(0,))
        trajs = collect_sampling_rollouts(trainer.model, trainer.driver, 1,
                                          trainer.streams)
        base = encode_trajectory(trainer.model, trajs[0])
        perturbed = Trajectory(trajs[0].states.copy(), trajs[0].goals,
                               context=trajs[0].context)
        perturbed.states[:, 1] += 123.0
        other = encode_trajectory(trainer.model, perturbed)
        np.testing.assert_array_equal(base.mean.data, other.mean.data)
        np.testing.assert_array_equal(base.log_std.data, other.log_std.data)

    def test_empty_batch_rejected(self):
        trainer, env, cfg = _tiny_model(seed=10)
        with pytest.raises(ValueError):
            trainer.model.encode_trajectories([])


class TestTrainEpoch:
    def test_zero_learning_rate_keeps_parameters(self):
        trainer, env, cfg = _tiny_model(seed=11)
        for opt in (trainer.opt_enc, trainer.opt_piz, trainer.opt_pis):
            opt.lr = 0.0
        before = {**trainer.model.enc_params.copy_data(),
                  **trainer.model.pis_params.copy_data(),
                  **trainer.model.piz_params.copy_data()}
        trainer.train_epoch(0)
        after = {**trainer.model.enc_params.copy_data(),
                 **trainer.model.pis_params.copy_data(),
                 **trainer.model.piz_params.copy_data()}
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])

    def test_fixed_seed_bit_identical_reports(self):
        r1 = _tiny_model(seed=12)[0].train_epoch(0)
        r2 = _tiny_model(seed=12)[0].train_epoch(0)
        assert r1 == r2

    def test_report_components_sum(self):
        trainer, env, cfg = _tiny_model(seed=13)
        report = trainer.train_epoch(0)
        total = (report["prediction"] + report["entropy"]
                 + report["compression"] + report["auxiliary"])
        assert report["objective"] == pytest.approx(total, abs=1e-9)


class TestRollouts:
    def test_same_z_same_seed_identical(self):
        trainer, env, cfg = _tiny_model(seed=14)
        z = np.array([0.5, -1.0])
        t1 = rollout_skill(trainer.model, trainer.driver, z, seed=99)
        t2 = rollout_skill(trainer.model, trainer.driver, z, seed=99)
        np.testing.assert_array_equal(t1.states, t2.states)
        np.testing.assert_array_equal(t1.goals, t2.goals)

    def test_rollout_csv_row_count(self, tmp_path):
        from ibol_lab.trajectory import write_trajectories_csv
        trainer, env, cfg = _tiny_model(seed=15)
        latents = SeedBank(3).stream("latents").normal(size=(20, cfg.d))
        trajs = rollout_skills(trainer.model, trainer.driver, latents, seed=5)
        path = tmp_path / "skills.csv"
        write_trajectories_csv(path, trajs)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + 20 * (env.spec.horizon + 1)

    def test_latents_grid_shape(self):
        grid = latents_grid(2)
        assert grid.shape == (48, 2)
        assert latents_grid(1, 4, 2).shape == (8, 1)


class TestCheckpointRoundTrip:
    def test_save_load_preserves_behavior(self, tmp_path):
        trainer, env, cfg = _tiny_model(seed=16)
        path = tmp_path / "skills.ckpt"
        save_skill_checkpoint(path, trainer.model, "point", env.spec.horizon)
        model, driver, extra = load_skill_model(path)
        z = np.array([0.3, 0.7])
        a = rollout_skill(trainer.model, trainer.driver, z, seed=4)
        b = rollout_skill(model, driver, z, seed=4)
        np.testing.assert_array_equal(a.states, b.states)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SkillConfig(L=0).validate()
        with pytest.raises(ConfigError):
            SkillConfig(algo="dads").validate()
        with pytest.raises(ConfigError):
            SkillConfig(beta=-1.0).validate()
