"""VALOR- and DIAYN-style skill discovery with continuous latent priors.

Both train a latent-conditioned goal policy by REINFORCE with a mean
baseline (desk-scale simplification of the SAC variant) plus a sampled
per-step entropy bonus weighted by ``entropy_coeff``.  VALOR reconstructs
the episode latent from the whole state sequence; DIAYN scores every state
against a per-state discriminator, rewarding log q(z|s) - log p(z).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Adam, ParamVector, Tensor
from .distributions import DiagGaussian, gaussian_head
from .envs import PointEnv
from .errors import NumericError
from .ibol import (
    RolloutDriver,
    SkillConfig,
    SkillModel,
    goal_box_for,
    sampling_policy_log_prob_sums,
)
from .nets import MLP, BetaPolicy, SequenceEncoder
from .seeding import SeedBank
from .trajectory import Trajectory

LOG_2PI = float(np.log(2.0 * np.pi))


def _std_normal_log_prob(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    return -0.5 * (z ** 2).sum(axis=-1) - 0.5 * z.shape[-1] * LOG_2PI


def valor_objective(trajectory: Trajectory, z: np.ndarray,
                    decoder_dist: DiagGaussian, entropy_coeff: float) -> float:
    """Latent reconstruction log-density plus the summed entropy estimate.

    The per-step entropy is estimated by -log pi of the sampled goals
    (stored on the trajectory); the value doubles as the policy's REINFORCE
    reward and, through the reconstruction term, the decoder's target.
    """
    recon = float(decoder_dist.log_prob(np.atleast_2d(z)).data[0])
    if not np.isfinite(recon):
        raise NumericError("non-finite decoder log-density")
    entropy_sum = float(-np.sum(trajectory.log_probs))
    return recon + entropy_coeff * entropy_sum


def diayn_reward(state: np.ndarray, z: np.ndarray,
                 discriminator_dist: DiagGaussian) -> float:
    """Per-step reward log q(z|s) - log p(z) with a standard-normal prior."""
    logq = float(discriminator_dist.log_prob(np.atleast_2d(z)).data[0])
    if not np.isfinite(logq):
        raise NumericError("non-finite discriminator log-density")
    return logq - float(_std_normal_log_prob(z)[0])


class BaselineTrainer:
    """Shared REINFORCE scaffolding; subclasses supply rewards and the
    auxiliary model update."""

    algo = "baseline"

    def __init__(self, env: PointEnv, cfg: SkillConfig, seed: int,
                 linearizer=None, ell: int = 1):
        cfg.validate()
        self.cfg = cfg
        self.env = env
        self.bank = SeedBank(seed)
        self.model = SkillModel(env.spec.state_dim,
                                *goal_box_for(env, linearizer is not None),
                                cfg, self.bank.stream("init"))
        self.driver = RolloutDriver(env, linearizer, ell,
                                    record_raw_steps=cfg.encode_raw_steps)
        self.opt_policy = Adam(self.model.piz_params, cfg.lr)
        self.streams = {name: self.bank.stream(name)
                        for name in ("env", "rollout-noise", "latent-prior")}

    def collect(self, n: int) -> list[Trajectory]:
        z = self.streams["latent-prior"].normal(size=(n, self.cfg.d))

        def policy(s, cond):
            x = np.concatenate([self.model.scale_states(s), cond], axis=1)
            return self.model.pi_z.dist(x)

        trajs = self.driver.run(policy, z, self.streams["env"],
                                self.streams["rollout-noise"])
        for t, zi in zip(trajs, z):
            t.latent = zi
        return trajs

    def returns(self, trajectories: list[Trajectory]) -> np.ndarray:
        raise NotImplementedError

    def auxiliary_update(self, trajectories: list[Trajectory]) -> dict[str, float]:
        raise NotImplementedError

    def _policy_log_prob_sums(self, trajectories: list[Trajectory]) -> Tensor:
        n = len(trajectories)
        T = trajectories[0].horizon
        s_flat = self.model.scale_states(
            np.concatenate([t.states[:-1] for t in trajectories], axis=0))
        g_flat = np.concatenate([t.goals for t in trajectories], axis=0)
        z_rep = np.repeat(np.stack([t.latent for t in trajectories]), T, axis=0)
        x = np.concatenate([s_flat, z_rep], axis=1)
        return self.model.pi_z.dist(x).log_prob(g_flat).reshape(n, T).sum(axis=1)

    def _entropy_sums(self, trajectories: list[Trajectory]) -> np.ndarray:
        """Sampled entropy estimate under the current policy parameters."""
        return -self._policy_log_prob_sums(trajectories).data

    def train_epoch(self, epoch: int) -> dict[str, float]:
        cfg = self.cfg
        trajs = self.collect(cfg.trajectories_per_epoch)
        report: dict[str, float] = {"epoch": epoch}
        for _ in range(cfg.grad_steps):
            rewards = self.returns(trajs)
            rewards = rewards + cfg.entropy_coeff * self._entropy_sums(trajs)
            if not np.all(np.isfinite(rewards)):
                raise NumericError("non-finite baseline return")
            advantage = rewards - rewards.mean()
            logp_sums = self._policy_log_prob_sums(trajs)
            surrogate = (Tensor(advantage) * logp_sums).mean()
            self.model.piz_params.zero_grad()
            (-surrogate).backward()
            self.opt_policy.step()
            report.update(self.auxiliary_update(trajs))
            report["return_mean"] = float(rewards.mean())
        return report

    def train(self) -> list[dict[str, float]]:
        return [self.train_epoch(e) for e in range(self.cfg.epochs)]


class ValorTrainer(BaselineTrainer):
    algo = "valor"

    def __init__(self, env: PointEnv, cfg: SkillConfig, seed: int,
                 linearizer=None, ell: int = 1):
        super().__init__(env, cfg, seed, linearizer, ell)
        self.dec_params = ParamVector()
        self.decoder = SequenceEncoder(self.dec_params, "dec", len(self.model.mask),
                                       cfg.hidden, cfg.d, self.bank.stream("init-dec"))
        self.opt_decoder = Adam(self.dec_params, cfg.lr)

    def _decode(self, trajectories: list[Trajectory]) -> DiagGaussian:
        seqs = np.stack([t.states[:, self.model.mask] for t in trajectories], axis=1)
        return self.decoder.encode(self.model.scale_states(seqs))

    def returns(self, trajectories: list[Trajectory]) -> np.ndarray:
        dist = self._decode(trajectories)
        z = np.stack([t.latent for t in trajectories])
        return dist.log_prob(z).data.copy()

    def auxiliary_update(self, trajectories: list[Trajectory]) -> dict[str, float]:
        z = np.stack([t.latent for t in trajectories])
        self.dec_params.zero_grad()
        loss = -self._decode(trajectories).log_prob(z).mean()
        loss.backward()
        self.opt_decoder.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError("non-finite decoder loss")
        return {"decoder_loss": value}


class DiaynTrainer(BaselineTrainer):
    algo = "diayn"

    def __init__(self, env: PointEnv, cfg: SkillConfig, seed: int,
                 linearizer=None, ell: int = 1):
        super().__init__(env, cfg, seed, linearizer, ell)
        self.disc_params = ParamVector()
        self.discriminator = MLP(self.disc_params, "disc", len(self.model.mask),
                                 (cfg.hidden, cfg.hidden), 2 * cfg.d,
                                 self.bank.stream("init-disc"), activation="relu",
                                 out_scale=0.01)
        self.opt_disc = Adam(self.disc_params, cfg.lr)

    def _disc_dist(self, states_flat: np.ndarray) -> DiagGaussian:
        x = self.model.scale_states(states_flat[:, self.model.mask])
        return gaussian_head(self.discriminator(x), self.cfg.d)

    def returns(self, trajectories: list[Trajectory]) -> np.ndarray:
        n = len(trajectories)
        T = trajectories[0].horizon
        s_flat = np.concatenate([t.states[1:] for t in trajectories], axis=0)
        z_rep = np.repeat(np.stack([t.latent for t in trajectories]), T, axis=0)
        logq = self._disc_dist(s_flat).log_prob(z_rep).data.reshape(n, T)
        logp = _std_normal_log_prob(np.stack([t.latent for t in trajectories]))
        return (logq - logp[:, None]).sum(axis=1)

    def auxiliary_update(self, trajectories: list[Trajectory]) -> dict[str, float]:
        T = trajectories[0].horizon
        s_flat = np.concatenate([t.states[1:] for t in trajectories], axis=0)
        z_rep = np.repeat(np.stack([t.latent for t in trajectories]), T, axis=0)
        self.disc_params.zero_grad()
        loss = -self._disc_dist(s_flat).log_prob(z_rep).mean()
        loss.backward()
        self.opt_disc.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError("non-finite discriminator loss")
        return {"discriminator_loss": value}


def make_baseline_trainer(algo: str, env: PointEnv, cfg: SkillConfig, seed: int,
                          linearizer=None, ell: int = 1) -> BaselineTrainer:
    if algo == "valor":
        return ValorTrainer(env, cfg, seed, linearizer, ell)
    if algo == "diayn":
        return DiaynTrainer(env, cfg, seed, linearizer, ell)
    raise ValueError(f"unknown baseline algorithm: {algo}")
