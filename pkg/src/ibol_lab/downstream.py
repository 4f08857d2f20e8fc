"""Hierarchical evaluation: a SAC meta-controller over a frozen skill policy.

The meta-controller observes the state and the task goal, picks a skill
latent every ``ell_m`` macro steps, and the frozen skill policy runs in
mode underneath.  Reward accumulates over each chunk, so the abstracted
MDP sees exactly the raw task return.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import GoalTaskSpec, goal_task_reward
from .errors import ConfigError
from .ibol import RolloutDriver, SkillModel
from .sac import ReplayBuffer, SacAgent, SacConfig
from .seeding import SeedBank


@dataclass
class MetaConfig:
    ell_m: int = 5                      # macro steps held per latent choice
    latent_half_width: float = 2.0      # selectable z range
    epochs: int = 300
    episodes_per_epoch: int = 10
    buffer_capacity: int = 50_000
    sac: SacConfig = field(default_factory=lambda: SacConfig(fixed_temperature=0.01))

    def validate(self, n_macro: int) -> None:
        if self.ell_m < 1 or n_macro % self.ell_m:
            raise ConfigError(f"ell_m={self.ell_m} must divide the macro horizon "
                              f"{n_macro}")
        if not np.isfinite(self.latent_half_width) or self.latent_half_width <= 0:
            raise ConfigError("latent_half_width must be positive and finite")
        self.sac.validate()


def meta_step(agent: SacAgent, obs: np.ndarray,
              rng: np.random.Generator | None = None, mode: bool = True) -> np.ndarray:
    """Pick the skill latent for the next chunk; always inside the latent box."""
    return agent.act(obs, rng=rng, mode=mode)


class MetaEnv:
    """Batched chunk-level dynamics of a goal task over frozen skills."""

    def __init__(self, task: GoalTaskSpec, model: SkillModel,
                 driver: RolloutDriver, cfg: MetaConfig):
        self.task = task
        self.model = model
        self.driver = driver
        self.cfg = cfg
        self.n_macro = driver.n_macro
        cfg.validate(self.n_macro)
        self.n_chunks = self.n_macro // cfg.ell_m
        self.obs_dim = task.goal_low.size + model.state_dim

    def build_obs(self, s: np.ndarray, w: np.ndarray) -> np.ndarray:
        scale = max(float(self.task.goal_high.max()), 1.0)
        return np.concatenate([s, w], axis=1) / scale

    def run_chunk(self, s: np.ndarray, w: np.ndarray, z: np.ndarray,
                  t_raw: int, goal_rng: np.random.Generator
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        """Advance ell_m macro steps; returns (s, w, chunk rewards, t_raw)."""
        n = s.shape[0]
        rewards = np.zeros(n)
        eta = self.task.resample_period
        for _ in range(self.cfg.ell_m):
            x = np.concatenate([self.model.scale_states(s), z], axis=1)
            g = self.model.pi_z.dist(x).mode()
            if self.driver.linearizer is None:
                s = self.driver.env.step(s, g)
                t_raw += 1
                rewards += self._reward_events(w, s, t_raw)
                w = self._maybe_resample(w, s, t_raw, goal_rng)
            else:
                for _ in range(self.driver.ell):
                    a = self.driver.linearizer.act(s, g, mode=True)
                    s = self.driver.env.step(s, a)
                    t_raw += 1
                    rewards += self._reward_events(w, s, t_raw)
                    w = self._maybe_resample(w, s, t_raw, goal_rng)
        return s, w, rewards, t_raw

    def _reward_events(self, w: np.ndarray, s: np.ndarray, t: int) -> np.ndarray:
        return np.array([goal_task_reward(self.task, w[i], s[i], t)
                         for i in range(s.shape[0])])

    def _maybe_resample(self, w: np.ndarray, s: np.ndarray, t: int,
                        rng: np.random.Generator) -> np.ndarray:
        eta = self.task.resample_period
        if eta is None or t % eta or t >= self.task.horizon:
            return w
        return np.stack([self.task.sample_goal(rng, around=s[i, :2])
                         for i in range(s.shape[0])])


class MetaTrainer:
    def __init__(self, task: GoalTaskSpec, model: SkillModel, driver: RolloutDriver,
                 cfg: MetaConfig, seed: int):
        self.meta_env = MetaEnv(task, model, driver, cfg)
        self.cfg = cfg
        self.task = task
        self.model = model
        self.driver = driver
        self.bank = SeedBank(seed)
        d = model.cfg.d
        box = np.full(d, cfg.latent_half_width)
        self.agent = SacAgent(self.meta_env.obs_dim, -box, box, cfg.sac,
                              self.bank.stream("init-meta"))
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.meta_env.obs_dim, d)
        self._env_rng = self.bank.stream("env")
        self._goal_rng = self.bank.stream("task-goals")
        self._noise_rng = self.bank.stream("policy-noise")
        self._update_rng = self.bank.stream("updates")

    def _episode_batch(self, n: int, agent_mode: bool = False,
                       random_latents: np.random.Generator | None = None
                       ) -> tuple[float, np.ndarray, bool]:
        """Run n episodes; returns (mean return, final distances, stored)."""
        env = self.driver.env
        me = self.meta_env
        s = env.reset_batch(self._env_rng, n)
        w = np.stack([self.task.sample_goal(self._goal_rng) for _ in range(n)])
        t_raw = 0
        total = np.zeros(n)
        store = random_latents is None
        for chunk in range(me.n_chunks):
            obs = me.build_obs(s, w)
            if random_latents is not None:
                z = random_latents.uniform(-self.cfg.latent_half_width,
                                           self.cfg.latent_half_width,
                                           size=(n, self.model.cfg.d))
            else:
                z = meta_step(self.agent, obs, rng=self._noise_rng, mode=agent_mode)
            s, w, rewards, t_raw = me.run_chunk(s, w, z, t_raw, self._goal_rng)
            total += rewards
            if store:
                done = float(chunk == me.n_chunks - 1)
                self.buffer.add(obs, z, rewards, me.build_obs(s, w),
                                np.full(n, done))
        final_dist = np.linalg.norm(w - s, axis=1)
        return float(total.mean()), final_dist, store

    def train(self) -> list[dict[str, float]]:
        curve = []
        for epoch in range(self.cfg.epochs):
            mean_return, _, _ = self._episode_batch(self.cfg.episodes_per_epoch)
            losses = {}
            if len(self.buffer) >= self.cfg.sac.batch_size:
                for _ in range(self.cfg.sac.grad_steps):
                    batch = self.buffer.sample(self._update_rng,
                                               self.cfg.sac.batch_size)
                    losses = self.agent.update(batch, self._update_rng)
            entry = {"epoch": epoch, "mean_return": mean_return}
            entry.update(losses)
            curve.append(entry)
        return curve

    def evaluate(self, n_episodes: int, random_latents: bool = False) -> dict[str, float]:
        """Mean return and final goal distance; mode latents unless random."""
        rng = self.bank.stream("eval-random-latents") if random_latents else None
        mean_return, final_dist, _ = self._episode_batch(
            n_episodes, agent_mode=True, random_latents=rng)
        return {"mean_return": mean_return,
                "mean_final_distance": float(final_dist.mean())}
