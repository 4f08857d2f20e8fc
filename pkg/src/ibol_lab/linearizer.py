"""Goal-conditioned low-level policy that makes directional transitions easy.

The policy is rewarded with the inner product between the goal and the state
difference across each macro step (length ``ell``); the same chunk-level
reward is credited to every low-level step of the chunk so that one-step TD
learning applies.  Trained with SAC over a replay buffer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamVector
from .checkpoint import load_checkpoint, save_checkpoint
from .envs import ACTION_LIMIT, PointEnv, make_env
from .nets import MLP, TanhGaussianPolicy
from .sac import ReplayBuffer, RunningNorm, SacAgent, SacConfig
from .seeding import SeedBank
from .trajectory import Trajectory

GOAL_PRIORS = ("beta11", "beta22")
GOAL_SCHEDULES = ("episode", "macro")


@dataclass(frozen=True)
class MacroConfig:
    """Macro-step length and when new goals are issued."""

    ell: int = 10
    goal_schedule: str = "episode"  # fixed per episode, or fresh per macro step

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.goal_schedule not in GOAL_SCHEDULES:
            raise ValueError(f"goal_schedule must be one of {GOAL_SCHEDULES}")

    def n_macro(self, horizon: int) -> int:
        if horizon % self.ell:
            raise ValueError(f"ell={self.ell} must divide horizon={horizon}")
        return horizon // self.ell


@dataclass
class LinearizerConfig:
    ell: int = 10
    goal_schedule: str = "episode"
    goal_prior: str = "beta11"
    epochs: int = 800
    episodes_per_epoch: int = 10
    buffer_capacity: int = 100_000
    omit_locomotion: bool = True
    sac: SacConfig = field(default_factory=SacConfig)

    def validate(self) -> None:
        if self.goal_prior not in GOAL_PRIORS:
            raise ValueError(f"goal_prior must be one of {GOAL_PRIORS}")
        MacroConfig(self.ell, self.goal_schedule)
        if self.epochs < 1 or self.episodes_per_epoch < 1:
            raise ValueError("epochs and episodes_per_epoch must be >= 1")
        self.sac.validate()


def linearizer_reward(s_chunk_start: np.ndarray, s_chunk_end: np.ndarray,
                      g: np.ndarray, ell: int) -> float:
    """(1/ell) * (s_end - s_start)^T g; the same value is credited to every
    low-level step of the chunk."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    s0 = np.asarray(s_chunk_start, dtype=float)
    s1 = np.asarray(s_chunk_end, dtype=float)
    g = np.asarray(g, dtype=float)
    if s0.shape != s1.shape or s0.shape[-1] != g.shape[-1]:
        raise ValueError("state and goal dimensions do not match")
    return float((s1 - s0) @ g) / ell


def sample_episode_goals(cfg: MacroConfig, prior: str, horizon: int,
                         rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """Goals for one episode, shape (n_macro, dim), components in [-1, 1]."""
    if prior not in GOAL_PRIORS:
        raise ValueError(f"unknown goal prior: {prior}")
    a = 1.0 if prior == "beta11" else 2.0
    n = cfg.n_macro(horizon)
    if cfg.goal_schedule == "episode":
        g = 2.0 * rng.beta(a, a, size=(1, dim)) - 1.0
        return np.repeat(g, n, axis=0)
    return 2.0 * rng.beta(a, a, size=(n, dim)) - 1.0


class LinearizerPolicy:
    """Actor plus observation construction (goal only, or normalized state + goal)."""

    def __init__(self, actor: TanhGaussianPolicy, omit_locomotion: bool,
                 norm: RunningNorm | None = None):
        self.actor = actor
        self.omit_locomotion = omit_locomotion
        self.norm = norm

    def obs(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(s)
        g = np.atleast_2d(g)
        if self.omit_locomotion:
            return g
        s = self.norm.apply(s) if self.norm is not None else s
        return np.concatenate([s, g], axis=1)

    def act(self, s: np.ndarray, g: np.ndarray,
            rng: np.random.Generator | None = None, mode: bool = True) -> np.ndarray:
        dist = self.actor.dist(self.obs(s, g))
        if mode:
            return dist.mode()
        noise = rng.normal(size=(np.atleast_2d(s).shape[0], self.actor.dim))
        action, _ = dist.sample_with_log_prob(noise)
        return action.data


class IdentityLinearizer:
    """Stub low-level policy: action = ACTION_LIMIT * g (tests, PointEnv)."""

    def act(self, s, g, rng=None, mode=True) -> np.ndarray:
        return ACTION_LIMIT * np.atleast_2d(np.asarray(g, dtype=float))


def linearized_step(env: PointEnv, s: np.ndarray, g: np.ndarray, policy,
                    ell: int, mode: bool = True,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Run ``ell`` low-level actions toward ``g`` and return the end state.

    Accepts batched states (n, dim) with per-row goals.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    for _ in range(ell):
        a = policy.act(s, g, rng=rng, mode=mode)
        s = env.step(s, a)
    return s


class LinearizerTrainer:
    def __init__(self, env: PointEnv, cfg: LinearizerConfig, seed: int):
        cfg.validate()
        self.env = env
        self.cfg = cfg
        self.macro = MacroConfig(cfg.ell, cfg.goal_schedule)
        self.n_macro = self.macro.n_macro(env.spec.horizon)
        self.bank = SeedBank(seed)
        goal_dim = env.spec.state_dim
        obs_dim = goal_dim if cfg.omit_locomotion else env.spec.state_dim + goal_dim
        act_box = np.full(env.spec.action_dim, ACTION_LIMIT)
        self.agent = SacAgent(obs_dim, -act_box, act_box, cfg.sac,
                              self.bank.stream("init"))
        self.norm = None if cfg.omit_locomotion else RunningNorm(env.spec.state_dim)
        self.policy = LinearizerPolicy(self.agent.actor, cfg.omit_locomotion, self.norm)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, env.spec.action_dim)
        self._env_rng = self.bank.stream("env")
        self._goal_rng = self.bank.stream("goals")
        self._noise_rng = self.bank.stream("policy-noise")
        self._update_rng = self.bank.stream("updates")

    def collect_epoch(self) -> float:
        """Roll one batch of episodes into the buffer; returns mean return."""
        cfg = self.cfg
        env = self.env
        horizon = env.spec.horizon
        B = cfg.episodes_per_epoch
        goals = np.stack([sample_episode_goals(self.macro, cfg.goal_prior, horizon,
                                               self._goal_rng, env.spec.state_dim)
                          for _ in range(B)])
        s = env.reset_batch(self._env_rng, B)
        states = np.zeros((horizon + 1, B, env.spec.state_dim))
        obs_log = np.zeros((horizon, B, self.buffer.obs.shape[1]))
        act_log = np.zeros((horizon, B, env.spec.action_dim))
        states[0] = s
        for t in range(horizon):
            g = goals[:, t // cfg.ell]
            if self.norm is not None:
                self.norm.update(s)
            obs = self.policy.obs(s, g)
            a = self.agent.act(obs, self._noise_rng)
            s = env.step(s, a)
            states[t + 1] = s
            obs_log[t] = obs
            act_log[t] = a
        rew = np.zeros((horizon, B))
        for c in range(self.n_macro):
            delta = states[(c + 1) * cfg.ell] - states[c * cfg.ell]
            rew[c * cfg.ell:(c + 1) * cfg.ell] = \
                (delta * goals[:, c]).sum(axis=1) / cfg.ell
        done = np.zeros((horizon, B))
        done[-1] = 1.0
        next_obs = np.concatenate([obs_log[1:], obs_log[-1:]], axis=0)
        n = horizon * B
        self.buffer.add(obs_log.reshape(n, -1), act_log.reshape(n, -1),
                        rew.reshape(n), next_obs.reshape(n, -1), done.reshape(n))
        return float(rew.sum(axis=0).mean())

    def train(self) -> list[dict[str, float]]:
        log = []
        for epoch in range(self.cfg.epochs):
            mean_return = self.collect_epoch()
            losses = {}
            if len(self.buffer) >= self.cfg.sac.batch_size:
                for _ in range(self.cfg.sac.grad_steps):
                    batch = self.buffer.sample(self._update_rng, self.cfg.sac.batch_size)
                    losses = self.agent.update(batch, self._update_rng)
            entry = {"epoch": epoch, "mean_return": mean_return}
            entry.update(losses)
            log.append(entry)
        return log

    def save(self, path) -> None:
        params = ParamVector()
        params.merge("policy", self.agent.actor_params)
        if self.norm is not None:
            params.add("norm.mean", self.norm.mean)
            params.add("norm.var", self.norm.var)
        save_checkpoint(path, "linearizer", params, extra={
            "env": self.env.spec.name,
            "horizon": self.env.spec.horizon,
            "ell": self.cfg.ell,
            "goal_schedule": self.cfg.goal_schedule,
            "goal_prior": self.cfg.goal_prior,
            "hidden": self.cfg.sac.hidden,
            "omit_locomotion": self.cfg.omit_locomotion,
        })


def load_linearizer(path) -> tuple[LinearizerPolicy, dict]:
    module, arrays, extra = load_checkpoint(path)
    if module != "linearizer":
        raise ValueError(f"expected a linearizer checkpoint, found {module}")
    params = ParamVector()
    norm = None
    for name, arr in arrays.items():
        if name.startswith("norm."):
            continue
        params.add(name.removeprefix("policy."), arr)
    if "norm.mean" in arrays:
        norm = RunningNorm(arrays["norm.mean"].size)
        norm.mean = arrays["norm.mean"]
        norm.var = arrays["norm.var"]
    act_box = np.full(2, ACTION_LIMIT)
    actor = TanhGaussianPolicy.bind(params, "actor", -act_box, act_box)
    return LinearizerPolicy(actor, bool(extra["omit_locomotion"]), norm), extra


# ---------------------------------------------------------------------------
# Coverage evaluation
# ---------------------------------------------------------------------------


def state_coverage(points: np.ndarray, extent: float, bins_per_axis: int,
                   plane_dims: tuple[int, int] = (0, 1)) -> int:
    """Occupied cells of a uniform grid over [-extent, extent]^2.

    The extent comes from configuration, not from the data; points outside
    it fall in no cell.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))[:, list(plane_dims)]
    if pts.shape[0] == 0:
        raise ValueError("empty input")
    width = 2.0 * extent / bins_per_axis
    inside = np.all(np.abs(pts) <= extent, axis=1)
    pts = pts[inside]
    if pts.shape[0] == 0:
        return 0
    cells = np.minimum(((pts + extent) / width).astype(np.int64), bins_per_axis - 1)
    return int(np.unique(cells, axis=0).shape[0])


def trajectory_points(trajectories: list[Trajectory], final_only: bool = False) -> np.ndarray:
    if not trajectories:
        raise ValueError("empty input")
    if final_only:
        return np.stack([t.final_state for t in trajectories])
    return np.concatenate([t.states for t in trajectories], axis=0)


def collect_goal_rollouts(env: PointEnv, policy, n_episodes: int,
                          macro: MacroConfig, goal_prior: str, seed: int,
                          sample_actions: bool = True) -> list[Trajectory]:
    """Batched rollouts with prior-sampled goals (coverage protocol)."""
    bank = SeedBank(seed)
    env_rng = bank.stream("env")
    goal_rng = bank.stream("goals")
    noise_rng = bank.stream("policy-noise")
    horizon = env.spec.horizon
    goals = np.stack([sample_episode_goals(macro, goal_prior, horizon, goal_rng,
                                           env.spec.state_dim)
                      for _ in range(n_episodes)])
    s = env.reset_batch(env_rng, n_episodes)
    states = np.zeros((horizon + 1, n_episodes, env.spec.state_dim))
    states[0] = s
    for t in range(horizon):
        g = goals[:, t // macro.ell]
        a = policy.act(s, g, rng=noise_rng, mode=not sample_actions)
        s = env.step(s, a)
        states[t + 1] = s
    out = []
    for i in range(n_episodes):
        per_step_goals = np.repeat(goals[i], macro.ell, axis=0)
        out.append(Trajectory(states[:, i], per_step_goals))
    return out


def random_action_rollouts(env: PointEnv, n_episodes: int, seed: int) -> list[Trajectory]:
    """Uniform-random actions; the coverage baseline."""
    bank = SeedBank(seed)
    env_rng = bank.stream("env")
    act_rng = bank.stream("policy-noise")
    horizon = env.spec.horizon
    s = env.reset_batch(env_rng, n_episodes)
    states = np.zeros((horizon + 1, n_episodes, env.spec.state_dim))
    actions = np.zeros((horizon, n_episodes, env.spec.action_dim))
    states[0] = s
    for t in range(horizon):
        a = act_rng.uniform(-ACTION_LIMIT, ACTION_LIMIT,
                            size=(n_episodes, env.spec.action_dim))
        s = env.step(s, a)
        states[t + 1] = s
        actions[t] = a
    return [Trajectory(states[:, i], actions[:, i]) for i in range(n_episodes)]


def train_linearizer(env_name: str, cfg: LinearizerConfig, seed: int,
                     out_path) -> list[dict[str, float]]:
    env = make_env(env_name)
    trainer = LinearizerTrainer(env, cfg, seed)
    log = trainer.train()
    trainer.save(out_path)
    return log
