"""Soft actor-critic core shared by the linearizer and the meta-controller.

Desk-scale choices: a single critic with a Polyak-averaged target network,
tanh-Gaussian actor, and either automatic temperature adjustment toward a
target entropy or a fixed entropy coefficient.  All sampling noise comes
from generators passed in by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Adam, ParamVector, Tensor, concat
from .nets import MLP, TanhGaussianPolicy


@dataclass
class SacConfig:
    hidden: int = 32
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    grad_steps: int = 4
    init_temperature: float = 0.1
    target_entropy: float | None = None     # None -> -dim(A)/2
    fixed_temperature: float | None = None  # set to disable auto-adjustment

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.batch_size < 1 or self.grad_steps < 0:
            raise ValueError("batch_size must be >= 1 and grad_steps >= 0")


class ReplayBuffer:
    """Fixed-capacity ring of transitions with FIFO eviction."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.act = np.zeros((self.capacity, act_dim))
        self.rew = np.zeros(self.capacity)
        self.obs2 = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, act, rew, obs2, done) -> None:
        obs = np.atleast_2d(obs)
        n = obs.shape[0]
        idx = (self._next + np.arange(n)) % self.capacity
        self.obs[idx] = obs
        self.act[idx] = np.atleast_2d(act)
        self.rew[idx] = np.asarray(rew).reshape(-1)
        self.obs2[idx] = np.atleast_2d(obs2)
        self.done[idx] = np.asarray(done, dtype=float).reshape(-1)
        self._next = int((self._next + n) % self.capacity)
        self._size = int(min(self._size + n, self.capacity))

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise ValueError("replay buffer is empty")
        idx = rng.integers(0, self._size, size=batch_size)
        return {"obs": self.obs[idx], "act": self.act[idx], "rew": self.rew[idx],
                "obs2": self.obs2[idx], "done": self.done[idx]}


class RunningNorm:
    """Per-dimension running mean/std (exponential moving average)."""

    def __init__(self, dim: int, momentum: float = 0.999):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.momentum = momentum

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        m = self.momentum ** batch.shape[0]
        self.mean = m * self.mean + (1 - m) * batch.mean(axis=0)
        self.var = m * self.var + (1 - m) * batch.var(axis=0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / np.sqrt(self.var + 1e-8)


class SacAgent:
    """Actor, critic + target, temperature; one gradient step per call."""

    def __init__(self, obs_dim: int, act_lo: np.ndarray, act_hi: np.ndarray,
                 cfg: SacConfig, init_rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        act_dim = np.asarray(act_lo).size
        self.actor_params = ParamVector()
        self.actor = TanhGaussianPolicy(self.actor_params, "actor", obs_dim,
                                        cfg.hidden, act_lo, act_hi, init_rng)
        self.critic_params = ParamVector()
        self.critic = MLP(self.critic_params, "critic", obs_dim + act_dim,
                          (cfg.hidden, cfg.hidden), 1, init_rng, activation="relu")
        self.target_params = self.critic_params.clone()
        self.target = MLP.bind(self.target_params, "critic", 2, activation="relu")
        self.temp_params = ParamVector()
        self.log_temp = self.temp_params.add(
            "log_temp", np.array(np.log(cfg.init_temperature)))
        # -dim(A)/2 in the unit-normalized action space; in raw units the
        # box half-widths shift the achievable entropy by sum(log scale).
        half_width = (np.asarray(act_hi, dtype=float) - np.asarray(act_lo)) / 2.0
        self.target_entropy = (cfg.target_entropy if cfg.target_entropy is not None
                               else -act_dim / 2.0 + float(np.sum(np.log(half_width))))
        self.opt_actor = Adam(self.actor_params, cfg.lr)
        self.opt_critic = Adam(self.critic_params, cfg.lr)
        self.opt_temp = Adam(self.temp_params, cfg.lr)

    @property
    def temperature(self) -> float:
        if self.cfg.fixed_temperature is not None:
            return float(self.cfg.fixed_temperature)
        return float(np.exp(self.log_temp.data))

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None,
            mode: bool = False) -> np.ndarray:
        obs = np.atleast_2d(obs)
        dist = self.actor.dist(obs)
        if mode:
            return dist.mode()
        noise = rng.normal(size=(obs.shape[0], self.actor.dim))
        action, _ = dist.sample_with_log_prob(noise)
        return action.data

    def q_values(self, obs, act, target: bool = False) -> Tensor:
        """Q(obs, act); ``act`` may be a Tensor so actor gradients flow through."""
        net = self.target if target else self.critic
        obs_t = obs if isinstance(obs, Tensor) else Tensor(np.atleast_2d(obs))
        act_t = act if isinstance(act, Tensor) else Tensor(np.atleast_2d(act))
        return net(concat([obs_t, act_t], axis=-1)).reshape(-1)

    def update(self, batch: dict[str, np.ndarray],
               rng: np.random.Generator) -> dict[str, float]:
        cfg = self.cfg
        n = batch["obs"].shape[0]
        temp = self.temperature

        # Critic: one-step TD target through the Polyak-averaged network.
        dist2 = self.actor.dist(batch["obs2"])
        a2, logp2 = dist2.sample_with_log_prob(rng.normal(size=(n, self.actor.dim)))
        q2 = self.q_values(batch["obs2"], a2.data, target=True).data
        y = batch["rew"] + cfg.gamma * (1.0 - batch["done"]) * (q2 - temp * logp2.data)
        self.critic_params.zero_grad()
        q = self.q_values(batch["obs"], batch["act"])
        critic_loss = (q - Tensor(y)).square().mean()
        critic_loss.backward()
        self.opt_critic.step()

        # Actor: reparameterized, entropy-regularized.
        self.actor_params.zero_grad()
        self.critic_params.zero_grad()
        dist = self.actor.dist(batch["obs"])
        a_new, logp = dist.sample_with_log_prob(rng.normal(size=(n, self.actor.dim)))
        actor_loss = (logp * temp - self.q_values(batch["obs"], a_new)).mean()
        actor_loss.backward()
        self.opt_actor.step()
        self.critic_params.zero_grad()

        # Temperature: move the policy entropy toward the target.
        entropy_est = float(-logp.data.mean())
        if cfg.fixed_temperature is None:
            self.temp_params.zero_grad()
            temp_loss = self.log_temp.exp() * (entropy_est - self.target_entropy)
            temp_loss.backward()
            self.opt_temp.step()

        self.target_params.polyak_from(self.critic_params, cfg.tau)

        losses = {"critic_loss": float(critic_loss.data),
                  "actor_loss": float(actor_loss.data),
                  "entropy": entropy_est,
                  "temperature": self.temperature}
        for name, value in losses.items():
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite {name} in SAC update")
        return losses
