"""Skill discovery with an information-bottleneck objective.

Three learnable components operate on top of the (optional) linearizer: a
sampling policy producing goals from a state and a per-episode context u, a
bidirectional-recurrent trajectory encoder mapping state sequences to skill
posteriors, and a skill policy imitating the sampling policy given the
latent.  The encoder and skill policy train by reparameterized gradients;
the sampling policy trains by REINFORCE on its trajectories' total
objective contributions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Adam, ParamVector, Tensor, concat
from .checkpoint import load_checkpoint, save_checkpoint
from .distributions import DiagGaussian
from .envs import PointEnv, make_env
from .errors import ConfigError, NumericError
from .linearizer import load_linearizer
from .nets import BetaPolicy, SequenceEncoder
from .seeding import SeedBank
from .trajectory import Trajectory

ALGORITHMS = ("ibol", "valor", "diayn")


@dataclass
class SkillConfig:
    """Hyperparameters for skill discovery training (all algorithms)."""

    algo: str = "ibol"
    d: int = 2                        # skill latent dimension; context u matches
    hidden: int = 32
    lr: float = 3e-4
    epochs: int = 5000
    trajectories_per_epoch: int = 16
    grad_steps: int = 4
    beta: float = 2.25e-3             # compression weight
    lam: float = 0.45                 # auxiliary context-reconstruction weight
    L: int = 16                       # prior samples for the marginal estimate
    aux_log_density: bool = True      # False: use the raw density
    resample_marginal_per_step: bool = False
    observation_mask: tuple[int, ...] | None = None
    encode_raw_steps: bool = False    # raw env steps instead of macro states
    state_scale: float = 2.5          # fixed input normalization for point envs
    entropy_coeff: float = 0.1        # baseline algorithms' alpha

    def validate(self) -> None:
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.beta < 0 or self.lam < 0:
            raise ConfigError("beta and lambda must be >= 0")
        if self.epochs < 1 or self.trajectories_per_epoch < 1 or self.grad_steps < 1:
            raise ConfigError("epochs, trajectories_per_epoch, grad_steps must be >= 1")
        if self.lr <= 0 or not np.isfinite(self.lr):
            raise ConfigError("lr must be positive and finite")
        if self.state_scale <= 0:
            raise ConfigError("state_scale must be positive")
        if self.observation_mask is not None and len(self.observation_mask) == 0:
            raise ConfigError("observation_mask must name at least one dimension")


class SkillModel:
    """Sampling policy, trajectory encoder and skill policy over one goal box."""

    def __init__(self, state_dim: int, goal_lo: np.ndarray, goal_hi: np.ndarray,
                 cfg: SkillConfig, init_rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.state_dim = state_dim
        self.goal_lo = np.asarray(goal_lo, dtype=float)
        self.goal_hi = np.asarray(goal_hi, dtype=float)
        mask = cfg.observation_mask or tuple(range(state_dim))
        if any(i < 0 or i >= state_dim for i in mask):
            raise ConfigError("observation_mask indices out of range")
        self.mask = tuple(mask)
        self.enc_params = ParamVector()
        self.encoder = SequenceEncoder(self.enc_params, "enc", len(self.mask),
                                       cfg.hidden, cfg.d, init_rng)
        self.pis_params = ParamVector()
        self.pi_s = BetaPolicy(self.pis_params, "pis", state_dim + cfg.d,
                               cfg.hidden, self.goal_lo, self.goal_hi, init_rng)
        self.piz_params = ParamVector()
        self.pi_z = BetaPolicy(self.piz_params, "piz", state_dim + cfg.d,
                               cfg.hidden, self.goal_lo, self.goal_hi, init_rng)

    def scale_states(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(s, dtype=float) / self.cfg.state_scale

    def encode_trajectories(self, trajectories: list[Trajectory]) -> DiagGaussian:
        """Batched posterior over z from masked, rescaled state sequences."""
        if not trajectories:
            raise ValueError("empty batch")
        seqs = np.stack([t.states[:, self.mask] for t in trajectories], axis=1)
        return self.encoder.encode(self.scale_states(seqs))

    def merged_params(self) -> ParamVector:
        merged = ParamVector()
        merged.merge("enc", self.enc_params)
        merged.merge("pis", self.pis_params)
        merged.merge("piz", self.piz_params)
        return merged


def encode_trajectory(model: SkillModel, trajectory: Trajectory) -> DiagGaussian:
    """Posterior over z for a single episode's state sequence."""
    return model.encode_trajectories([trajectory])


@dataclass
class SkillBatch:
    """One epoch's trajectories with every tape quantity the objective needs."""

    trajectories: list[Trajectory]
    encodings: DiagGaussian          # batched over trajectories
    z: Tensor                        # (n, d) one reparameterized draw each
    logp_z: Tensor                   # (n, T) imitation log-probs
    logp_s_matrix: Tensor            # (n, T, L) log pi_s(g_t | s_t, u_i)
    logp_aux: Tensor                 # (n,) log p_phi(u_own | s_{0:T})


def _repeat_rows(x: Tensor, reps: int) -> Tensor:
    """(n, d) -> (n * reps, d), repeating each row; keeps gradients."""
    n, d = x.shape
    tiled = x.reshape(n, 1, d) * Tensor(np.ones((1, reps, 1)))
    return tiled.reshape(n * reps, d)


def build_batch(model: SkillModel, trajectories: list[Trajectory],
                u_samples: np.ndarray, z_noise: np.ndarray) -> SkillBatch:
    cfg = model.cfg
    n = len(trajectories)
    T = trajectories[0].horizon
    L = u_samples.shape[0]
    enc = model.encode_trajectories(trajectories)
    z = enc.sample(z_noise)

    s_flat = model.scale_states(
        np.concatenate([t.states[:-1] for t in trajectories], axis=0))
    g_flat = np.concatenate([t.goals for t in trajectories], axis=0)

    x_z = concat([Tensor(s_flat), _repeat_rows(z, T)], axis=-1)
    logp_z = model.pi_z.dist(x_z).log_prob(g_flat).reshape(n, T)

    u_tiled = np.tile(u_samples, (n * T, 1))                       # (n*T*L, d)
    s_tiled = np.repeat(s_flat, L, axis=0)
    g_tiled = np.repeat(g_flat, L, axis=0)
    x_s = np.concatenate([s_tiled, u_tiled], axis=1)
    logp_s = model.pi_s.dist(x_s).log_prob(g_tiled).reshape(n, T, L)

    u_own = np.stack([t.context for t in trajectories])
    logp_aux = enc.log_prob(u_own)
    return SkillBatch(trajectories, enc, z, logp_z, logp_s, logp_aux)


def compute_objective(batch: SkillBatch, cfg: SkillConfig
                      ) -> tuple[Tensor, dict[str, float], np.ndarray]:
    """Training objective, per-component means, and per-trajectory returns.

    Per trajectory: mean over steps of [log pi_z(g|s,z) - log((1/L) sum_i
    pi_s(g|s,u_i))], minus beta times the posterior's KL to the latent
    prior, plus lambda times the encoder's (log-)density at the episode's
    own context.  The mean over trajectories is the scalar objective; each
    trajectory's total contribution doubles as its REINFORCE return.
    """
    prediction = batch.logp_z.mean(axis=1)
    entropy = -(batch.logp_s_matrix.log_mean_exp(axis=2)).mean(axis=1)
    compression = batch.encodings.kl_to_std_normal() * (-cfg.beta)
    aux_term = batch.logp_aux if cfg.aux_log_density else batch.logp_aux.exp()
    auxiliary = aux_term * cfg.lam
    per_traj = prediction + entropy + compression + auxiliary
    objective = per_traj.mean()
    components = {
        "prediction": float(prediction.data.mean()),
        "entropy": float(entropy.data.mean()),
        "compression": float(compression.data.mean()),
        "auxiliary": float(auxiliary.data.mean()),
        "kl_mean": float(batch.encodings.kl_to_std_normal().data.mean()),
    }
    for name in ("prediction", "entropy", "compression", "auxiliary"):
        if not np.isfinite(components[name]):
            raise NumericError(f"non-finite objective component: {name}")
    return objective, components, per_traj.data.copy()


def sampling_policy_log_prob_sums(model: SkillModel,
                                  trajectories: list[Trajectory]) -> Tensor:
    """Sum over steps of log pi_s(g_t | s_t, u_own) per trajectory, on tape."""
    n = len(trajectories)
    T = trajectories[0].horizon
    s_flat = model.scale_states(
        np.concatenate([t.states[:-1] for t in trajectories], axis=0))
    g_flat = np.concatenate([t.goals for t in trajectories], axis=0)
    u_own = np.repeat(np.stack([t.context for t in trajectories]), T, axis=0)
    x = np.concatenate([s_flat, u_own], axis=1)
    return model.pi_s.dist(x).log_prob(g_flat).reshape(n, T).sum(axis=1)


def vpg_update(model: SkillModel, optimizer: Adam, trajectories: list[Trajectory],
               returns: np.ndarray) -> dict[str, float]:
    """One REINFORCE ascent step on the sampling policy.

    Returns are centered by the batch mean; the surrogate treats them as
    constants (no gradient flows through the objective terms themselves).
    """
    if len(trajectories) < 2:
        warnings.warn("single-trajectory batch: REINFORCE baseline set to 0")
        advantage = returns.astype(float)
    else:
        advantage = returns - returns.mean()
    logp_sums = sampling_policy_log_prob_sums(model, trajectories)
    surrogate = (Tensor(advantage) * logp_sums).mean()
    model.pis_params.zero_grad()
    (-surrogate).backward()
    optimizer.step()
    loss = float(-surrogate.data)
    if not np.isfinite(loss):
        raise NumericError("non-finite sampling-policy surrogate")
    return {"pg_surrogate": loss, "return_mean": float(returns.mean()),
            "return_std": float(returns.std())}


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


class RolloutDriver:
    """Runs goal-producing policies in the env, optionally via the linearizer.

    With a linearizer, goals are issued every ``ell`` raw steps and the
    recorded (macro-step) trajectory keeps only every ell-th state.
    """

    def __init__(self, env: PointEnv, linearizer=None, ell: int = 1,
                 record_raw_steps: bool = False):
        if linearizer is not None and env.spec.horizon % ell:
            raise ConfigError("ell must divide the horizon")
        self.env = env
        self.linearizer = linearizer
        self.ell = ell if linearizer is not None else 1
        self.record_raw_steps = record_raw_steps

    @property
    def n_macro(self) -> int:
        return self.env.spec.horizon // self.ell

    def run(self, policy_fn, conditions: np.ndarray, env_rng, act_rng,
            sample: bool = True) -> list[Trajectory]:
        """policy_fn(scaled_states, conditions) -> BetaProduct over goals.

        ``conditions`` is the per-episode u or z, shape (n, d).
        """
        n = conditions.shape[0]
        s = self.env.reset_batch(env_rng, n)
        macro_states = np.zeros((self.n_macro + 1, n, self.env.spec.state_dim))
        raw_states = np.zeros((self.env.spec.horizon + 1, n, self.env.spec.state_dim))
        goals = None
        logps = np.zeros((self.n_macro, n))
        macro_states[0] = s
        raw_states[0] = s
        for c in range(self.n_macro):
            dist = policy_fn(s, conditions)
            g = dist.sample(act_rng) if sample else dist.mode()
            if goals is None:
                goals = np.zeros((self.n_macro, n, g.shape[1]))
            logps[c] = dist.log_prob(g).data
            if self.linearizer is None:
                s = self.env.step(s, g)
                raw_states[c + 1] = s
            else:
                for k in range(self.ell):
                    a = self.linearizer.act(s, g, mode=True)
                    s = self.env.step(s, a)
                    raw_states[c * self.ell + k + 1] = s
            macro_states[c + 1] = s
            goals[c] = g
        out = []
        for i in range(n):
            states = raw_states[:, i] if self.record_raw_steps else macro_states[:, i]
            step_goals = (np.repeat(goals[:, i], self.ell, axis=0)
                          if self.record_raw_steps else goals[:, i])
            out.append(Trajectory(states, step_goals, log_probs=logps[:, i].copy()))
        return out


def collect_sampling_rollouts(model: SkillModel, driver: RolloutDriver, n: int,
                              bank_streams: dict[str, np.random.Generator]
                              ) -> list[Trajectory]:
    u = bank_streams["context-prior"].normal(size=(n, model.cfg.d))

    def policy(s, cond):
        x = np.concatenate([model.scale_states(s), cond], axis=1)
        return model.pi_s.dist(x)

    trajs = driver.run(policy, u, bank_streams["env"], bank_streams["rollout-noise"])
    for t, ui in zip(trajs, u):
        t.context = ui
    return trajs


def rollout_skills(model: SkillModel, driver: RolloutDriver, latents: np.ndarray,
                   seed: int, sample: bool = False) -> list[Trajectory]:
    """Skill-policy rollouts, one per latent row; mode goals by default."""
    bank = SeedBank(seed)
    z = np.atleast_2d(np.asarray(latents, dtype=float))

    def policy(s, cond):
        x = np.concatenate([model.scale_states(s), cond], axis=1)
        return model.pi_z.dist(x)

    trajs = driver.run(policy, z, bank.stream("env"), bank.stream("rollout-noise"),
                       sample=sample)
    for t, zi in zip(trajs, z):
        t.latent = zi
    return trajs


def rollout_skill(model: SkillModel, driver: RolloutDriver, z: np.ndarray,
                  seed: int, sample: bool = False) -> Trajectory:
    return rollout_skills(model, driver, np.atleast_2d(z), seed, sample=sample)[0]


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


class IbolTrainer:
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
        self.opt_enc = Adam(self.model.enc_params, cfg.lr)
        self.opt_piz = Adam(self.model.piz_params, cfg.lr)
        self.opt_pis = Adam(self.model.pis_params, cfg.lr)
        self.streams = {name: self.bank.stream(name)
                        for name in ("env", "rollout-noise", "context-prior",
                                     "marginal-prior", "z-noise")}

    def train_epoch(self, epoch: int) -> dict[str, float]:
        cfg = self.cfg
        trajs = collect_sampling_rollouts(self.model, self.driver,
                                          cfg.trajectories_per_epoch, self.streams)
        u_L = self.streams["marginal-prior"].normal(size=(cfg.L, cfg.d))
        report: dict[str, float] = {"epoch": epoch}
        for _ in range(cfg.grad_steps):
            if cfg.resample_marginal_per_step:
                u_L = self.streams["marginal-prior"].normal(size=(cfg.L, cfg.d))
            z_noise = self.streams["z-noise"].normal(
                size=(cfg.trajectories_per_epoch, cfg.d))
            batch = build_batch(self.model, trajs, u_L, z_noise)
            objective, components, returns = compute_objective(batch, cfg)
            self.model.enc_params.zero_grad()
            self.model.piz_params.zero_grad()
            self.model.pis_params.zero_grad()
            (-objective).backward()
            self.opt_enc.step()
            self.opt_piz.step()
            pg = vpg_update(self.model, self.opt_pis, trajs, returns)
            report.update(components)
            report.update(pg)
            report["objective"] = float(objective.data)
        return report

    def train(self) -> list[dict[str, float]]:
        return [self.train_epoch(e) for e in range(self.cfg.epochs)]

    def mean_posterior_kl(self, n_rollouts: int = 512, seed: int = 1234) -> float:
        """Mean encoder KL to the latent prior over fresh sampling rollouts."""
        bank = SeedBank(seed)
        streams = {"context-prior": bank.stream("context-prior"),
                   "env": bank.stream("env"),
                   "rollout-noise": bank.stream("rollout-noise")}
        trajs = collect_sampling_rollouts(self.model, self.driver, n_rollouts, streams)
        enc = self.model.encode_trajectories(trajs)
        return float(enc.kl_to_std_normal().data.mean())


def goal_box_for(env: PointEnv, with_linearizer: bool) -> tuple[np.ndarray, np.ndarray]:
    """Goal box: the linearizer's [-1, 1]^dim, else the raw action box."""
    if with_linearizer:
        box = np.ones(env.spec.state_dim)
    else:
        box = np.full(env.spec.action_dim, env.spec.action_high)
    return -box, box


def latents_grid(d: int, n_latents: int = 8, per_latent: int = 6,
                 radius: float = 1.5) -> np.ndarray:
    """Fixed fan of latents (circle for d=2, linspace for d=1), repeated."""
    if d == 2:
        angles = 2.0 * np.pi * np.arange(n_latents) / n_latents
        base = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        base = np.linspace(-2.0, 2.0, n_latents)[:, None]
        base = np.concatenate([base] + [np.zeros((n_latents, 1))] * (d - 1), axis=1)
    return np.repeat(base, per_latent, axis=0)


def save_skill_checkpoint(path, model: SkillModel, env_name: str, horizon: int,
                          linearizer_arrays: dict | None = None,
                          linearizer_extra: dict | None = None,
                          algo: str = "ibol",
                          extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    params = model.merged_params()
    if extra_arrays:
        for name, arr in extra_arrays.items():
            params.add(name, arr)
    if linearizer_arrays:
        for name, arr in linearizer_arrays.items():
            params.add(f"linearizer.{name}", arr)
    cfg = model.cfg
    save_checkpoint(path, "skills", params, extra={
        "algo": algo,
        "env": env_name,
        "horizon": horizon,
        "d": cfg.d,
        "hidden": cfg.hidden,
        "state_scale": cfg.state_scale,
        "observation_mask": list(model.mask),
        "goal_lo": list(model.goal_lo),
        "goal_hi": list(model.goal_hi),
        "linearizer": linearizer_extra or {},
    })


def load_skill_model(path) -> tuple[SkillModel, RolloutDriver, dict]:
    """Rebuild the model (and linearizer driver, if embedded) from a checkpoint."""
    module, arrays, extra = load_checkpoint(path)
    if module != "skills":
        raise ValueError(f"expected a skills checkpoint, found {module}")
    cfg = SkillConfig(algo=extra["algo"], d=int(extra["d"]),
                      hidden=int(extra["hidden"]),
                      state_scale=float(extra["state_scale"]),
                      observation_mask=tuple(extra["observation_mask"]))
    env = make_env(extra["env"], int(extra["horizon"]))
    rng = np.random.default_rng(0)
    model = SkillModel(env.spec.state_dim, np.array(extra["goal_lo"]),
                       np.array(extra["goal_hi"]), cfg, rng)
    model.enc_params.load_data({k.removeprefix("enc."): v for k, v in arrays.items()
                                if k.startswith("enc.")})
    model.pis_params.load_data({k.removeprefix("pis."): v for k, v in arrays.items()
                                if k.startswith("pis.")})
    model.piz_params.load_data({k.removeprefix("piz."): v for k, v in arrays.items()
                                if k.startswith("piz.")})
    linearizer = None
    ell = 1
    lin_arrays = {k.removeprefix("linearizer."): v for k, v in arrays.items()
                  if k.startswith("linearizer.")}
    if lin_arrays:
        from .linearizer import LinearizerPolicy
        from .nets import TanhGaussianPolicy
        lin_extra = extra["linearizer"]
        pv = ParamVector()
        for name, arr in lin_arrays.items():
            pv.add(name.removeprefix("policy."), arr)
        box = np.full(env.spec.action_dim, env.spec.action_high)
        actor = TanhGaussianPolicy.bind(pv, "actor", -box, box)
        linearizer = LinearizerPolicy(actor, bool(lin_extra["omit_locomotion"]))
        ell = int(lin_extra["ell"])
    driver = RolloutDriver(env, linearizer, ell)
    return model, driver, extra
