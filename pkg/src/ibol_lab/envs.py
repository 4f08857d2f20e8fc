"""Synthetic 2-D environments and downstream goal tasks.

The point environment moves by the clamped action vector; the distorted
variant attenuates vertical motion sub-linearly, so sustained near-maximal
actions are required to move up or down.  Episodes always run the full
horizon; there is no early termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTION_LIMIT = 0.1
INIT_HALF_WIDTH = 0.05
DEFAULT_HORIZON = 50

# Vertical attenuation strength of the distorted environment.
DISTORTION_KAPPA = 0.3


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: float
    action_high: float
    horizon: int
    deterministic: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not np.isfinite(self.action_low) or not np.isfinite(self.action_high):
            raise ValueError("action box must be finite")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    t: int


class PointEnv:
    """Agent state is its (x, y) position; dynamics are additive."""

    def __init__(self, horizon: int = DEFAULT_HORIZON):
        self.spec = EnvSpec("point", 2, 2, -ACTION_LIMIT, ACTION_LIMIT, horizon)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, size=2)

    def reset_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, size=(n, 2))

    def step(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise FloatingPointError("non-finite state or action")
        return s + self._displacement(np.clip(a, -ACTION_LIMIT, ACTION_LIMIT))

    def _displacement(self, a: np.ndarray) -> np.ndarray:
        return a


class DistortedPointEnv(PointEnv):
    """PointEnv with attenuated, sub-linear vertical displacement.

    Vertical displacement is kappa * a_y * |a_y| / ACTION_LIMIT, so the
    per-step vertical reach tops out at kappa * ACTION_LIMIT = 0.03 while
    horizontal reach stays at 0.1.
    """

    def __init__(self, horizon: int = DEFAULT_HORIZON, kappa: float = DISTORTION_KAPPA):
        super().__init__(horizon)
        self.spec = EnvSpec("distorted-point", 2, 2, -ACTION_LIMIT, ACTION_LIMIT, horizon)
        self.kappa = kappa

    def _displacement(self, a: np.ndarray) -> np.ndarray:
        out = np.array(a, dtype=np.float64, copy=True)
        ay = a[..., 1]
        out[..., 1] = self.kappa * ay * np.abs(ay) / ACTION_LIMIT
        return out


def make_env(name: str, horizon: int = DEFAULT_HORIZON) -> PointEnv:
    if name == "point":
        return PointEnv(horizon)
    if name == "distorted-point":
        return DistortedPointEnv(horizon)
    raise ValueError(f"unknown environment: {name}")


# ---------------------------------------------------------------------------
# Downstream goal tasks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalTaskSpec:
    """Reach-the-goal task over a point environment.

    ``terminal-distance`` rewards the negative Euclidean distance to the
    goal only at the last step; ``chunk-distance`` rewards it at the end of
    every eta-sized chunk, with the goal resampled near the current
    position at each chunk start.
    """

    name: str
    goal_low: np.ndarray
    goal_high: np.ndarray
    horizon: int
    reward_mode: str = "terminal-distance"
    resample_period: int | None = None
    chunk_half_width: float = 1.5

    def __post_init__(self):
        if self.reward_mode not in ("terminal-distance", "chunk-distance"):
            raise ValueError(f"unknown reward mode: {self.reward_mode}")
        if self.resample_period is not None and self.horizon % self.resample_period:
            raise ValueError("resample period must divide the horizon")

    def sample_goal(self, rng: np.random.Generator,
                    around: np.ndarray | None = None) -> np.ndarray:
        if around is None:
            return rng.uniform(self.goal_low, self.goal_high)
        return rng.uniform(around - self.chunk_half_width,
                           around + self.chunk_half_width)


def make_goal_task(name: str, horizon: int = DEFAULT_HORIZON,
                   goal_half_width: float = 4.0, eta: int = 25) -> GoalTaskSpec:
    box = np.full(2, goal_half_width)
    if name == "pointgoal":
        return GoalTaskSpec("pointgoal", -box, box, horizon, "terminal-distance")
    if name == "pointmultigoals":
        return GoalTaskSpec("pointmultigoals", -box, box, horizon,
                            "chunk-distance", resample_period=eta)
    raise ValueError(f"unknown task: {name}")


def goal_task_reward(task: GoalTaskSpec, w: np.ndarray, s_t: np.ndarray, t: int) -> float:
    """Reward carried by state s_t, where t indexes states 0..horizon.

    Terminal mode pays -||w - s_t|| only at t == horizon; chunk mode pays it
    whenever an eta-sized chunk has just ended (t > 0 and t % eta == 0).
    """
    if not 0 <= t <= task.horizon:
        raise ValueError(f"state index {t} out of range 0..{task.horizon}")
    if task.reward_mode == "terminal-distance":
        if t == task.horizon:
            return -float(np.linalg.norm(np.asarray(w) - np.asarray(s_t)))
        return 0.0
    eta = task.resample_period or task.horizon
    if t > 0 and t % eta == 0:
        return -float(np.linalg.norm(np.asarray(w) - np.asarray(s_t)))
    return 0.0
