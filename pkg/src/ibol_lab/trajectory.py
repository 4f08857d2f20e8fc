"""The trajectory record and its delimited log format.

One CSV row per state (T+1 rows per episode) with the goal issued at that
state; the final row repeats the last goal so every row parses uniformly.
Columns: episode, t, s_0.., g_0.., then u_0.. and/or z_0.. when the rollout
carried a context or a skill latent.  Row order is deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


@dataclass
class Trajectory:
    """States s_0..s_T, goals g_0..g_{T-1}, optional context u and latent z."""

    states: np.ndarray                     # (T+1, state_dim)
    goals: np.ndarray                      # (T, goal_dim)
    context: np.ndarray | None = None      # u, fixed per episode
    latent: np.ndarray | None = None       # z, fixed per episode
    log_probs: np.ndarray | None = None    # (T,) log-prob of each goal when sampled

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.goals = np.asarray(self.goals, dtype=np.float64)
        if self.states.shape[0] != self.goals.shape[0] + 1:
            raise ValueError("need exactly one more state than goals")

    @property
    def horizon(self) -> int:
        return self.goals.shape[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_trajectories_csv(path: str | Path, trajectories: list[Trajectory]) -> None:
    if trajectories:
        first = trajectories[0]
        s_dim = first.states.shape[1]
        g_dim = first.goals.shape[1]
        u_dim = 0 if first.context is None else first.context.size
        z_dim = 0 if first.latent is None else first.latent.size
    else:
        s_dim = g_dim = u_dim = z_dim = 0
    header = ["episode", "t"]
    header += [f"s_{i}" for i in range(s_dim)]
    header += [f"g_{i}" for i in range(g_dim)]
    header += [f"u_{i}" for i in range(u_dim)]
    header += [f"z_{i}" for i in range(z_dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for ep, traj in enumerate(trajectories):
            tail = []
            if traj.context is not None:
                tail += [_fmt(v) for v in np.ravel(traj.context)]
            if traj.latent is not None:
                tail += [_fmt(v) for v in np.ravel(traj.latent)]
            for t in range(traj.states.shape[0]):
                g = traj.goals[min(t, traj.horizon - 1)]
                row = [str(ep), str(t)]
                row += [_fmt(v) for v in traj.states[t]]
                row += [_fmt(v) for v in g]
                row += tail
                writer.writerow(row)


def read_trajectories_csv(path: str | Path) -> list[Trajectory]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty trajectory CSV: {path}")
        cols = {name: i for i, name in enumerate(header)}
        s_idx = [cols[c] for c in header if c.startswith("s_")]
        g_idx = [cols[c] for c in header if c.startswith("g_")]
        u_idx = [cols[c] for c in header if c.startswith("u_")]
        z_idx = [cols[c] for c in header if c.startswith("z_")]
        episodes: dict[int, list[list[str]]] = {}
        order: list[int] = []
        for row in reader:
            ep = int(row[0])
            if ep not in episodes:
                episodes[ep] = []
                order.append(ep)
            episodes[ep].append(row)
    out: list[Trajectory] = []
    for ep in order:
        rows = sorted(episodes[ep], key=lambda r: int(r[1]))
        states = np.array([[float(r[i]) for i in s_idx] for r in rows])
        goals = np.array([[float(r[i]) for i in g_idx] for r in rows[:-1]])
        context = np.array([float(rows[0][i]) for i in u_idx]) if u_idx else None
        latent = np.array([float(rows[0][i]) for i in z_idx]) if z_idx else None
        out.append(Trajectory(states, goals, context=context, latent=latent))
    return out
