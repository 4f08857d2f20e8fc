"""Fully enumerable discrete toys for verifying the objective's bound chain.

Everything here is exact: trajectories are enumerated, expectations are
sums, and the variational quantities (skill policy, latent prior) have
closed-form optima.  Used by tests and by the acceptance suite; nothing in
the training path depends on this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass
class TabularToy:
    """Discrete sampling-policy MDP with a tabular trajectory encoder.

    ``trans[s, g, s']`` is the transition kernel, ``pi_s[s, g]`` the
    sampling policy, and ``encoder[sigma, z]`` the latent posterior for each
    state-sequence index sigma (mixed-radix code of (s_0..s_T)).
    """

    p0: np.ndarray           # (S,)
    trans: np.ndarray        # (S, G, S)
    pi_s: np.ndarray         # (S, G)
    encoder: np.ndarray      # (S**(T+1), Z)
    horizon: int

    @property
    def n_states(self) -> int:
        return self.p0.size

    @property
    def n_goals(self) -> int:
        return self.pi_s.shape[1]

    @property
    def n_latents(self) -> int:
        return self.encoder.shape[1]

    def seq_index(self, states: tuple[int, ...]) -> int:
        idx = 0
        for s in states:
            idx = idx * self.n_states + s
        return idx


def random_toy(rng: np.random.Generator, n_states: int = 3, n_goals: int = 3,
               n_latents: int = 3, horizon: int = 2) -> TabularToy:
    def rows(shape):
        return rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])

    return TabularToy(
        p0=rng.dirichlet(np.ones(n_states)),
        trans=rows((n_states, n_goals, n_states)),
        pi_s=rows((n_states, n_goals)),
        encoder=rows((n_states ** (horizon + 1), n_latents)),
        horizon=horizon,
    )


def enumerate_trajectories(toy: TabularToy) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
    """All (states, goals, probability) triples with nonzero support."""
    out = []
    T = toy.horizon
    for states in product(range(toy.n_states), repeat=T + 1):
        for goals in product(range(toy.n_goals), repeat=T):
            p = toy.p0[states[0]]
            for t in range(T):
                p *= toy.pi_s[states[t], goals[t]] * toy.trans[states[t], goals[t], states[t + 1]]
            if p > 0.0:
                out.append((states, goals, float(p)))
    return out


def _stepwise_joints(toy: TabularToy) -> list[np.ndarray]:
    """Per-step joint p_t(s, g, z) under the sampling policy and encoder."""
    trajs = enumerate_trajectories(toy)
    T = toy.horizon
    joints = [np.zeros((toy.n_states, toy.n_goals, toy.n_latents)) for _ in range(T)]
    for states, goals, p in trajs:
        enc = toy.encoder[toy.seq_index(states)]
        for t in range(T):
            joints[t][states[t], goals[t]] += p * enc
    return joints


def state_sequence_distribution(toy: TabularToy) -> np.ndarray:
    p_sigma = np.zeros(toy.n_states ** (toy.horizon + 1))
    for states, _, p in enumerate_trajectories(toy):
        p_sigma[toy.seq_index(states)] += p
    return p_sigma


def latent_marginal(toy: TabularToy) -> np.ndarray:
    return state_sequence_distribution(toy) @ toy.encoder


def exact_ib_objective(toy: TabularToy, beta: float) -> float:
    """E_t[I(Z; G_t | S_t)] - beta * I(Z; S_{0:T}), all terms exact."""
    joints = _stepwise_joints(toy)
    pred = 0.0
    for joint in joints:
        p_s = joint.sum(axis=(1, 2))
        p_sg = joint.sum(axis=2)
        p_sz = joint.sum(axis=1)
        term = 0.0
        ratio_num = joint * p_s[:, None, None]
        ratio_den = p_sg[:, :, None] * p_sz[:, None, :]
        mask = joint > 0
        term = float(np.sum(joint[mask] * (np.log(ratio_num[mask]) - np.log(ratio_den[mask]))))
        pred += term
    pred /= len(joints)

    p_sigma = state_sequence_distribution(toy)
    q_z = p_sigma @ toy.encoder
    compression = 0.0
    for sigma, p in enumerate(p_sigma):
        if p <= 0.0:
            continue
        q = toy.encoder[sigma]
        mask = q > 0
        compression += p * float(np.sum(q[mask] * (np.log(q[mask]) - np.log(q_z[mask]))))
    return pred - beta * compression


def exact_lower_bound(toy: TabularToy, beta: float, pi_z: np.ndarray,
                      r_z: np.ndarray) -> float:
    """Variational bound value for a (t, s, z, g)-tabular skill policy."""
    T = toy.horizon
    total = 0.0
    for states, goals, p in enumerate_trajectories(toy):
        enc = toy.encoder[toy.seq_index(states)]
        mask = enc > 0
        inner = np.zeros(toy.n_latents)
        for t in range(T):
            inner[mask] += np.log(pi_z[t, states[t], mask, goals[t]]) \
                - np.log(toy.pi_s[states[t], goals[t]])
        total += p * float(enc[mask] @ inner[mask]) / T

    p_sigma = state_sequence_distribution(toy)
    kl = 0.0
    for sigma, p in enumerate(p_sigma):
        if p <= 0.0:
            continue
        q = toy.encoder[sigma]
        mask = q > 0
        kl += p * float(np.sum(q[mask] * (np.log(q[mask]) - np.log(r_z[mask]))))
    return total - beta * kl


def optimal_variational(toy: TabularToy) -> tuple[np.ndarray, np.ndarray]:
    """True per-step posterior policy p_t(g | s, z) and aggregated latent marginal."""
    joints = _stepwise_joints(toy)
    T = toy.horizon
    pi_z = np.full((T, toy.n_states, toy.n_latents, toy.n_goals),
                   1.0 / toy.n_goals)
    for t, joint in enumerate(joints):
        denom = joint.sum(axis=1)  # (S, Z)
        for s in range(toy.n_states):
            for z in range(toy.n_latents):
                if denom[s, z] > 0:
                    pi_z[t, s, z, :] = joint[s, :, z] / denom[s, z]
    return pi_z, latent_marginal(toy)


# ---------------------------------------------------------------------------
# Exact policy gradient for verifying the REINFORCE estimator
# ---------------------------------------------------------------------------


def softmax_policy(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def exact_policy_gradient(toy: TabularToy, logits: np.ndarray,
                          reward_fn) -> np.ndarray:
    """d/d(logits) of E_tau[R(tau)] for a softmax sampling policy, exact."""
    toy = TabularToy(toy.p0, toy.trans, softmax_policy(logits), toy.encoder,
                     toy.horizon)
    pi = toy.pi_s
    grad = np.zeros_like(logits)
    for states, goals, p in enumerate_trajectories(toy):
        r = reward_fn(states, goals)
        for t in range(toy.horizon):
            row = np.zeros(toy.n_goals)
            row[goals[t]] = 1.0
            grad[states[t]] += p * r * (row - pi[states[t]])
    return grad


def sample_trajectory(toy: TabularToy, rng: np.random.Generator
                      ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    s = int(rng.choice(toy.n_states, p=toy.p0))
    states = [s]
    goals = []
    for _ in range(toy.horizon):
        g = int(rng.choice(toy.n_goals, p=toy.pi_s[s]))
        goals.append(g)
        s = int(rng.choice(toy.n_states, p=toy.trans[s, g]))
        states.append(s)
    return tuple(states), tuple(goals)
