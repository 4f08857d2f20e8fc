"""Small dense networks and a bidirectional recurrent sequence encoder.

Hidden widths default to 32 everywhere; parameters use uniform fan-in
initialization so finite-difference checks stay well-conditioned.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamVector, Tensor, as_tensor, concat
from .distributions import BetaProduct, DiagGaussian, TanhGaussian, beta_head, gaussian_head


# Output-layer init shrink for distribution heads; untrained heads are
# near-constant in their inputs, which keeps early REINFORCE high-entropy.
HEAD_INIT_SCALE = 0.01


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, params: ParamVector, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator):
        self.w = params.add(f"{name}.w", _fan_in_uniform(rng, in_dim, (in_dim, out_dim)))
        self.b = params.add(f"{name}.b", _fan_in_uniform(rng, in_dim, (out_dim,)))

    @classmethod
    def bind(cls, params: ParamVector, name: str) -> "Linear":
        """View over already-registered parameters (e.g. a target network)."""
        layer = cls.__new__(cls)
        layer.w = params[f"{name}.w"]
        layer.b = params[f"{name}.b"]
        return layer

    def __call__(self, x: Tensor) -> Tensor:
        return as_tensor(x) @ self.w + self.b


class MLP:
    """Dense stack with a choice of hidden nonlinearity and a linear output.

    ``out_scale`` shrinks the output layer's init; policy and encoder heads
    use a small scale so an untrained model is genuinely uninformed (its
    output distributions barely depend on the inputs).
    """

    def __init__(self, params: ParamVector, name: str, in_dim: int,
                 hidden: tuple[int, ...], out_dim: int,
                 rng: np.random.Generator, activation: str = "tanh",
                 out_scale: float = 1.0):
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation: {activation}")
        self.activation = activation
        self.layers: list[Linear] = []
        prev = in_dim
        for i, width in enumerate(hidden):
            self.layers.append(Linear(params, f"{name}.h{i}", prev, width, rng))
            prev = width
        self.out = Linear(params, f"{name}.out", prev, out_dim, rng)
        if out_scale != 1.0:
            self.out.w.data *= out_scale
            self.out.b.data *= out_scale

    @classmethod
    def bind(cls, params: ParamVector, name: str, n_hidden: int,
             activation: str = "tanh") -> "MLP":
        net = cls.__new__(cls)
        net.activation = activation
        net.layers = [Linear.bind(params, f"{name}.h{i}") for i in range(n_hidden)]
        net.out = Linear.bind(params, f"{name}.out")
        return net

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        for layer in self.layers:
            h = layer(h)
            h = h.tanh() if self.activation == "tanh" else h.relu()
        return self.out(h)


class GruCell:
    """Gated recurrent cell; two fused matmuls per step."""

    def __init__(self, params: ParamVector, name: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.hidden = hidden
        fan = in_dim + hidden
        self.w_gates = params.add(f"{name}.w_gates",
                                  _fan_in_uniform(rng, fan, (fan, 2 * hidden)))
        self.b_gates = params.add(f"{name}.b_gates", np.zeros(2 * hidden))
        self.w_cand = params.add(f"{name}.w_cand",
                                 _fan_in_uniform(rng, fan, (fan, hidden)))
        self.b_cand = params.add(f"{name}.b_cand", np.zeros(hidden))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        xh = concat([x, h], axis=-1)
        gates = (xh @ self.w_gates + self.b_gates).sigmoid()
        update = gates.narrow(-1, 0, self.hidden)
        reset = gates.narrow(-1, self.hidden, self.hidden)
        cand = (concat([x, reset * h], axis=-1) @ self.w_cand + self.b_cand).tanh()
        return (1.0 - update) * h + update * cand


class BiGru:
    """Bidirectional GRU; returns the concatenated final hidden states.

    The summary is a fixed-length vector, deterministic in the inputs,
    order-sensitive by construction (forward and reverse passes end on
    opposite ends of the sequence).
    """

    def __init__(self, params: ParamVector, name: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.fwd = GruCell(params, f"{name}.fwd", in_dim, hidden, rng)
        self.bwd = GruCell(params, f"{name}.bwd", in_dim, hidden, rng)
        self.hidden = hidden

    def __call__(self, steps: list[Tensor]) -> Tensor:
        if len(steps) == 0:
            raise ValueError("empty sequence")
        batch = steps[0].shape[0]
        h_f = Tensor(np.zeros((batch, self.hidden)))
        for x in steps:
            h_f = self.fwd(x, h_f)
        h_b = Tensor(np.zeros((batch, self.hidden)))
        for x in reversed(steps):
            h_b = self.bwd(x, h_b)
        return concat([h_f, h_b], axis=-1)


def sequence_steps(states: np.ndarray) -> list[Tensor]:
    """Split a (T+1, batch, dim) or (T+1, dim) array into per-step tensors."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    return [Tensor(arr[t]) for t in range(arr.shape[0])]


class SequenceEncoder:
    """BiGRU followed by two dense ReLU layers and a Gaussian head."""

    def __init__(self, params: ParamVector, name: str, in_dim: int, hidden: int,
                 out_dim: int, rng: np.random.Generator):
        self.rnn = BiGru(params, f"{name}.rnn", in_dim, hidden, rng)
        self.head = MLP(params, f"{name}.head", 2 * hidden, (hidden, hidden),
                        2 * out_dim, rng, activation="relu", out_scale=HEAD_INIT_SCALE)
        self.out_dim = out_dim

    def encode(self, states: np.ndarray) -> DiagGaussian:
        summary = self.rnn(sequence_steps(states))
        return gaussian_head(self.head(summary), self.out_dim)

    def summary(self, states: np.ndarray) -> np.ndarray:
        return self.rnn(sequence_steps(states)).data


def birnn_encode(states: np.ndarray, encoder: BiGru) -> np.ndarray:
    """Fixed-length summary of one state sequence (T+1, dim), T >= 1."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("expected a (T+1, dim) sequence with T >= 1")
    return encoder(sequence_steps(arr)).data[0]


class BetaPolicy:
    """MLP (tanh hidden layers) with a BetaProduct head over a box."""

    def __init__(self, params: ParamVector, name: str, in_dim: int, hidden: int,
                 lo: np.ndarray, hi: np.ndarray, rng: np.random.Generator):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.dim = self.lo.size
        self.net = MLP(params, name, in_dim, (hidden, hidden), 2 * self.dim, rng,
                       out_scale=HEAD_INIT_SCALE)

    @classmethod
    def bind(cls, params: ParamVector, name: str, lo: np.ndarray,
             hi: np.ndarray) -> "BetaPolicy":
        pol = cls.__new__(cls)
        pol.lo = np.asarray(lo, dtype=np.float64)
        pol.hi = np.asarray(hi, dtype=np.float64)
        pol.dim = pol.lo.size
        pol.net = MLP.bind(params, name, 2)
        return pol

    def dist(self, x) -> BetaProduct:
        return beta_head(self.net(x), self.dim, self.lo, self.hi)


class TanhGaussianPolicy:
    """MLP (tanh hidden layers) with a tanh-squashed Gaussian head over a box."""

    def __init__(self, params: ParamVector, name: str, in_dim: int, hidden: int,
                 lo: np.ndarray, hi: np.ndarray, rng: np.random.Generator):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.dim = self.lo.size
        self.net = MLP(params, name, in_dim, (hidden, hidden), 2 * self.dim, rng,
                       out_scale=HEAD_INIT_SCALE)

    @classmethod
    def bind(cls, params: ParamVector, name: str, lo: np.ndarray,
             hi: np.ndarray) -> "TanhGaussianPolicy":
        pol = cls.__new__(cls)
        pol.lo = np.asarray(lo, dtype=np.float64)
        pol.hi = np.asarray(hi, dtype=np.float64)
        pol.dim = pol.lo.size
        pol.net = MLP.bind(params, name, 2)
        return pol

    def dist(self, x) -> TanhGaussian:
        return TanhGaussian(gaussian_head(self.net(x), self.dim), self.lo, self.hi)
