"""Probability heads used by every policy and encoder.

All log-densities are built on the autodiff tape so they can serve as
training objectives; sampling helpers return plain arrays and take an
explicit RNG or noise argument so that runs are reproducible.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, concat

LOG_2PI = float(np.log(2.0 * np.pi))

# Variance floor/ceiling for every Gaussian head; keeps heads from collapsing.
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


class DiagGaussian:
    """Factorized Gaussian with mean and log-std, one row per sample."""

    def __init__(self, mean: Tensor, log_std: Tensor):
        self.mean = as_tensor(mean)
        self.log_std = as_tensor(log_std)
        if not np.all(np.isfinite(self.mean.data)):
            raise FloatingPointError("non-finite Gaussian mean")
        if not np.all(np.isfinite(self.log_std.data)):
            raise FloatingPointError("non-finite Gaussian log_std")

    def log_prob(self, x) -> Tensor:
        """Sum over the last axis of the per-dimension log-densities."""
        x = as_tensor(x)
        if x.shape[-1] != self.mean.shape[-1]:
            raise ValueError(f"dimension mismatch: x has {x.shape[-1]}, "
                             f"distribution has {self.mean.shape[-1]}")
        z = (x - self.mean) * (-self.log_std).exp()
        per_dim = (z.square() + LOG_2PI) * -0.5 - self.log_std
        return per_dim.sum(axis=-1)

    def kl_to_std_normal(self) -> Tensor:
        """Closed-form KL(self || N(0, I)), summed over dimensions."""
        var = (self.log_std * 2.0).exp()
        per_dim = (self.mean.square() + var - 1.0) * 0.5 - self.log_std
        return per_dim.sum(axis=-1)

    def sample(self, noise) -> Tensor:
        """Reparameterized draw mean + std * noise (noise supplied externally).

        Noise may carry extra leading axes (batched draws from one
        distribution) but its trailing dimension must match.
        """
        noise = as_tensor(noise)
        ok = noise.shape[-1:] == self.mean.shape[-1:]
        if ok:
            try:
                np.broadcast_shapes(noise.shape, self.mean.shape)
            except ValueError:
                ok = False
        if not ok:
            raise ValueError(f"noise shape {noise.shape} does not match "
                             f"mean shape {self.mean.shape}")
        return self.mean + self.log_std.exp() * noise

    def mode(self) -> np.ndarray:
        return self.mean.data.copy()

    def entropy(self) -> Tensor:
        per_dim = self.log_std + 0.5 * (LOG_2PI + 1.0)
        return per_dim.sum(axis=-1)


def diag_gaussian_log_prob(x, dist: DiagGaussian) -> Tensor:
    return dist.log_prob(x)


def kl_diag_gaussian_to_std(dist: DiagGaussian) -> Tensor:
    return dist.kl_to_std_normal()


class BetaProduct:
    """Product of Beta distributions mapped affinely onto a box.

    ``alpha``/``beta`` are the Beta shape parameters per dimension; samples
    live strictly inside [lo, hi].
    """

    # Keeps log-densities finite when a sample rounds onto a box face.
    _EDGE = 1e-9

    def __init__(self, alpha: Tensor, beta: Tensor, lo: np.ndarray, hi: np.ndarray):
        self.alpha = as_tensor(alpha)
        self.beta = as_tensor(beta)
        if np.any(self.alpha.data <= 0.0) or np.any(self.beta.data <= 0.0):
            raise ValueError("Beta shape parameters must be strictly positive")
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.width = self.hi - self.lo

    def _to_unit(self, x) -> np.ndarray:
        y = (np.asarray(x, dtype=np.float64) - self.lo) / self.width
        return np.clip(y, self._EDGE, 1.0 - self._EDGE)

    def log_prob(self, x) -> Tensor:
        y = Tensor(self._to_unit(x))
        a, b = self.alpha, self.beta
        log_beta_fn = a.gammaln() + b.gammaln() - (a + b).gammaln()
        per_dim = (a - 1.0) * y.log() + (b - 1.0) * (1.0 - y).log() \
            - log_beta_fn - Tensor(np.log(self.width))
        return per_dim.sum(axis=-1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        y = rng.beta(self.alpha.data, self.beta.data)
        y = np.clip(y, self._EDGE, 1.0 - self._EDGE)
        return self.lo + self.width * y

    def mode(self) -> np.ndarray:
        a = self.alpha.data
        b = self.beta.data
        denom = a + b - 2.0
        with np.errstate(invalid="ignore", divide="ignore"):
            y = np.where(denom > 1e-12, (a - 1.0) / np.where(denom == 0, 1.0, denom), 0.5)
        y = np.clip(y, 0.0, 1.0)
        return self.lo + self.width * y


class TanhGaussian:
    """Gaussian squashed by tanh and mapped onto an action box."""

    _EDGE = 1e-9

    def __init__(self, base: DiagGaussian, lo: np.ndarray, hi: np.ndarray):
        self.base = base
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.scale = (self.hi - self.lo) / 2.0
        self.center = (self.hi + self.lo) / 2.0

    def sample_with_log_prob(self, noise) -> tuple[Tensor, Tensor]:
        """Reparameterized sample plus its log-density (change of variables)."""
        pre = self.base.sample(noise)
        y = pre.tanh()
        action = y * self.scale + self.center
        log_det = ((1.0 - y.square()) * self.scale + 1e-12).log().sum(axis=-1)
        log_prob = self.base.log_prob(pre) - log_det
        return action, log_prob

    def log_prob(self, action) -> Tensor:
        """Log-density of an external action; uses atanh, so keep actions
        strictly inside the box."""
        a = np.asarray(action, dtype=np.float64)
        y = np.clip((a - self.center) / self.scale, -1.0 + self._EDGE, 1.0 - self._EDGE)
        pre = Tensor(y).atanh()
        log_det = Tensor(np.sum(np.log((1.0 - y * y) * self.scale + 1e-12), axis=-1))
        return self.base.log_prob(pre) - log_det

    def mode(self) -> np.ndarray:
        return np.tanh(self.base.mean.data) * self.scale + self.center


def gaussian_head(raw: Tensor, dim: int) -> DiagGaussian:
    """Split a (…, 2*dim) head output into a clamped DiagGaussian."""
    mean = raw.narrow(-1, 0, dim)
    log_std = raw.narrow(-1, dim, dim).clip(LOG_STD_MIN, LOG_STD_MAX)
    return DiagGaussian(mean, log_std)


def beta_head(raw: Tensor, dim: int, lo: np.ndarray, hi: np.ndarray) -> BetaProduct:
    """Split a (…, 2*dim) head output into a unimodal BetaProduct.

    Shapes are 1 + softplus(raw), so alpha, beta > 1 and the mode is unique.
    """
    alpha = raw.narrow(-1, 0, dim).softplus() + 1.0
    beta = raw.narrow(-1, dim, dim).softplus() + 1.0
    return BetaProduct(alpha, beta, lo, hi)
