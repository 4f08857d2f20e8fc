"""Binned plugin estimators for mutual information and disentanglement.

Variables are quantized into uniform-width bins over a pooled range that
must cover every run being compared (two-pass: range scan, then coding).
Multi-dimensional variables are collapsed to tuple codes before building
the joint histogram.  Entropies are computed over sorted count arrays so
that estimates are bit-exact under sample and argument permutations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class BinnedSample:
    raw: np.ndarray                      # (n_samples, n_vars)
    bin_edges: list[np.ndarray]          # per variable, strictly increasing
    codes: np.ndarray                    # (n_samples, n_vars) integer codes


@dataclass
class MetricReport:
    mi_z_sT: float
    sepin: list[float]                   # sepin[k-1] = SEPIN@k
    wsepin: float
    cond_mi: list[float]                 # per-latent-dimension conditional MI
    marginal_mi: list[float]             # per-latent-dimension I(S_T; Z_i)
    n_bins: int
    n_samples: int
    seed: int | None = None
    extras: dict = field(default_factory=dict)


def _as_columns(x, dtype=None) -> np.ndarray:
    """(n,) -> (n, 1); higher-rank input passes through as (n, n_vars)."""
    arr = np.asarray(x, dtype=dtype)
    return arr[:, None] if arr.ndim == 1 else arr


def pooled_range(samples: list[np.ndarray]) -> np.ndarray:
    """Per-variable (lo, hi) over all runs being compared; shape (n_vars, 2)."""
    stacked = np.concatenate([_as_columns(s, float) for s in samples], axis=0)
    return np.stack([stacked.min(axis=0), stacked.max(axis=0)], axis=1)


def quantize(samples: np.ndarray, n_bins: int, value_range: np.ndarray) -> BinnedSample:
    """Uniform-width codes per variable over ``value_range`` (n_vars, 2)."""
    raw = _as_columns(samples, float)
    value_range = np.asarray(value_range, dtype=float)
    if value_range.shape != (raw.shape[1], 2):
        raise ValueError("value_range must be (n_vars, 2)")
    codes = np.zeros(raw.shape, dtype=np.int64)
    edges: list[np.ndarray] = []
    for j in range(raw.shape[1]):
        lo, hi = value_range[j]
        col = raw[:, j]
        if col.min() < lo or col.max() > hi:
            raise ValueError(f"samples outside pooled range for variable {j}")
        if hi <= lo:
            warnings.warn(f"variable {j} has zero-width range; using a single bin")
            edges.append(np.array([lo, lo]))
            continue
        e = np.linspace(lo, hi, n_bins + 1)
        codes[:, j] = np.minimum((((col - lo) / (hi - lo)) * n_bins).astype(np.int64),
                                 n_bins - 1)
        edges.append(e)
    return BinnedSample(raw=raw, bin_edges=edges, codes=codes)


def _tuple_codes(codes: np.ndarray) -> np.ndarray:
    """Collapse (n, k) integer codes into a single label per row."""
    codes = _as_columns(codes)
    if codes.shape[1] == 1:
        return codes[:, 0].copy()
    _, inverse = np.unique(codes, axis=0, return_inverse=True)
    return inverse.reshape(-1)


def _entropy_from_counts(counts: np.ndarray) -> float:
    """Plugin entropy in nats; summation over sorted counts for bit-exactness."""
    counts = np.sort(np.asarray(counts, dtype=np.float64))
    n = counts.sum()
    p = counts / n
    return float(-np.sum(p * np.log(p)))


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    return _entropy_from_counts(counts)


def _joint_entropy(x: np.ndarray, y: np.ndarray) -> float:
    _, counts = np.unique(np.stack([x, y], axis=1), axis=0, return_counts=True)
    return _entropy_from_counts(counts)


def mutual_information(x_codes: np.ndarray, y_codes: np.ndarray) -> float:
    """Plugin MI (nats) over the joint histogram of two coded variables."""
    x = _tuple_codes(x_codes)
    y = _tuple_codes(y_codes)
    if x.size == 0 or y.size == 0:
        raise ValueError("empty input")
    if x.size != y.size:
        raise ValueError("sample counts differ")
    mi = _entropy(x) + _entropy(y) - _joint_entropy(x, y)
    return max(mi, 0.0)


def conditional_mi(s_codes: np.ndarray, zi_codes: np.ndarray,
                   zrest_codes: np.ndarray) -> float:
    """I(S; Z_i | Z_rest) via per-cell plugin MI weighted by cell mass.

    Conditioning cells with fewer than two samples contribute zero (single
    samples have no defined within-cell dependence).
    """
    s = _tuple_codes(s_codes)
    zi = _tuple_codes(zi_codes)
    zrest = _tuple_codes(zrest_codes)
    if s.size == 0:
        raise ValueError("empty input")
    n = s.size
    total = 0.0
    cells, inverse = np.unique(zrest, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(cells.size + 1))
    for c in range(cells.size):
        idx = order[bounds[c]:bounds[c + 1]]
        if idx.size < 2:
            continue
        total += (idx.size / n) * mutual_information(s[idx], zi[idx])
    return total


def sepin_at_k(cond_mis: list[float], k: int) -> float:
    """Mean of the k largest per-dimension conditional MIs."""
    if not 1 <= k <= len(cond_mis):
        raise ValueError(f"k={k} out of range 1..{len(cond_mis)}")
    top = sorted(cond_mis, reverse=True)[:k]
    return float(sum(top) / k)


def wsepin(cond_mis: list[float], marginal_mis: list[float]) -> float:
    """Conditional MIs weighted by each dimension's share of marginal MI."""
    total = float(sum(marginal_mis))
    if total <= 0.0:
        warnings.warn("all marginal MIs are zero; WSEPIN degenerates to 0")
        return 0.0
    return float(sum(m / total * c for m, c in zip(marginal_mis, cond_mis)))


def total_correlation(z_codes: np.ndarray) -> float:
    """Plugin KL between the joint latent histogram and its marginals' product."""
    codes = _as_columns(z_codes)
    d = codes.shape[1]
    if d < 2:
        return 0.0
    marginal_sum = sum(_entropy(codes[:, j]) for j in range(d))
    joint = _entropy(_tuple_codes(codes))
    return max(marginal_sum - joint, 0.0)


def compute_metric_report(z_samples: np.ndarray, sT_samples: np.ndarray,
                          n_bins: int, z_range: np.ndarray, sT_range: np.ndarray,
                          seed: int | None = None) -> MetricReport:
    """All evaluation metrics for one run, binned over pooled ranges."""
    z = quantize(z_samples, n_bins, z_range).codes
    sT = quantize(sT_samples, n_bins, sT_range).codes
    d = z.shape[1]
    mi = mutual_information(z, sT)
    cond = []
    marg = []
    for i in range(d):
        rest = np.delete(z, i, axis=1)
        if rest.shape[1] == 0:
            cond.append(mutual_information(sT, z[:, [i]]))
        else:
            cond.append(conditional_mi(sT, z[:, [i]], rest))
        marg.append(mutual_information(sT, z[:, [i]]))
    return MetricReport(
        mi_z_sT=mi,
        sepin=[sepin_at_k(cond, k) for k in range(1, d + 1)],
        wsepin=wsepin(cond, marg),
        cond_mi=cond,
        marginal_mi=marg,
        n_bins=n_bins,
        n_samples=z.shape[0],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Exact-identity diagnostics on enumerable tabular encoders
# ---------------------------------------------------------------------------


def kl_decomposition_check(p_x: np.ndarray, q_z_given_x: np.ndarray,
                           r_marginals: list[np.ndarray]
                           ) -> tuple[float, tuple[float, float, float], float]:
    """Decompose E_x[KL(q(Z|x) || r(Z))] for a factorized prior, exactly.

    ``q_z_given_x`` has shape (n_x, m_1, ..., m_d); ``r_marginals`` holds one
    distribution per latent dimension.  Returns (lhs, (index_code_mi,
    total_correlation, dimension_wise_kl), residual).
    """
    p_x = np.asarray(p_x, dtype=float)
    q = np.asarray(q_z_given_x, dtype=float)
    d = q.ndim - 1
    if len(r_marginals) != d:
        raise ValueError("one prior marginal per latent dimension required")
    if not np.isclose(p_x.sum(), 1.0, atol=1e-9):
        raise ValueError("p_x is not normalized")
    flat = q.reshape(q.shape[0], -1)
    if not np.allclose(flat.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("encoder rows are not normalized")
    for r in r_marginals:
        if not np.isclose(np.sum(r), 1.0, atol=1e-9):
            raise ValueError("prior marginal is not normalized")

    r_joint = r_marginals[0]
    for r in r_marginals[1:]:
        r_joint = np.multiply.outer(r_joint, r)

    def _kl(a: np.ndarray, b: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask]))))

    aggregated = np.tensordot(p_x, q, axes=(0, 0))
    lhs = float(sum(p * _kl(q[i], r_joint) for i, p in enumerate(p_x)))
    index_code_mi = float(sum(p * _kl(q[i], aggregated) for i, p in enumerate(p_x)))
    marginals = [aggregated.sum(axis=tuple(j for j in range(d) if j != i))
                 for i in range(d)]
    marg_prod = marginals[0]
    for m in marginals[1:]:
        marg_prod = np.multiply.outer(marg_prod, m)
    tc = _kl(aggregated, marg_prod)
    dim_kl = float(sum(_kl(m, r) for m, r in zip(marginals, r_marginals)))
    residual = lhs - (index_code_mi + tc + dim_kl)
    return lhs, (index_code_mi, tc, dim_kl), residual
