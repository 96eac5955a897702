"""Distances between dense distributions and empirical laws of samples.

Total variation is the halved L1 distance, so it lies in ``[0, 1]``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import SpecMismatchError
from .state_space import DenseDistribution, SpaceSpec


def _pair(p: DenseDistribution, q: DenseDistribution):
    if p.spec != q.spec:
        raise SpecMismatchError(f"space mismatch: {p.spec} vs {q.spec}")
    return p.probs, q.probs


def tv_distance(p: DenseDistribution, q: DenseDistribution) -> float:
    a, b = _pair(p, q)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def kl_divergence(p: DenseDistribution, q: DenseDistribution) -> float:
    """``sum p log(p/q)`` with ``0 log 0 = 0``; raises if ``p`` is not dominated by ``q``."""
    a, b = _pair(p, q)
    on = a > 0
    if (b[on] <= 0).any():
        raise ValueError("KL undefined: p puts mass where q has none")
    return float(max(0.0, np.sum(a[on] * (np.log(a[on]) - np.log(b[on])))))


def empirical_distribution(samples, spec: SpaceSpec) -> DenseDistribution:
    """Frequency vector of a non-empty collection of sequences."""
    Y = np.asarray(samples)
    if Y.ndim == 1 and spec.d > 1:
        raise SpecMismatchError(f"expected sequences of length {spec.d}")
    Y = spec.validate_many(Y.reshape(len(Y), -1))
    if len(Y) == 0:
        raise ValueError("no samples")
    spec.check_dense()
    counts = np.bincount(spec.encode_many(Y), minlength=spec.n_states)
    return DenseDistribution(spec, counts / counts.sum())


def tv_noise_sigma(p: DenseDistribution, n: int) -> float:
    """Bound on the root-mean-square of ``tv(empirical_n, p)`` for ``n`` exact draws from ``p``.

    ``E|p_hat_y - p_y|**2 = p_y (1 - p_y) / n`` and Minkowski bounds the sum,
    so this covers both the bias and the spread of the empirical distance.
    """
    pr = p.probs
    return float(0.5 * np.sqrt(pr * (1.0 - pr) / n).sum())
