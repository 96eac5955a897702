"""The absorbing (masking) forward CTMC.

Every non-mask coordinate jumps to the mask token at rate 1, independently
of the others, and the mask token is absorbing. Rates take the destination
first: ``rate_forward(y, yprev)`` is the rate of moving from ``yprev`` to
``y``.
"""

from __future__ import annotations

import math
from functools import reduce

import numpy as np
from scipy import linalg, stats

from .state_space import (
    DenseDistribution,
    SpaceSpec,
    SparseDistribution,
    hamming,
    num_mask,
)

# exp(-elapsed) is treated as exactly zero past this point
_ELAPSED_INF = 700.0
_CHUNK = 1 << 16


def survival(elapsed: float) -> float:
    """Probability ``exp(-elapsed)`` that a non-mask token is still unmasked."""
    if elapsed < 0:
        raise ValueError(f"elapsed time must be >= 0, got {elapsed}")
    return 0.0 if elapsed > _ELAPSED_INF else math.exp(-elapsed)


def rate_forward(spec: SpaceSpec, y, yprev) -> float:
    """Forward transition rate from ``yprev`` to ``y``.

    Off-diagonal entries are 1 for a single-coordinate masking move. The
    diagonal is ``-(d - numK(yprev))`` so that every column sums to zero.
    """
    y = spec.validate(y)
    yprev = spec.validate(yprev)
    dist = hamming(y, yprev)
    if dist == 0:
        return -float(spec.d - num_mask(yprev, spec.K))
    if dist == 1:
        i = next(j for j in range(spec.d) if y[j] != yprev[j])
        return 1.0 if y[i] == spec.K else 0.0
    return 0.0


def coordinate_generator(K: int) -> np.ndarray:
    """Single-coordinate generator ``A``: each of tokens 1..K-1 leaks into K at rate 1."""
    A = np.zeros((K, K))
    A[np.arange(K - 1), np.arange(K - 1)] = -1.0
    A[K - 1, : K - 1] = 1.0
    return A


def kron_generator(spec: SpaceSpec) -> np.ndarray:
    """Dense generator as ``sum_i I x ... x A x ... x I`` (columns are source states)."""
    spec.check_dense()
    A = coordinate_generator(spec.K)
    eye = np.eye(spec.K)
    total = np.zeros((spec.n_states, spec.n_states))
    for i in range(spec.d):
        factors = [A if j == i else eye for j in range(spec.d)]
        total += reduce(np.kron, factors)
    return total


def kron_kernel(spec: SpaceSpec, elapsed: float) -> np.ndarray:
    """Transition matrix ``expm(elapsed * A)`` raised to the ``d``-th Kronecker power."""
    spec.check_dense()
    if elapsed < 0:
        raise ValueError(f"elapsed time must be >= 0, got {elapsed}")
    block = linalg.expm(elapsed * coordinate_generator(spec.K))
    return reduce(np.kron, [block] * spec.d)


def kernel_prob(spec: SpaceSpec, y, y0, elapsed: float) -> float:
    """Closed-form ``P(y_{s+elapsed} = y | y_s = y0)``."""
    e = survival(elapsed)
    y = spec.validate(y)
    y0 = spec.validate(y0)
    K = spec.K
    p = 1.0
    for a, b in zip(y, y0):
        if b == K:
            f = 1.0 if a == K else 0.0
        elif a == b:
            f = e
        elif a == K:
            f = 1.0 - e
        else:
            f = 0.0
        p *= f
        if p == 0.0:
            break
    return p


def _kernel_block(Y: np.ndarray, S: np.ndarray, K: int, e: float) -> np.ndarray:
    """``P(Y[a] | S[b])`` for all row pairs, shape ``(len(Y), len(S))``."""
    out = np.ones((Y.shape[0], S.shape[0]))
    for i in range(Y.shape[1]):
        yi = Y[:, i][:, None]
        si = S[:, i][None, :]
        f = np.where(
            si == K,
            (yi == K).astype(float),
            np.where(yi == si, e, np.where(yi == K, 1.0 - e, 0.0)),
        )
        out *= f
    return out


def kernel_matrix(spec: SpaceSpec, elapsed: float) -> np.ndarray:
    """Dense closed-form kernel; entry ``[y, y0]`` is :func:`kernel_prob`."""
    states = spec.all_states()
    return _kernel_block(states, states, spec.K, survival(elapsed))


def sample_forward(spec: SpaceSpec, y0, elapsed: float, rng: np.random.Generator):
    """Exact draw from the forward kernel started at ``y0``."""
    y0 = np.asarray(spec.validate(y0))[None, :]
    return tuple(int(v) for v in sample_forward_many(spec, y0, elapsed, rng)[0])


def sample_forward_many(
    spec: SpaceSpec, Y0: np.ndarray, elapsed: float, rng: np.random.Generator
) -> np.ndarray:
    """Mask each non-mask coordinate of every row independently w.p. ``1 - exp(-elapsed)``."""
    Y0 = spec.validate_many(Y0)
    e = survival(elapsed)
    masked = rng.random(Y0.shape) >= e
    return np.where(masked, spec.K, Y0)


def marginal_at(q0: SparseDistribution, t: float) -> DenseDistribution:
    """Forward marginal at time ``t`` as a dense vector.

    Sums the closed-form kernel over the support of ``q0`` instead of
    exponentiating the full ``K**d`` generator.
    """
    spec = q0.spec
    spec.check_dense()
    e = survival(t)
    S, w = q0.states, q0.weights
    probs = np.empty(spec.n_states)
    for start in range(0, spec.n_states, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, spec.n_states), dtype=np.int64)
        block = _kernel_block(spec.decode_many(idx), S, spec.K, e)
        probs[start : start + len(idx)] = block @ w
    # rounding only; the kernel is stochastic
    probs /= probs.sum()
    return DenseDistribution(spec, probs)


def tilde_mask_prob(t: float) -> float:
    """Per-coordinate mask probability ``1 / (1 + exp(-t))`` of the factorised initialiser."""
    return 1.0 / (1.0 + math.exp(-t))


def tilde_init(t: float, spec: SpaceSpec) -> DenseDistribution:
    """Factorised approximation of the forward marginal at time ``t``.

    Each coordinate is masked with probability ``1/(1+e^{-t})``; otherwise it
    is uniform over the ``K-1`` real tokens. The mass of every mask-count
    level is therefore ``exp(-t (d - numK)) / (1 + e^{-t})**d``.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    spec.check_dense()
    pm = tilde_mask_prob(t)
    per_token = (1.0 - pm) / (spec.K - 1)
    m = (spec.all_states() == spec.K).sum(axis=1)
    probs = pm**m * per_token ** (spec.d - m)
    return DenseDistribution(spec, probs / probs.sum())


def tilde_sample(t: float, spec: SpaceSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` sequences from :func:`tilde_init` coordinate by coordinate."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    masked = rng.random((n, spec.d)) < tilde_mask_prob(t)
    tokens = rng.integers(1, spec.K, size=(n, spec.d))
    return np.where(masked, spec.K, tokens).astype(np.int64)


def kl_init_gap(q0: SparseDistribution, t: float) -> tuple[float, float]:
    """``KL(marginal_at(q0, t) || tilde_init(t))`` and the bound ``(1 + e^{-t})**d - 1``."""
    from .metrics import kl_divergence

    kl = kl_divergence(marginal_at(q0, t), tilde_init(t, q0.spec))
    bound = math.expm1(q0.spec.d * math.log1p(math.exp(-t)))
    return kl, bound


def mask_count_law(t: float, spec: SpaceSpec) -> tuple[int, float]:
    """Binomial ``(n, p)`` of the mask count at time ``t`` for a mask-free start."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return spec.d, 1.0 - survival(t)


def mask_count_pmf(t: float, spec: SpaceSpec) -> np.ndarray:
    n, p = mask_count_law(t, spec)
    return stats.binom.pmf(np.arange(n + 1), n, p)
