"""Input checks shared by the estimators and the experiment runner."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .state_space import SpaceSpec, SparseDistribution


def check_epsilon(epsilon) -> float:
    if not isinstance(epsilon, numbers.Real) or not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return float(epsilon)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_optional_positive(value, name: str) -> float | None:
    if value is None:
        return None
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_tokens(X, K: int | None = None) -> tuple[np.ndarray, int]:
    """Validate an ``(n, d)`` array of mask-free token sequences.

    Tokens must be integers in ``1..K-1``. When ``K`` is None it is taken as
    one more than the largest token seen, i.e. the smallest vocabulary in
    which every observed token is a real (non-mask) token.
    """
    X = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if not np.issubdtype(X.dtype, np.integer):
        Xi = X.astype(np.int64)
        if not np.array_equal(Xi, X):
            raise ValueError("token sequences must be integer valued")
        X = Xi
    X = X.astype(np.int64, copy=False)
    if X.min() < 1:
        raise ValueError("tokens are 1-based; found a token below 1")
    if K is None:
        K = int(X.max()) + 1
    if X.max() >= K:
        raise ValueError(f"token {int(X.max())} is the mask token or beyond for K={K}")
    return X, int(K)


def target_from_samples(X, K: int | None = None, sample_weight=None) -> SparseDistribution:
    """Empirical distribution of the rows of ``X`` (optionally weighted)."""
    X, K = check_tokens(X, K)
    n, d = X.shape
    if sample_weight is None:
        w = np.ones(n)
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"sample_weight has shape {w.shape}, expected ({n},)")
        if (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
            raise ValueError("sample_weight must be finite, non-negative and not all zero")
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=w, minlength=len(uniq))
    keep = mass > 0
    spec = SpaceSpec(d, K)
    probs = mass[keep] / mass[keep].sum()
    return SparseDistribution(spec, {tuple(int(v) for v in s): float(p) for s, p in zip(uniq[keep], probs)})
