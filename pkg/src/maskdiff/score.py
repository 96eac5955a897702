"""Discrete-score oracles and score-entropy losses.

A score oracle answers ``v_{t,y}(y2)``, the reverse-time density ratio
``q_t(y2) / q_t(y)`` where ``t`` is reverse time on ``[0, T)``. Samplers only
ever need ratios towards single-coordinate unmaskings of ``y``, which
:meth:`ScoreOracle.unmask_scores` returns for a whole batch of states at once.

Call accounting: ``calls`` counts one evaluation per queried ``(t, y)``
state, the way a network forward pass yields all neighbour ratios at once.
``neighbor_calls`` counts individual ratios read.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy import special

from .exceptions import ScheduleError, ZeroProbabilityError
from .forward import marginal_at
from .state_space import SpaceSpec, SparseDistribution, unmask_neighbors

_TIME_DIGITS = 12


class ScoreOracle:
    """Base class. Subclasses implement ``_score`` and ``_unmask_scores``."""

    def __init__(self, spec: SpaceSpec, T: float):
        if not T > 0:
            raise ValueError(f"horizon T must be positive, got {T}")
        self.spec = spec
        self.T = float(T)
        self._lock = threading.Lock()
        self._last_key = None
        self.calls = 0
        self.neighbor_calls = 0

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0
            self.neighbor_calls = 0
            self._last_key = None

    def _check_time(self, t) -> None:
        t = np.asarray(t, dtype=float)
        if t.size and (t.min() < 0 or t.max() >= self.T):
            raise ValueError(f"reverse time must lie in [0, {self.T}), got {t}")

    def score(self, t: float, y, y2) -> float:
        """``v_{t,y}(y2)`` for a single pair of sequences."""
        y = self.spec.validate(y)
        y2 = self.spec.validate(y2)
        self._check_time(t)
        key = (round(float(t), _TIME_DIGITS), y)
        with self._lock:
            if key != self._last_key:
                self.calls += 1
                self._last_key = key
            self.neighbor_calls += 1
        return float(self._score(float(t), y, y2))

    __call__ = score

    def unmask_scores(self, t, Y: np.ndarray) -> np.ndarray:
        """Scores towards every unmasking of every row of ``Y``.

        ``t`` is a scalar or one time per row. The result has shape
        ``(n, d, K - 1)``; entry ``[r, i, k-1]`` is ``v_{t,Y[r]}(Y[r][i: K -> k])``
        and is zero wherever ``Y[r, i]`` is not masked. Counts one call per row.
        """
        Y = np.asarray(Y, dtype=np.int64)
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(Y),))
        self._check_time(t)
        masked = Y == self.spec.K
        with self._lock:
            self.calls += len(Y)
            self.neighbor_calls += int(masked.sum()) * (self.spec.K - 1)
        out = np.array(self._unmask_scores(t, Y), dtype=float)
        out[~masked] = 0.0
        return out

    def _score(self, t: float, y, y2) -> float:
        raise NotImplementedError

    def _unmask_scores(self, t: np.ndarray, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ExactScoreOracle(ScoreOracle):
    """True scores of the masked forward process started from ``q0``.

    ``score`` divides cached dense forward marginals. ``unmask_scores`` uses
    the factorisation ``v = P(y0_i = k | unmasked part of y) / (e^{T-t} - 1)``:
    the forward kernel weight is the same for every start state consistent
    with ``y``, so the posterior over ``y0`` is ``q0`` restricted to those
    states and does not depend on time. States no start state can reach get
    all-zero rates in the batch path.
    """

    def __init__(self, q0: SparseDistribution, T: float):
        q0.require_mask_free()
        super().__init__(q0.spec, T)
        self.q0 = q0
        self._marginals: dict[float, np.ndarray] = {}
        self._posterior = None
        self._reachable = None

    def marginal(self, t: float) -> np.ndarray:
        """Dense reverse marginal at reverse time ``t`` (forward time ``T - t``)."""
        key = round(self.T - float(t), _TIME_DIGITS)
        probs = self._marginals.get(key)
        if probs is None:
            probs = marginal_at(self.q0, key).probs
            probs = self._marginals.setdefault(key, probs)
        return probs

    def _score(self, t, y, y2):
        probs = self.marginal(t)
        base = probs[self.spec.encode(y)]
        if base <= 0.0:
            raise ZeroProbabilityError(f"state {y} has zero probability at reverse time {t}")
        return probs[self.spec.encode(y2)] / base

    def _build_posterior(self) -> None:
        spec = self.spec
        states = spec.all_states()
        S, w = self.q0.states, self.q0.weights
        consistent = np.ones((spec.n_states, len(S)), dtype=bool)
        for i in range(spec.d):
            yi = states[:, i][:, None]
            consistent &= (yi == spec.K) | (yi == S[:, i][None, :])
        weighted = consistent * w[None, :]
        mass = weighted.sum(axis=1)
        post = np.zeros((spec.n_states, spec.d, spec.K - 1))
        for i in range(spec.d):
            onehot = S[:, i][:, None] == np.arange(1, spec.K)[None, :]
            post[:, i, :] = weighted @ onehot
        reachable = mass > 0
        post[reachable] /= mass[reachable, None, None]
        post[states != spec.K] = 0.0
        self._posterior = post
        self._reachable = reachable

    @property
    def posterior(self) -> np.ndarray:
        """``P(y0_i = k | y)`` as a ``(K**d, d, K-1)`` table."""
        if self._posterior is None:
            self._build_posterior()
        return self._posterior

    def _unmask_scores(self, t, Y):
        post = self.posterior[self.spec.encode_many(Y)]
        factor = 1.0 / np.expm1(self.T - t)
        return post * factor[:, None, None]


class PerturbedScoreOracle(ScoreOracle):
    """Log-normal multiplicative noise on top of another oracle.

    The value is ``base * exp(sigma * g)`` where ``g`` is a standard normal
    obtained by hashing ``(seed, time bucket, y, y2)``, so replays are exact
    and scores stay non-negative. ``sigma = 0`` returns the base value as is.
    """

    def __init__(self, base: ScoreOracle, sigma: float, seed: int = 0, t_resolution: float = 1e-3):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        if not t_resolution > 0:
            raise ValueError("t_resolution must be positive")
        super().__init__(base.spec, base.T)
        self.base = base
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.t_resolution = float(t_resolution)

    def noise(self, t, idx, idx2) -> np.ndarray:
        bucket = np.floor(np.asarray(t, dtype=float) / self.t_resolution).astype(np.int64)
        return hashed_normal(self.seed, bucket, idx, idx2)

    def _score(self, t, y, y2):
        value = self.base._score(t, y, y2)
        if self.sigma == 0.0:
            return value
        g = self.noise(t, self.spec.encode(y), self.spec.encode(y2))
        return value * float(np.exp(self.sigma * g))

    def _unmask_scores(self, t, Y):
        values = self.base._unmask_scores(t, Y)
        if self.sigma == 0.0:
            return values
        idx = self.spec.encode_many(Y)
        nbr = unmask_neighbors(self.spec, idx)
        g = self.noise(t[:, None, None], idx[:, None, None], nbr)
        return values * np.exp(self.sigma * g)


class FrozenTimeOracle(ScoreOracle):
    """Answers every query with ``base`` evaluated at the fixed time ``t0``."""

    def __init__(self, base: ScoreOracle, t0: float):
        super().__init__(base.spec, base.T)
        base._check_time(t0)
        self.base = base
        self.t0 = float(t0)

    def _score(self, t, y, y2):
        return self.base._score(self.t0, y, y2)

    def _unmask_scores(self, t, Y):
        return self.base._unmask_scores(np.full(len(Y), self.t0), Y)


def perturbed_score(base: ScoreOracle, sigma: float, seed: int = 0) -> PerturbedScoreOracle:
    return PerturbedScoreOracle(base, sigma, seed)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def hashed_normal(seed: int, *keys) -> np.ndarray:
    """Deterministic standard normals from integer keys (splitmix64 + Box-Muller)."""
    arrays = np.broadcast_arrays(*(np.asarray(k, dtype=np.int64) for k in keys))
    h = _splitmix64(np.full(arrays[0].shape, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
    for k in arrays:
        h = _splitmix64(h ^ k.astype(np.uint64))
    h2 = _splitmix64(h)
    u1 = ((h >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    u2 = (h2 >> np.uint64(11)).astype(float) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def bregman_phi(u, v):
    """Bregman divergence of ``c log c``: ``u log(u/v) - u + v`` (with ``0 log 0 = 0``)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if (v <= 0).any():
        raise ValueError("bregman_phi needs v > 0")
    if (u < 0).any():
        raise ValueError("bregman_phi needs u >= 0")
    out = special.rel_entr(u, v) - u + v
    return float(out) if out.ndim == 0 else out


def _expected_bregman(
    q0: SparseDistribution,
    forward_t: float,
    oracle: ScoreOracle,
    query_t: float,
    cache: dict,
) -> float:
    """``E_{y ~ q_fwd}[sum over unmask moves D(v || v_est)]`` by enumeration.

    True scores come from the dense forward marginal at ``forward_t``; the
    estimate is ``oracle`` queried at reverse time ``query_t``.
    """
    spec = q0.spec
    key = round(forward_t, _TIME_DIGITS)
    probs = cache.get(key)
    if probs is None:
        probs = cache.setdefault(key, marginal_at(q0, forward_t).probs)
    idx = np.flatnonzero(probs)
    Y = spec.decode_many(idx)
    masked = Y == spec.K
    v_true = probs[unmask_neighbors(spec, idx)] / probs[idx][:, None, None]
    v_true[~masked] = 0.0
    v_est = oracle.unmask_scores(query_t, Y)
    both_zero = (v_true == 0) & (v_est == 0)
    if (~both_zero & masked[..., None] & (v_est <= 0)).any():
        return math.inf
    D = np.zeros_like(v_true)
    live = masked[..., None].repeat(spec.K - 1, axis=2) & ~both_zero
    D[live] = bregman_phi(v_true[live], v_est[live])
    return float(probs[idx] @ D.sum(axis=(1, 2)))


def score_entropy_loss(
    q0: SparseDistribution,
    T: float,
    oracle: ScoreOracle,
    grid=None,
    *,
    delta: float | None = None,
    n_points: int = 64,
) -> float:
    """Trapezoid estimate of the score-entropy loss over forward times ``grid``.

    The default grid is ``n_points`` uniform forward times on
    ``[delta, T - delta]``. The integral is divided by ``T``.
    """
    if grid is None:
        if delta is None:
            delta = 1e-2 * T
        grid = np.linspace(delta, T - delta, n_points)
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid[0] <= 0 or grid[-1] > T:
        raise ValueError("quadrature grid must lie inside (0, T]")
    cache: dict = {}
    values = [_expected_bregman(q0, s, oracle, T - s, cache) for s in grid]
    return float(np.trapezoid(values, grid) / T) if len(grid) > 1 else float(values[0])


def dis_score_entropy_loss(
    q0: SparseDistribution,
    T: float,
    delta: float,
    h: float,
    oracle: ScoreOracle,
    *,
    n_sub: int = 8,
) -> float:
    """Score-entropy loss with the estimate frozen at each step's left endpoint.

    On reverse-time segment ``[kh, (k+1)h)`` the oracle is queried at ``kh``
    while the true score and the expectation follow ``t``. Each segment is
    integrated with an ``n_sub``-interval trapezoid; the sum is divided by
    ``T - delta``.
    """
    n = check_steps(T - delta, h, "h")
    cache: dict = {}
    total = 0.0
    for k in range(n):
        r = k * h + np.linspace(0.0, h, n_sub + 1)
        values = [_expected_bregman(q0, T - rj, oracle, k * h, cache) for rj in r]
        total += np.trapezoid(values, r)
    return float(total / (T - delta))


def check_steps(span: float, step: float, name: str) -> int:
    """Number of steps of size ``step`` in ``span``; raises unless it is a positive integer."""
    if not step > 0 or not span > 0:
        raise ScheduleError(f"{name} and the horizon must be positive")
    n = round(span / step)
    if n < 1 or abs(n * step - span) > 1e-9 * max(1.0, span):
        raise ScheduleError(f"horizon {span} is not an integer multiple of {name}={step}")
    return int(n)
