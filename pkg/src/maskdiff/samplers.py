"""Reverse-time samplers: sequential and parallel Euler, uniformization, and MATU.

Every sampler advances a whole batch of independent chains with numpy, so
one call simulates ``n_chains`` trajectories driven by one
``numpy.random.Generator``. :func:`run_chains` splits a large run into
fixed-size batches whose generators are spawned from a master seed, which
keeps results independent of how the batches are scheduled.

Reverse time runs from 0 to ``T - delta``; the oracle is queried at
reverse time, i.e. at forward time ``T - t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import RateBoundViolation, ScheduleError, SpecMismatchError
from .forward import tilde_sample
from .reverse import beta_bound_many, truncate_rates
from .score import ScoreOracle, check_steps
from .state_space import SpaceSpec, SparseDistribution, TokenSeq

SAMPLERS = ("euler_seq", "euler_par", "unif", "matu")

# (previous states, new states, chain indices) after every event/step
Observer = Callable[[np.ndarray, np.ndarray, np.ndarray], None]
BetaFn = Callable[[float, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SamplerSchedule:
    """Horizon ``T``, early stop ``delta``, MATU segment ``eta`` and Euler step ``h``.

    ``T - delta`` must be an integer multiple of ``eta`` and of ``h``
    (whichever are given).
    """

    T: float
    delta: float
    eta: float | None = None
    h: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < self.T:
            raise ScheduleError(f"need 0 < delta < T, got delta={self.delta}, T={self.T}")
        if self.eta is not None:
            check_steps(self.T - self.delta, self.eta, "eta")
        if self.h is not None:
            check_steps(self.T - self.delta, self.h, "h")

    @property
    def W(self) -> int:
        if self.eta is None:
            raise ScheduleError("schedule has no segment length eta")
        return check_steps(self.T - self.delta, self.eta, "eta")

    @property
    def n_steps(self) -> int:
        if self.h is None:
            raise ScheduleError("schedule has no Euler step h")
        return check_steps(self.T - self.delta, self.h, "h")

    def segment_times(self) -> np.ndarray:
        """Segment boundaries ``0 = t_0 < ... < t_W = T - delta``."""
        grid = np.arange(self.W + 1) * self.eta
        grid[-1] = self.T - self.delta
        return grid

    def step_times(self) -> np.ndarray:
        """Left endpoints ``k h`` of the Euler steps."""
        return np.arange(self.n_steps) * self.h

    def replace(self, **changes) -> "SamplerSchedule":
        fields = dict(T=self.T, delta=self.delta, eta=self.eta, h=self.h, seed=self.seed)
        fields.update(changes)
        return SamplerSchedule(**fields)


def euler_step_size(epsilon: float, spec: SpaceSpec) -> float:
    """Step size ``min{eps / (K^2 d^2 ln(d/eps)), eps^1.5 / (d sqrt(ln(d/eps)))}`` with unit constants."""
    d, K = spec.d, spec.K
    log_term = math.log(d / epsilon)
    return min(
        epsilon / (K**2 * d**2 * log_term),
        epsilon**1.5 / (d * math.sqrt(log_term)),
    )


def default_schedule(epsilon: float, spec: SpaceSpec, seed: int = 0) -> SamplerSchedule:
    """``T = ln(4d/eps^2)``, ``delta = eps/d``, ``eta = eps/(2d)``.

    ``W`` is rounded up and ``T`` stretched so that ``W eta = T - delta``;
    ``h`` is :func:`euler_step_size` shrunk to divide ``T - delta``.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    d = spec.d
    delta = epsilon / d
    eta = epsilon / (2 * d)
    T0 = math.log(4 * d / epsilon**2)
    W = max(1, math.ceil((T0 - delta) / eta - 1e-9))
    T = delta + W * eta
    n = math.ceil((T - delta) / euler_step_size(epsilon, spec) - 1e-9)
    return SamplerSchedule(T=T, delta=delta, eta=eta, h=(T - delta) / n, seed=seed)


def score_call_bound(spec: SpaceSpec, epsilon: float) -> float:
    """Expected score-call bound ``2K(d - eps^2/4) + 12 K d ln d`` for MATU."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    d, K = spec.d, spec.K
    return 2 * K * (d - epsilon**2 / 4) + 12 * K * d * math.log(d)


@dataclass
class RunReport:
    """Outcome of a single chain."""

    final: TokenSeq
    score_calls: int
    events: int
    per_segment_draws: tuple[int, ...] | None = None
    clamped: bool = False


@dataclass
class BatchReport:
    """Outcomes of ``n`` chains as arrays; row ``i`` is chain ``i``."""

    final: np.ndarray
    score_calls: np.ndarray
    events: np.ndarray
    per_segment_draws: np.ndarray | None = None
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.clamped is None:
            self.clamped = np.zeros(len(self.final), dtype=bool)

    def __len__(self):
        return len(self.final)

    def report(self, i: int) -> RunReport:
        draws = None
        if self.per_segment_draws is not None:
            draws = tuple(int(v) for v in self.per_segment_draws[i])
        return RunReport(
            final=tuple(int(v) for v in self.final[i]),
            score_calls=int(self.score_calls[i]),
            events=int(self.events[i]),
            per_segment_draws=draws,
            clamped=bool(self.clamped[i]),
        )

    @property
    def total_score_calls(self) -> int:
        return int(self.score_calls.sum())

    @property
    def mean_score_calls(self) -> float:
        return float(self.score_calls.mean())

    @classmethod
    def concat(cls, parts: list["BatchReport"]) -> "BatchReport":
        draws = None
        if all(p.per_segment_draws is not None for p in parts):
            draws = np.concatenate([p.per_segment_draws for p in parts])
        return cls(
            final=np.concatenate([p.final for p in parts]),
            score_calls=np.concatenate([p.score_calls for p in parts]),
            events=np.concatenate([p.events for p in parts]),
            per_segment_draws=draws,
            clamped=np.concatenate([p.clamped for p in parts]),
        )


def _categorical(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Index drawn from each row of non-negative ``weights`` (last axis)."""
    cum = np.cumsum(weights, axis=-1)
    u = rng.random(weights.shape[:-1]) * cum[..., -1]
    idx = (cum <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, weights.shape[-1] - 1)


def _apply_moves(Y: np.ndarray, rows: np.ndarray, flat_choice: np.ndarray, K: int) -> None:
    """Set ``Y[rows, i] = k`` for flat move indices ``i * (K-1) + (k-1)``."""
    coord, token = np.divmod(flat_choice, K - 1)
    Y[rows, coord] = token + 1


def _init_states(spec: SpaceSpec, n: int, init) -> np.ndarray:
    if init is None:
        return np.full((n, spec.d), spec.K, dtype=np.int64)
    Y = spec.validate_many(np.array(init, dtype=np.int64, ndmin=2)).copy()
    if len(Y) == 1 and n > 1:
        Y = np.repeat(Y, n, axis=0)
    if len(Y) != n:
        raise ValueError(f"init has {len(Y)} rows for {n} chains")
    return Y


def euler_sequential_batch(
    oracle: ScoreOracle,
    sched: SamplerSchedule,
    n_chains: int,
    rng: np.random.Generator,
    init=None,
    observer: Observer | None = None,
) -> BatchReport:
    """Euler update that changes at most one coordinate per step.

    From ``y`` the next state is ``y`` with weight ``1 - h * outgoing`` and
    each unmasking ``y'`` with weight ``h * rate(y -> y')``. A negative stay
    weight is clamped to zero before normalising and the chain is flagged.
    The default initial state is a draw from the factorised initialiser at
    time ``T``.
    """
    spec = oracle.spec
    if abs(sched.T - oracle.T) > 1e-12:
        raise ScheduleError(f"schedule T={sched.T} differs from oracle T={oracle.T}")
    n = n_chains
    Y = tilde_sample(sched.T, spec, n, rng) if init is None else _init_states(spec, n, init)
    calls = np.zeros(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    clamped = np.zeros(n, dtype=bool)
    all_rows = np.arange(n)
    h = sched.h
    for t in sched.step_times():
        moves = oracle.unmask_scores(t, Y).reshape(n, -1) * h
        calls += 1
        stay = 1.0 - moves.sum(axis=1)
        neg = stay < 0
        clamped |= neg
        stay[neg] = 0.0
        choice = _categorical(np.concatenate([stay[:, None], moves], axis=1), rng)
        jump = choice > 0
        if jump.any():
            rows = all_rows[jump]
            prev = Y[rows].copy()
            _apply_moves(Y, rows, choice[jump] - 1, spec.K)
            events[rows] += 1
            if observer is not None:
                observer(prev, Y[rows], rows)
    return BatchReport(Y, calls, events, clamped=clamped)


def euler_parallel_batch(
    oracle: ScoreOracle,
    sched: SamplerSchedule,
    n_chains: int,
    rng: np.random.Generator,
    init=None,
    observer: Observer | None = None,
) -> BatchReport:
    """Coordinate-factorised Euler update.

    Every masked coordinate independently stays masked with weight 1 or
    becomes token ``k`` with weight ``h * rate``, normalised per coordinate.
    Unmasked coordinates never change.
    """
    spec = oracle.spec
    if abs(sched.T - oracle.T) > 1e-12:
        raise ScheduleError(f"schedule T={sched.T} differs from oracle T={oracle.T}")
    n = n_chains
    Y = tilde_sample(sched.T, spec, n, rng) if init is None else _init_states(spec, n, init)
    calls = np.zeros(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    h = sched.h
    for t in sched.step_times():
        moves = oracle.unmask_scores(t, Y) * h
        calls += 1
        weights = np.concatenate([np.ones((n, spec.d, 1)), moves], axis=2)
        choice = _categorical(weights, rng)
        change = (choice > 0) & (Y == spec.K)
        if change.any():
            rows = np.flatnonzero(change.any(axis=1))
            prev = Y[rows].copy()
            Y[change] = choice[change]
            events += change.sum(axis=1)
            if observer is not None:
                observer(prev, Y[rows], rows)
    return BatchReport(Y, calls, events)


def _uniformize(
    oracle: ScoreOracle,
    grid: np.ndarray,
    beta_fn: BetaFn,
    n_chains: int,
    rng: np.random.Generator,
    init,
    truncate: bool,
    observer: Observer | None,
    record_draws: bool,
) -> BatchReport:
    spec = oracle.spec
    K = spec.K
    n = n_chains
    Y = _init_states(spec, n, init)
    calls = np.zeros(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    W = len(grid) - 1
    draws = np.zeros((n, W), dtype=np.int32) if record_draws else None
    n_moves = spec.d * (K - 1)
    for w in range(W):
        t0, t1 = float(grid[w]), float(grid[w + 1])
        beta = np.asarray(beta_fn(t0, t1, Y), dtype=float)
        N = rng.poisson(beta * (t1 - t0))
        if draws is not None:
            draws[:, w] = N
        rows = np.flatnonzero(N)
        if rows.size == 0:
            continue
        Nr = N[rows]
        width = int(Nr.max())
        U = rng.random((rows.size, width))
        U[np.arange(width)[None, :] >= Nr[:, None]] = np.inf
        U.sort(axis=1, kind="stable")
        times = t0 + U * (t1 - t0)
        for j in range(width):
            pos = np.flatnonzero(Nr > j)
            sel = rows[pos]
            tau = times[pos, j]
            Ys = Y[sel]
            rates = oracle.unmask_scores(tau, Ys)
            calls[sel] += 1
            b = beta[sel]
            if truncate:
                rates = truncate_rates(rates, b)
            else:
                out = rates.sum(axis=(1, 2))
                bad = out > b * (1 + 1e-12)
                if bad.any():
                    r = int(np.flatnonzero(bad)[0])
                    raise RateBoundViolation(
                        f"outgoing rate {out[r]:.6g} exceeds beta {b[r]:.6g} "
                        f"at state {tuple(int(v) for v in Ys[r])}, reverse time {tau[r]:.6g}"
                    )
            flat = rates.reshape(len(sel), n_moves)
            cum = np.cumsum(flat, axis=1)
            u = rng.random(len(sel)) * b
            choice = (cum <= u[:, None]).sum(axis=1)
            jump = choice < n_moves
            if jump.any():
                jrows = sel[jump]
                prev = Y[jrows].copy()
                _apply_moves(Y, jrows, choice[jump], K)
                events[jrows] += 1
                if observer is not None:
                    observer(prev, Y[jrows], jrows)
    return BatchReport(Y, calls, events, per_segment_draws=draws)


def uniformization_batch(
    oracle: ScoreOracle,
    T: float,
    delta: float,
    grid,
    beta_fn: BetaFn,
    n_chains: int,
    rng: np.random.Generator,
    init=None,
    observer: Observer | None = None,
    record_draws: bool = False,
) -> BatchReport:
    """Plain uniformization of the reverse chain on the segments of ``grid``.

    ``beta_fn(t_start, t_end, states)`` must dominate every chain's outgoing
    rate on its segment; a violation raises :class:`RateBoundViolation`.
    The default initial state is all-mask.
    """
    grid = np.asarray(grid, dtype=float)
    if abs(T - oracle.T) > 1e-12:
        raise ScheduleError(f"T={T} differs from oracle T={oracle.T}")
    if grid[0] < 0 or abs(grid[-1] - (T - delta)) > 1e-9 or (np.diff(grid) <= 0).any():
        raise ScheduleError("grid must increase from >= 0 to T - delta")
    return _uniformize(oracle, grid, beta_fn, n_chains, rng, init, False, observer, record_draws)


def matu_beta_fn(T: float, K: int) -> BetaFn:
    """``beta = K numK(anchor) / (e^{T - t_end} - 1)`` for each chain's segment-start state."""

    def beta(t0, t1, Y):
        return beta_bound_many(t1, Y, T, K)

    return beta


def matu_batch(
    oracle: ScoreOracle,
    sched: SamplerSchedule,
    n_chains: int,
    rng: np.random.Generator,
    observer: Observer | None = None,
    record_draws: bool = False,
) -> BatchReport:
    """Mask-aware truncated uniformization from the all-mask state.

    Each segment draws ``Poisson(beta * eta)`` sorted uniform event times with
    ``beta`` fixed from the segment's starting state; at each event the
    estimated rates are rescaled whenever their total exceeds ``beta``.
    """
    if abs(sched.T - oracle.T) > 1e-12:
        raise ScheduleError(f"schedule T={sched.T} differs from oracle T={oracle.T}")
    beta = matu_beta_fn(sched.T, oracle.spec.K)
    return _uniformize(
        oracle, sched.segment_times(), beta, n_chains, rng, None, True, observer, record_draws
    )


def _single(q0: SparseDistribution, oracle: ScoreOracle) -> None:
    if q0.spec != oracle.spec:
        raise SpecMismatchError("target and oracle live on different spaces")


def euler_sequential_run(q0, oracle, sched, rng) -> RunReport:
    _single(q0, oracle)
    return euler_sequential_batch(oracle, sched, 1, rng).report(0)


def euler_parallel_run(q0, oracle, sched, rng) -> RunReport:
    _single(q0, oracle)
    return euler_parallel_batch(oracle, sched, 1, rng).report(0)


def uniformization_run(q0, oracle, T, delta, grid, beta_fn, rng) -> RunReport:
    _single(q0, oracle)
    return uniformization_batch(oracle, T, delta, grid, beta_fn, 1, rng, record_draws=True).report(0)


def matu_run(q0, oracle, sched, rng) -> RunReport:
    _single(q0, oracle)
    return matu_batch(oracle, sched, 1, rng, record_draws=True).report(0)


def run_chains(
    sampler: str,
    oracle: ScoreOracle,
    sched: SamplerSchedule,
    n_chains: int,
    seed: int | None = None,
    batch_size: int = 1 << 16,
    observer: Observer | None = None,
    record_draws: bool = False,
) -> BatchReport:
    """Run ``n_chains`` chains in batches with generators spawned from ``seed``.

    ``seed`` defaults to ``sched.seed``. Results depend on ``(seed,
    n_chains, batch_size)`` only, and batch ``b`` always covers chains
    ``b * batch_size`` onwards. ``"unif"`` is uniformization with the MATU
    bound but no truncation.
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    if n_chains < 1 or batch_size < 1:
        raise ValueError("n_chains and batch_size must be positive")
    seed = sched.seed if seed is None else seed
    n_batches = -(-n_chains // batch_size)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    parts = []
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        size = min(batch_size, n_chains - b * batch_size)
        offset = b * batch_size

        obs = None
        if observer is not None:
            def obs(prev, new, rows, _off=offset):
                observer(prev, new, rows + _off)

        if sampler == "euler_seq":
            part = euler_sequential_batch(oracle, sched, size, rng, observer=obs)
        elif sampler == "euler_par":
            part = euler_parallel_batch(oracle, sched, size, rng, observer=obs)
        elif sampler == "matu":
            part = matu_batch(oracle, sched, size, rng, observer=obs, record_draws=record_draws)
        else:
            part = uniformization_batch(
                oracle,
                sched.T,
                sched.delta,
                sched.segment_times(),
                matu_beta_fn(sched.T, oracle.spec.K),
                size,
                rng,
                observer=obs,
                record_draws=record_draws,
            )
        parts.append(part)
    return BatchReport.concat(parts)
