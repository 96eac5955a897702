"""Exhaustive numerical checks of the forward process and of the rate bounds.

Each check enumerates the whole state space and returns the largest
violation (or smallest slack) found, so callers can compare against a
tolerance and report margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import kernel_matrix, kl_init_gap, kron_generator, kron_kernel, marginal_at, rate_forward
from .reverse import beta_bound_many
from .score import ExactScoreOracle
from .state_space import SpaceSpec, SparseDistribution, random_target, unmask_neighbors

FORWARD_SPACES = ((1, 2), (2, 3), (3, 3), (3, 4))
FORWARD_TIMES = (0.05, 0.4, 1.3, 3.0)


def dense_generator(spec: SpaceSpec) -> np.ndarray:
    """Generator assembled entry by entry from :func:`rate_forward` (``[y, yprev]``)."""
    states = [tuple(int(v) for v in s) for s in spec.all_states()]
    G = np.empty((len(states), len(states)))
    for a, y in enumerate(states):
        for b, yp in enumerate(states):
            G[a, b] = rate_forward(spec, y, yp)
    return G


def forward_violations(
    spec: SpaceSpec,
    times=FORWARD_TIMES,
    fd_step: float = 1e-6,
) -> dict[str, float]:
    """Largest violation of each forward-process identity on ``spec``.

    ``generator_fd``: one-sided difference quotient of the closed-form kernel
    at 0 against the generator. ``row_normalization``: every kernel column (a
    source state) sums to one. ``chapman_kolmogorov``: ``P(s+t) = P(t) P(s)``
    over all pairs in ``times``. ``column_conservation``: generator columns
    sum to zero. ``kron_agreement``: closed form against the Kronecker power
    of the one-coordinate matrix exponential.
    """
    G = dense_generator(spec)
    eye = np.eye(spec.n_states)
    # one-sided since P(-h) is undefined; O(h) error
    fd = (kernel_matrix(spec, fd_step) - eye) / fd_step
    out = {
        "generator_fd": float(np.abs(fd - G).max()),
        "generator_kron": float(np.abs(kron_generator(spec) - G).max()),
        "column_conservation": float(np.abs(G.sum(axis=0)).max()),
    }
    row = ck = kron = 0.0
    kernels = {t: kernel_matrix(spec, t) for t in times}
    for s in times:
        P = kernels[s]
        row = max(row, float(np.abs(P.sum(axis=0) - 1.0).max()))
        kron = max(kron, float(np.abs(P - kron_kernel(spec, s)).max()))
        for t in times:
            ck = max(ck, float(np.abs(kernel_matrix(spec, s + t) - kernels[t] @ P).max()))
    out["row_normalization"] = row
    out["chapman_kolmogorov"] = ck
    out["kron_agreement"] = kron
    return out


@dataclass(frozen=True)
class InitGapRecord:
    target: int
    t: float
    kl: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.kl


def random_targets(n: int, seed: int, max_d: int = 5, max_K: int = 4) -> list[SparseDistribution]:
    """``n`` random sparse targets with ``d <= max_d``, ``K <= max_K`` and Dirichlet(1) weights.

    The space, support size (1 to 6, capped by the number of mask-free
    sequences) and weights are all drawn from one generator seeded by ``seed``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = int(rng.integers(1, max_d + 1))
        K = int(rng.integers(2, max_K + 1))
        spec = SpaceSpec(d, K)
        size = int(rng.integers(1, min(6, (K - 1) ** d) + 1))
        out.append(random_target(spec, size, rng))
    return out


def init_gap_records(targets, times) -> list[InitGapRecord]:
    """KL between the forward marginal and the factorised law, with its bound, per target and time."""
    records = []
    for j, q0 in enumerate(targets):
        for t in times:
            kl, bound = kl_init_gap(q0, float(t))
            records.append(InitGapRecord(j, float(t), kl, bound))
    return records


@dataclass(frozen=True)
class RateBoundReport:
    """Largest ``outgoing - beta`` and ``score - 1/(e^{T-t}-1)`` over a sweep (both should be <= 0)."""

    max_outgoing_excess: float
    max_score_excess: float
    n_checked: int


def rate_bound_report(q0: SparseDistribution, T: float, n_times: int = 50) -> RateBoundReport:
    """Check the mask-count rate bound and the score bound at every state and ``n_times`` times.

    Outgoing rates come from the oracle's posterior table; scores are
    recomputed independently as ratios of dense forward marginals, over every
    state with positive probability.
    """
    spec = q0.spec
    oracle = ExactScoreOracle(q0, T)
    states = spec.all_states()
    idx = np.arange(spec.n_states)
    nbr = unmask_neighbors(spec, idx)
    masked = states == spec.K
    out_excess = score_excess = -math.inf
    count = 0
    for t in np.linspace(0.0, T, n_times, endpoint=False):
        out = oracle.unmask_scores(t, states).sum(axis=(1, 2))
        beta = beta_bound_many(t, states, T, spec.K)
        out_excess = max(out_excess, float((out - beta).max()))
        probs = marginal_at(q0, T - t).probs
        live = probs > 0
        ratio = probs[nbr[live]] / probs[live][:, None, None]
        ratio[~masked[live]] = 0.0
        score_excess = max(score_excess, float(ratio.max() - 1.0 / math.expm1(T - t)))
        count += spec.n_states
    return RateBoundReport(out_excess, score_excess, count)
