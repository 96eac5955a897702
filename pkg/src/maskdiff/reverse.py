"""Reverse-time rates built from a score oracle, and the mask-aware truncation.

The reverse rate from ``y`` to ``ynew`` is ``rate_forward(y, ynew) * v_{t,y}(ynew)``,
which is non-zero only when ``ynew`` unmasks exactly one coordinate of ``y``.
Its total over all moves is bounded by ``numK(y) K / (e^{T-t} - 1)`` for exact
scores; truncation rescales estimated rates so that bound always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import rate_forward
from .score import ScoreOracle
from .state_space import TokenSeq, hamming, num_mask, num_mask_many


def beta_bound(t_ref: float, y, T: float, K: int) -> float:
    """Dominating outgoing rate ``numK(y) K / (e^{T - t_ref} - 1)``."""
    if not t_ref < T:
        raise ValueError(f"t_ref={t_ref} must be smaller than T={T}")
    return num_mask(y, K) * K / math.expm1(T - t_ref)


def beta_bound_many(t_ref, Y: np.ndarray, T: float, K: int) -> np.ndarray:
    t_ref = np.asarray(t_ref, dtype=float)
    if (t_ref >= T).any():
        raise ValueError(f"t_ref must be smaller than T={T}")
    return num_mask_many(Y, K) * K / np.expm1(T - t_ref)


def truncate_rates(rates: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Scale each row of ``(n, d, K-1)`` rates so its total does not exceed ``beta``."""
    out_rate = rates.sum(axis=(1, 2))
    over = out_rate > beta
    scale = np.ones_like(out_rate)
    scale[over] = beta[over] / out_rate[over]
    return rates * scale[:, None, None]


@dataclass(frozen=True)
class TruncationContext:
    """Segment data for the truncation: anchor state, segment end, and its ``beta``."""

    anchor: TokenSeq
    t_end: float
    beta: float


class ReverseRateView:
    """Reverse rates of the masked process driven by ``oracle``."""

    def __init__(self, oracle: ScoreOracle):
        self.oracle = oracle
        self.spec = oracle.spec
        self.T = oracle.T

    def reverse_rate(self, t: float, ynew, y) -> float:
        """Rate of jumping from ``y`` to ``ynew`` at reverse time ``t``.

        The diagonal entry (``ynew == y``) is minus the outgoing rate.
        """
        y = self.spec.validate(y)
        ynew = self.spec.validate(ynew)
        if ynew == y:
            return -self.outgoing_rate(t, y)
        fwd = rate_forward(self.spec, y, ynew)
        if fwd == 0.0:
            return 0.0
        return fwd * self.oracle.score(t, y, ynew)

    def unmask_rates(self, t, Y: np.ndarray) -> np.ndarray:
        """Rates towards every unmasking, shape ``(n, d, K-1)`` (one oracle call per row)."""
        # the forward rate of every unmask move is exactly 1
        return self.oracle.unmask_scores(t, Y)

    def outgoing_rate(self, t: float, y) -> float:
        y = self.spec.validate(y)
        return float(self.unmask_rates(t, np.asarray([y])).sum())

    def beta_bound(self, t_ref: float, y) -> float:
        return beta_bound(t_ref, y, self.T, self.spec.K)

    def context(self, anchor, t_end: float) -> TruncationContext:
        anchor = self.spec.validate(anchor)
        return TruncationContext(anchor, float(t_end), self.beta_bound(t_end, anchor))

    def truncated_rate(self, ctx: TruncationContext, t: float, ynew, y) -> float:
        """Reverse rate rescaled by ``beta / outgoing`` when the outgoing rate exceeds ``ctx.beta``."""
        y = self.spec.validate(y)
        ynew = self.spec.validate(ynew)
        if ynew == y:
            return -self.truncated_outgoing_rate(ctx, t, y)
        if hamming(y, ynew) != 1:
            return 0.0
        rate = self.reverse_rate(t, ynew, y)
        out = self.outgoing_rate(t, y)
        if out > ctx.beta:
            return rate * ctx.beta / out
        return rate

    def truncated_outgoing_rate(self, ctx: TruncationContext, t: float, y) -> float:
        return min(self.outgoing_rate(t, y), ctx.beta)
