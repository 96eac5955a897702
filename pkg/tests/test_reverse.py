import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maskdiff.forward import marginal_at
from maskdiff.reverse import ReverseRateView, beta_bound, beta_bound_many, truncate_rates
from maskdiff.score import ExactScoreOracle, PerturbedScoreOracle
from maskdiff.state_space import SpaceSpec

T = 2.5


def reverse_generator(view, t):
    spec = view.spec
    states = [tuple(int(v) for v in s) for s in spec.all_states()]
    probs = view.oracle.marginal(t)
    G = np.zeros((len(states), len(states)))
    for b, y in enumerate(states):
        if probs[b] == 0:
            continue
        for a, ynew in enumerate(states):
            G[a, b] = view.reverse_rate(t, ynew, y)
    return G, probs


def test_reverse_rates_drive_the_reversed_marginals(target_23):
    # [DERIVED] d/dt q_{T-t} = R_t q_{T-t}, checked by a central difference of exact marginals
    view = ReverseRateView(ExactScoreOracle(target_23, T))
    for t in (0.3, 1.2, 2.2):
        G, probs = reverse_generator(view, t)
        eps = 1e-5
        dq = (marginal_at(target_23, T - t - eps).probs - marginal_at(target_23, T - t + eps).probs) / (2 * eps)
        np.testing.assert_allclose(G @ probs, dq, atol=1e-7)
        np.testing.assert_allclose(G[:, probs > 0].sum(axis=0), 0.0, atol=1e-12)


def test_reverse_rate_is_zero_off_the_unmask_moves(target_23):
    view = ReverseRateView(ExactScoreOracle(target_23, T))
    before = view.oracle.calls
    assert view.reverse_rate(1.0, (3, 3), (1, 3)) == 0.0
    assert view.reverse_rate(1.0, (1, 2), (3, 3)) == 0.0
    assert view.oracle.calls == before


def test_outgoing_rate_and_beta(target_33):
    view = ReverseRateView(ExactScoreOracle(target_33, T))
    states = target_33.spec.all_states()
    for t in np.linspace(0, T, 13, endpoint=False):
        out = view.unmask_rates(t, states).sum(axis=(1, 2))
        beta = beta_bound_many(t, states, T, 3)
        assert (out <= beta * (1 + 1e-12)).all()
    assert view.beta_bound(1.0, (3, 3, 1)) == pytest.approx(2 * 3 / math.expm1(T - 1.0))
    assert beta_bound(1.0, (1, 2, 1), T, 3) == 0.0
    with pytest.raises(ValueError):
        beta_bound(T, (3, 3, 3), T, 3)


@given(
    st.lists(st.floats(0, 100, allow_subnormal=False), min_size=6, max_size=6),
    st.one_of(st.just(0.0), st.floats(1e-6, 50)),
)
def test_truncate_rates_caps_total_and_keeps_shape(values, beta):
    rates = np.array(values).reshape(1, 3, 2)
    out = truncate_rates(rates, np.array([beta]))
    assert out.sum() <= max(beta, 0.0) * (1 + 1e-12)
    if rates.sum() <= beta:
        np.testing.assert_array_equal(out, rates)
    elif rates.sum() > 0:
        np.testing.assert_allclose(out * rates.sum(), rates * beta, rtol=1e-12)


def test_truncated_rate_under_a_context(target_33):
    base = ExactScoreOracle(target_33, T)
    view = ReverseRateView(PerturbedScoreOracle(base, 2.0, seed=1))
    y = (3, 3, 3)
    ctx = view.context(y, 1.0)
    t = 0.8
    out = view.outgoing_rate(t, y)
    moves = [(k, 3, 3) for k in (1, 2)] + [(3, k, 3) for k in (1, 2)] + [(3, 3, k) for k in (1, 2)]
    total = sum(view.truncated_rate(ctx, t, m, y) for m in moves)
    assert total == pytest.approx(min(out, ctx.beta))
    assert view.truncated_rate(ctx, t, y, y) == pytest.approx(-min(out, ctx.beta))
    assert view.truncated_rate(ctx, t, (1, 1, 3), y) == 0.0
    # exact scores are never truncated
    exact = ReverseRateView(base)
    ctx2 = exact.context(y, 1.0)
    assert exact.truncated_rate(ctx2, t, (1, 3, 3), y) == pytest.approx(exact.reverse_rate(t, (1, 3, 3), y))


def test_unmask_rates_one_call_per_row(target_33):
    view = ReverseRateView(ExactScoreOracle(target_33, T))
    view.unmask_rates(0.5, target_33.spec.all_states())
    assert view.oracle.calls == 27
