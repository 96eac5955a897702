import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maskdiff.exceptions import SpecMismatchError
from maskdiff.metrics import empirical_distribution, kl_divergence, tv_distance, tv_noise_sigma
from maskdiff.state_space import DenseDistribution, SpaceSpec

SPEC = SpaceSpec(1, 4)


@st.composite
def dists(draw, n=4, positive=False):
    lo = 1e-3 if positive else 0.0
    w = np.array(draw(st.lists(st.floats(lo, 1.0), min_size=n, max_size=n)))
    if w.sum() <= 0:
        w[0] = 1.0
    return DenseDistribution(SPEC, w / w.sum())


def test_tv_examples():
    spec = SpaceSpec(1, 2)
    p = DenseDistribution(spec, [0.75, 0.25])
    q = DenseDistribution(spec, [0.5, 0.5])
    assert tv_distance(p, q) == pytest.approx(0.25)
    assert tv_distance(p, p) == 0.0
    a = DenseDistribution.point_mass(spec, (1,))
    b = DenseDistribution.point_mass(spec, (2,))
    assert tv_distance(a, b) == 1.0


def test_kl_examples():
    spec = SpaceSpec(1, 2)
    p = DenseDistribution(spec, [1.0, 0.0])
    q = DenseDistribution(spec, [0.5, 0.5])
    assert kl_divergence(p, q) == pytest.approx(math.log(2))
    assert kl_divergence(q, q) == 0.0
    with pytest.raises(ValueError):
        kl_divergence(q, p)


def test_spec_mismatch():
    with pytest.raises(SpecMismatchError):
        tv_distance(DenseDistribution(SpaceSpec(1, 2), [1, 0]), DenseDistribution(SpaceSpec(2, 2), [1, 0, 0, 0]))


@given(dists(), dists(), dists())
def test_tv_is_a_metric(p, q, r):
    assert 0 <= tv_distance(p, q) <= 1
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12


@given(dists(), dists(positive=True))
def test_pinsker(p, q):
    assert tv_distance(p, q) <= math.sqrt(kl_divergence(p, q) / 2) + 1e-12


def test_empirical_distribution_examples(rng):
    spec = SpaceSpec(2, 3)
    single = empirical_distribution([(1, 2)], spec)
    assert single((1, 2)) == 1.0
    Y = rng.integers(1, 4, size=(500, 2))
    a = empirical_distribution(Y, spec)
    b = empirical_distribution(Y[rng.permutation(500)], spec)
    np.testing.assert_array_equal(a.probs, b.probs)
    with pytest.raises(SpecMismatchError):
        empirical_distribution(np.ones((3, 3), dtype=int), spec)
    with pytest.raises(ValueError):
        empirical_distribution(np.zeros((0, 2), dtype=int), spec)


def test_tv_noise_sigma_bounds_the_empirical_spread(rng):
    spec = SpaceSpec(2, 3)
    p = DenseDistribution(spec, rng.dirichlet(np.ones(9)))
    n = 2000
    tvs = [
        tv_distance(empirical_distribution(spec.decode_many(rng.choice(9, size=n, p=p.probs)), spec), p)
        for _ in range(300)
    ]
    rms = math.sqrt(np.mean(np.square(tvs)))
    assert rms <= tv_noise_sigma(p, n)
    assert rms >= 0.5 * tv_noise_sigma(p, n)
