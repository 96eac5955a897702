import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maskdiff.exceptions import DenseCapError, SpecMismatchError, TargetFileError
from maskdiff.state_space import (
    DenseDistribution,
    SpaceSpec,
    SparseDistribution,
    hamming,
    load_target,
    num_mask,
    random_target,
    revise,
    save_target,
    unmask_neighbors,
)

spaces = st.tuples(st.integers(1, 5), st.integers(2, 5)).map(lambda dk: SpaceSpec(*dk))


@st.composite
def space_and_seq(draw):
    spec = draw(spaces)
    y = tuple(draw(st.integers(1, spec.K)) for _ in range(spec.d))
    return spec, y


@given(space_and_seq())
def test_encode_decode_roundtrip(sy):
    spec, y = sy
    i = spec.encode(y)
    assert 0 <= i < spec.n_states
    assert spec.decode(i) == y
    assert spec.encode_many(np.array([y]))[0] == i


@given(space_and_seq())
def test_index_matches_kronecker_of_one_hots(sy):
    # [DERIVED] np.kron of per-coordinate one-hot vectors places the 1 at the state index
    spec, y = sy
    vec = np.ones(1)
    for v in y:
        e = np.zeros(spec.K)
        e[v - 1] = 1.0
        vec = np.kron(vec, e)
    assert int(np.argmax(vec)) == spec.encode(y)


def test_all_states_in_index_order():
    spec = SpaceSpec(2, 3)
    states = spec.all_states()
    assert states.shape == (9, 2)
    assert tuple(states[0]) == (1, 1) and tuple(states[1]) == (1, 2) and tuple(states[-1]) == (3, 3)
    np.testing.assert_array_equal(spec.decode_many(np.arange(9)), states)


def test_validate_rejects_bad_sequences():
    spec = SpaceSpec(2, 3)
    with pytest.raises(SpecMismatchError):
        spec.validate((1, 2, 3))
    with pytest.raises(ValueError):
        spec.validate((0, 1))
    with pytest.raises(ValueError):
        spec.validate((1, 4))
    with pytest.raises(IndexError):
        spec.decode(9)


def test_bad_space_parameters():
    with pytest.raises(ValueError):
        SpaceSpec(0, 3)
    with pytest.raises(ValueError):
        SpaceSpec(2, 1)
    with pytest.raises(DenseCapError):
        SpaceSpec(64, 2)


def test_dense_cap_is_enforced_only_for_dense_work():
    spec = SpaceSpec(10, 4, max_states=1000)
    assert spec.encode((1,) * 10) == 0
    with pytest.raises(DenseCapError):
        spec.all_states()
    assert spec == SpaceSpec(10, 4)


def test_num_mask_and_hamming_examples():
    assert num_mask((3, 1, 3), 3) == 2
    assert hamming((1, 2, 3), (1, 3, 3)) == 1
    with pytest.raises(SpecMismatchError):
        hamming((1,), (1, 2))


@given(space_and_seq(), st.data())
def test_revise_changes_exactly_the_given_positions(sy, data):
    spec, y = sy
    positions = data.draw(st.lists(st.integers(1, spec.d), unique=True, max_size=spec.d))
    values = [data.draw(st.integers(1, spec.K)) for _ in positions]
    z = revise(y, positions, values)
    for i in range(spec.d):
        if i + 1 in positions:
            assert z[i] == values[positions.index(i + 1)]
        else:
            assert z[i] == y[i]
    assert hamming(y, z) <= len(positions)


def test_revise_errors():
    with pytest.raises(ValueError):
        revise((1, 2), [1, 1], [2, 2])
    with pytest.raises(IndexError):
        revise((1, 2), [3], [1])
    with pytest.raises(ValueError):
        revise((1, 2), [1], [])


def test_sparse_distribution_tolerance():
    spec = SpaceSpec(2, 3)
    d = SparseDistribution(spec, {(1, 1): 0.5, (1, 2): 0.5 + 5e-10})
    assert abs(d.weights.sum() - 1) < 1e-15
    with pytest.raises(ValueError):
        SparseDistribution(spec, {(1, 1): 0.5, (1, 2): 0.6})
    with pytest.raises(ValueError):
        SparseDistribution(spec, {(1, 1): 1.0, (1, 2): 0.0})


def test_target_json_roundtrip(tmp_path, target_23):
    path = tmp_path / "t.json"
    save_target(target_23, path)
    back = load_target(path)
    assert back.spec == target_23.spec
    assert back.support == pytest.approx(target_23.support)


def test_target_file_errors(tmp_path):
    bad_json = tmp_path / "a.json"
    bad_json.write_text("{not json")
    with pytest.raises(TargetFileError):
        load_target(bad_json)
    masked = tmp_path / "b.json"
    masked.write_text(json.dumps({"d": 2, "K": 3, "support": [{"tokens": [1, 3], "prob": 1.0}]}))
    with pytest.raises(TargetFileError, match="mask"):
        load_target(masked)
    missing = tmp_path / "c.json"
    missing.write_text(json.dumps({"d": 2, "support": []}))
    with pytest.raises(TargetFileError):
        load_target(missing)
    dup = tmp_path / "d.json"
    dup.write_text(json.dumps({"d": 1, "K": 3, "support": [{"tokens": [1], "prob": 0.5}] * 2}))
    with pytest.raises(TargetFileError):
        load_target(dup)


def test_dense_distribution_checks():
    spec = SpaceSpec(1, 3)
    with pytest.raises(SpecMismatchError):
        DenseDistribution(spec, np.ones(2) / 2)
    with pytest.raises(ValueError):
        DenseDistribution(spec, np.array([0.5, 0.6, -0.1]))
    p = DenseDistribution.point_mass(spec, (2,))
    assert p((2,)) == 1.0
    with pytest.raises(ValueError):
        p.probs[0] = 1.0
    assert p.to_sparse().support == {(2,): 1.0}


def test_densify_matches_support(target_23):
    dense = target_23.densify()
    for y, p in target_23.support.items():
        assert dense(y) == pytest.approx(p)
    assert dense.probs.sum() == pytest.approx(1.0)


@given(st.integers(1, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_random_target_is_mask_free(d, K, seed):
    spec = SpaceSpec(d, K)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, min(6, (K - 1) ** d) + 1))
    q = random_target(spec, n, rng)
    assert len(q) == n and q.mask_free
    assert q.weights.sum() == pytest.approx(1.0)


@given(space_and_seq())
def test_unmask_neighbors_match_revise(sy):
    spec, y = sy
    nbr = unmask_neighbors(spec, spec.encode(y))
    assert nbr.shape == (spec.d, spec.K - 1)
    for i in range(spec.d):
        if y[i] != spec.K:
            continue
        for k in range(1, spec.K):
            assert nbr[i, k - 1] == spec.encode(revise(y, [i + 1], [k]))
