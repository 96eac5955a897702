"""Token spaces ``{1, ..., K}**d``, the mixed-radix index codec, and distributions.

Tokens are 1-based and ``K`` is the mask token. A single sequence is a
tuple of ints; batches of sequences are ``(n, d)`` integer arrays. State
indices use coordinate 1 as the most significant digit, which is the row
ordering of the ``d``-fold Kronecker power of a ``K x K`` matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .exceptions import DenseCapError, SpecMismatchError, TargetFileError

DEFAULT_MAX_STATES = 2**26
PROB_TOL = 1e-9

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class SpaceSpec:
    """Sequence length ``d`` and vocabulary size ``K`` (mask included).

    ``max_states`` caps every dense ``K**d`` computation; it does not take
    part in equality, so two specs with different caps are compatible.
    """

    d: int
    K: int
    max_states: int = field(default=DEFAULT_MAX_STATES, compare=False)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.K, (int, np.integer)) or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K!r}")
        if self.d * math.log2(self.K) >= 63:
            raise DenseCapError(
                f"K**d = {self.K}**{self.d} does not fit a 64-bit state index"
            )
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "K", int(self.K))

    @property
    def mask(self) -> int:
        return self.K

    @property
    def n_states(self) -> int:
        return self.K**self.d

    @property
    def all_mask(self) -> TokenSeq:
        return (self.K,) * self.d

    def check_dense(self) -> None:
        """Raise :class:`DenseCapError` if a dense vector would exceed the cap."""
        if self.n_states > self.max_states:
            raise DenseCapError(
                f"dense mode needs {self.n_states} states, cap is {self.max_states}"
            )

    def validate(self, y) -> TokenSeq:
        """Return ``y`` as a token tuple, or raise if it is not a sequence of this space."""
        y = tuple(int(v) for v in y)
        if len(y) != self.d:
            raise SpecMismatchError(f"sequence has length {len(y)}, expected d={self.d}")
        for v in y:
            if not 1 <= v <= self.K:
                raise ValueError(f"token {v} outside 1..{self.K}")
        return y

    def validate_many(self, Y) -> np.ndarray:
        Y = np.asarray(Y)
        if Y.ndim != 2 or Y.shape[1] != self.d:
            raise SpecMismatchError(f"expected an (n, {self.d}) token array, got shape {Y.shape}")
        if Y.size and (Y.min() < 1 or Y.max() > self.K):
            raise ValueError(f"tokens outside 1..{self.K}")
        return Y.astype(np.int64, copy=False)

    # index codec -----------------------------------------------------------

    def _radix(self) -> np.ndarray:
        return self.K ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def encode(self, y) -> int:
        y = self.validate(y)
        idx = 0
        for v in y:
            idx = idx * self.K + (v - 1)
        return idx

    def decode(self, i: int) -> TokenSeq:
        i = int(i)
        if not 0 <= i < self.n_states:
            raise IndexError(f"state index {i} outside [0, {self.n_states})")
        out = []
        for _ in range(self.d):
            i, r = divmod(i, self.K)
            out.append(r + 1)
        return tuple(reversed(out))

    def encode_many(self, Y: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`encode` over the rows of an ``(n, d)`` array (unchecked)."""
        return (np.asarray(Y, dtype=np.int64) - 1) @ self._radix()

    def decode_many(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_states):
            raise IndexError("state index out of range")
        return (idx[..., None] // self._radix()) % self.K + 1

    def all_states(self) -> np.ndarray:
        """Every sequence as a ``(K**d, d)`` array, in index order."""
        self.check_dense()
        return self.decode_many(np.arange(self.n_states, dtype=np.int64))


def _check_same_spec(a: SpaceSpec, b: SpaceSpec) -> None:
    if a != b:
        raise SpecMismatchError(f"space mismatch: {a} vs {b}")


def num_mask(y, K: int) -> int:
    """Number of coordinates of ``y`` equal to the mask token ``K``."""
    return sum(1 for v in y if v == K)


def num_mask_many(Y: np.ndarray, K: int) -> np.ndarray:
    return (np.asarray(Y) == K).sum(axis=-1)


def hamming(y, y2) -> int:
    """Number of coordinates where ``y`` and ``y2`` differ."""
    if len(y) != len(y2):
        raise SpecMismatchError(f"lengths differ: {len(y)} vs {len(y2)}")
    return sum(1 for a, b in zip(y, y2) if a != b)


def revise(y, positions: Iterable[int], values: Iterable[int]) -> TokenSeq:
    """Copy of ``y`` with 1-based ``positions`` overwritten by ``values``."""
    positions = list(positions)
    values = list(values)
    if len(positions) != len(values):
        raise ValueError(f"{len(positions)} positions but {len(values)} values")
    if len(set(positions)) != len(positions):
        raise ValueError("positions must be distinct")
    out = list(y)
    for p, v in zip(positions, values):
        if not 1 <= p <= len(out):
            raise IndexError(f"position {p} outside 1..{len(out)}")
        out[p - 1] = int(v)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class DenseDistribution:
    """Probability vector over all ``K**d`` states, indexed by :meth:`SpaceSpec.encode`."""

    spec: SpaceSpec
    probs: np.ndarray

    def __post_init__(self):
        self.spec.check_dense()
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.spec.n_states,):
            raise SpecMismatchError(
                f"probability vector has shape {p.shape}, expected ({self.spec.n_states},)"
            )
        if (p < 0).any():
            raise ValueError("negative probability")
        total = p.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __call__(self, y) -> float:
        return float(self.probs[self.spec.encode(y)])

    @classmethod
    def point_mass(cls, spec: SpaceSpec, y) -> "DenseDistribution":
        p = np.zeros(spec.n_states)
        p[spec.encode(y)] = 1.0
        return cls(spec, p)

    def to_sparse(self) -> "SparseDistribution":
        nz = np.flatnonzero(self.probs)
        states = self.spec.decode_many(nz)
        return SparseDistribution(
            self.spec, {tuple(int(v) for v in s): float(self.probs[i]) for s, i in zip(states, nz)}
        )


class SparseDistribution:
    """Distribution given by an explicit support ``{sequence: probability}``.

    Probabilities must be positive and sum to one within ``1e-9``; a sum
    inside the tolerance is renormalised, anything further off is rejected.
    """

    def __init__(self, spec: SpaceSpec, support: Mapping):
        if not support:
            raise ValueError("empty support")
        items = {}
        for y, p in support.items():
            y = spec.validate(y)
            p = float(p)
            if not p > 0 or not math.isfinite(p):
                raise ValueError(f"support probability must be positive, got {p} for {y}")
            if y in items:
                raise ValueError(f"duplicate support point {y}")
            items[y] = p
        total = math.fsum(items.values())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"support probabilities sum to {total!r}, not 1")
        self.spec = spec
        self.support = {y: p / total for y, p in items.items()}
        self._states = np.array(list(self.support), dtype=np.int64).reshape(-1, spec.d)
        self._weights = np.array(list(self.support.values()))
        self._states.setflags(write=False)
        self._weights.setflags(write=False)

    def __repr__(self):
        return f"SparseDistribution(d={self.spec.d}, K={self.spec.K}, |support|={len(self.support)})"

    def __len__(self):
        return len(self.support)

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def mask_free(self) -> bool:
        return not (self._states == self.spec.K).any()

    def require_mask_free(self) -> None:
        """Raise if any support sequence contains the mask token."""
        if not self.mask_free:
            bad = next(y for y in self.support if self.spec.K in y)
            raise TargetFileError(f"target support contains the mask token: {bad}")

    def densify(self) -> DenseDistribution:
        self.spec.check_dense()
        p = np.zeros(self.spec.n_states)
        np.add.at(p, self.spec.encode_many(self._states), self._weights)
        return DenseDistribution(self.spec, p)

    def to_json(self) -> dict:
        return {
            "d": self.spec.d,
            "K": self.spec.K,
            "support": [{"tokens": list(y), "prob": p} for y, p in self.support.items()],
        }

    @classmethod
    def from_json(cls, obj: dict, max_states: int = DEFAULT_MAX_STATES) -> "SparseDistribution":
        try:
            spec = SpaceSpec(int(obj["d"]), int(obj["K"]), max_states=max_states)
            support = {}
            for entry in obj["support"]:
                y = tuple(int(v) for v in entry["tokens"])
                if y in support:
                    raise TargetFileError(f"duplicate support point {y}")
                support[y] = float(entry["prob"])
            dist = cls(spec, support)
        except TargetFileError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise TargetFileError(f"invalid target: {exc}") from exc
        dist.require_mask_free()
        return dist


def load_target(path, max_states: int = DEFAULT_MAX_STATES) -> SparseDistribution:
    """Read a target JSON file ``{"d", "K", "support": [{"tokens", "prob"}, ...]}``."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TargetFileError(f"{path}: not valid JSON ({exc})") from exc
    return SparseDistribution.from_json(obj, max_states=max_states)


def save_target(dist: SparseDistribution, path) -> None:
    Path(path).write_text(json.dumps(dist.to_json(), indent=2) + "\n")


def random_target(
    spec: SpaceSpec,
    n_support: int,
    rng: np.random.Generator,
    concentration: float = 1.0,
) -> SparseDistribution:
    """Mask-free target on ``n_support`` distinct sequences with Dirichlet weights."""
    n_free = (spec.K - 1) ** spec.d
    if not 1 <= n_support <= n_free:
        raise ValueError(f"n_support must be in 1..{n_free}")
    chosen = set()
    while len(chosen) < n_support:
        chosen.add(tuple(int(v) for v in rng.integers(1, spec.K, size=spec.d)))
    weights = rng.dirichlet(np.full(n_support, concentration))
    # Dirichlet draws can underflow to 0 for tiny concentrations
    weights = np.maximum(weights, 1e-12)
    weights /= weights.sum()
    return SparseDistribution(spec, dict(zip(sorted(chosen), weights)))


def unmask_neighbors(spec: SpaceSpec, idx) -> np.ndarray:
    """State indices of ``y[i: K -> k]`` for every coordinate ``i`` and token ``k < K``.

    Returns shape ``idx.shape + (d, K - 1)``. Entries are only meaningful
    where coordinate ``i`` of the source state is masked.
    """
    idx = np.asarray(idx, dtype=np.int64)
    radix = spec._radix()
    shift = (np.arange(1, spec.K, dtype=np.int64) - spec.K)[None, :] * radix[:, None]
    return idx[..., None, None] + shift
