"""Scikit-learn style wrappers: ``fit`` a target law, then ``sample`` from it.

The fitted target is the empirical distribution of the training sequences
(or a :class:`SparseDistribution` passed directly). Sampling runs the
reverse masked process driven by the exact score of that target,
optionally corrupted by multiplicative log-normal noise.

>>> import numpy as np
>>> X = np.array([[1, 2], [2, 1], [1, 2]])
>>> est = MATUSampler(K=3, epsilon=0.5, random_state=0).fit(X)
>>> est.sample(4).shape
(4, 2)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .samplers import SamplerSchedule, default_schedule, run_chains
from .score import ExactScoreOracle, PerturbedScoreOracle
from .state_space import SparseDistribution
from .validation import (
    check_epsilon,
    check_optional_positive,
    check_positive_int,
    target_from_samples,
)


class _ReverseSampler(BaseEstimator):
    _sampler = ""

    def __init__(
        self,
        K=None,
        epsilon=0.5,
        T=None,
        delta=None,
        eta=None,
        h=None,
        sigma=0.0,
        batch_size=65536,
        random_state=None,
    ):
        self.K = K
        self.epsilon = epsilon
        self.T = T
        self.delta = delta
        self.eta = eta
        self.h = h
        self.sigma = sigma
        self.batch_size = batch_size
        self.random_state = random_state

    def _schedule(self, spec) -> SamplerSchedule:
        eps = check_epsilon(self.epsilon)
        base = default_schedule(eps, spec)
        T = check_optional_positive(self.T, "T") or base.T
        delta = check_optional_positive(self.delta, "delta") or base.delta
        span = T - delta
        eta = check_optional_positive(self.eta, "eta")
        h = check_optional_positive(self.h, "h")
        if eta is None:
            eta = span / max(1, round(span / base.eta))
        if h is None:
            h = span / max(1, round(span / base.h))
        return SamplerSchedule(T=T, delta=delta, eta=eta, h=h)

    def fit(self, X, y=None, sample_weight=None):
        """Fit the target law.

        Parameters
        ----------
        X : array of shape (n_samples, d) with tokens in ``1..K-1``, or a
            :class:`SparseDistribution`.
        y : ignored.
        sample_weight : array of shape (n_samples,), optional.
        """
        if isinstance(X, SparseDistribution):
            if sample_weight is not None:
                raise ValueError("sample_weight cannot be combined with a distribution")
            if self.K is not None and self.K != X.spec.K:
                raise ValueError(f"K={self.K} but the distribution has K={X.spec.K}")
            X.require_mask_free()
            target = X
        else:
            target = target_from_samples(X, self.K, sample_weight)
        if self.sigma is None or self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")
        check_positive_int(self.batch_size, "batch_size")
        self.target_ = target
        self.spec_ = target.spec
        self.n_features_in_ = target.spec.d
        self.schedule_ = self._schedule(target.spec)
        exact = ExactScoreOracle(target, self.schedule_.T)
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else 0
        self.oracle_ = exact if self.sigma == 0 else PerturbedScoreOracle(exact, self.sigma, seed=int(seed))
        self._calls = 0
        return self

    def _seed(self, random_state):
        rs = self.random_state if random_state is None else random_state
        if rs is None:
            # fresh entropy each call, like an unseeded numpy generator
            return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
        if isinstance(rs, np.random.Generator):
            return int(rs.integers(2**63))
        if isinstance(rs, np.random.RandomState):
            return int(rs.randint(2**31))
        return int(rs) + self._calls

    def sample(self, n_samples=1, random_state=None):
        """Draw ``n_samples`` sequences; the run's counters are kept in ``last_report_``.

        With an integer ``random_state`` on the estimator, successive calls
        use successive seeds so they return different draws while a refit
        restarts the sequence.
        """
        check_is_fitted(self, "oracle_")
        n = check_positive_int(n_samples, "n_samples")
        seed = self._seed(random_state)
        if random_state is None:
            self._calls += 1
        self.last_report_ = run_chains(
            self._sampler, self.oracle_, self.schedule_, n, seed=seed, batch_size=self.batch_size
        )
        return self.last_report_.final.copy()


class MATUSampler(_ReverseSampler):
    """Mask-aware truncated uniformization (starts from the all-mask sequence)."""

    _sampler = "matu"


class UniformizationSampler(_ReverseSampler):
    """Plain uniformization with the mask-count bound and no rate truncation."""

    _sampler = "unif"


class EulerSampler(_ReverseSampler):
    """Euler discretisation of the reverse chain, initialised from the factorised law.

    ``mode="sequential"`` changes at most one coordinate per step;
    ``mode="parallel"`` updates every masked coordinate independently.
    """

    def __init__(
        self,
        K=None,
        epsilon=0.5,
        mode="sequential",
        T=None,
        delta=None,
        eta=None,
        h=None,
        sigma=0.0,
        batch_size=65536,
        random_state=None,
    ):
        super().__init__(
            K=K, epsilon=epsilon, T=T, delta=delta, eta=eta, h=h, sigma=sigma,
            batch_size=batch_size, random_state=random_state,
        )
        self.mode = mode

    @property
    def _sampler(self):
        modes = {"sequential": "euler_seq", "parallel": "euler_par"}
        if self.mode not in modes:
            raise ValueError(f"mode must be 'sequential' or 'parallel', got {self.mode!r}")
        return modes[self.mode]
