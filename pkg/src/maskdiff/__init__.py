"""Masked (absorbing) discrete diffusion on enumerable token spaces.

Exact forward kernels and scores, reverse-time Euler samplers, and
mask-aware truncated uniformization (MATU), with score-call accounting.
"""

__version__ = "0.1.0"

from .estimators import EulerSampler, MATUSampler, UniformizationSampler
from .exceptions import (
    DenseCapError,
    MaskDiffError,
    RateBoundViolation,
    ScheduleError,
    SpecMismatchError,
    TargetFileError,
    ZeroProbabilityError,
)
from .forward import (
    kernel_prob,
    kl_init_gap,
    marginal_at,
    mask_count_law,
    rate_forward,
    sample_forward,
    tilde_init,
    tilde_sample,
)
from .metrics import empirical_distribution, kl_divergence, tv_distance
from .reverse import ReverseRateView, TruncationContext, beta_bound
from .samplers import (
    RunReport,
    SamplerSchedule,
    default_schedule,
    euler_parallel_run,
    euler_sequential_run,
    matu_run,
    run_chains,
    score_call_bound,
    uniformization_run,
)
from .score import (
    ExactScoreOracle,
    PerturbedScoreOracle,
    dis_score_entropy_loss,
    perturbed_score,
    score_entropy_loss,
)
from .state_space import (
    DenseDistribution,
    SpaceSpec,
    SparseDistribution,
    hamming,
    load_target,
    num_mask,
    revise,
)
from .experiment import ExperimentConfig, ResultRow, replay, run_experiment

import types as _types

__all__ = [n for n, v in dict(globals()).items() if not n.startswith("_") and not isinstance(v, _types.ModuleType)]
