"""Unbiased low-rank matrix approximation with minimum expected distortion."""

from .linalg import (
    SvdFactors,
    SVDConvergenceError,
    frobenius_dist_sq,
    frobenius_norm_sq,
    reconstruct,
    svd,
    truncate_rank,
)
from .oracle import (
    DistortionReport,
    OutcomeTable,
    VerificationError,
    distortion_report,
    empirical_distortion,
    empirical_unbiasedness,
    enumerate_outcomes,
    expected_distortion_closed_form,
    lower_bound,
    verify_optimality,
)
from .sampler import (
    LowRankSample,
    LowRankSampler,
    SamplingPlan,
    assemble_sample,
    build_plan,
    draw_uniform,
    heavy_split,
    make_rng,
    sample_low_rank,
    systematic_select,
)

__version__ = "0.1.0"
