"""Finite-sample unbiased instrumental-variables estimation under a known first-stage sign."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfidenceSet,
    InstrumentBlock,
    ReducedFormStats,
    ar_confidence_set,
    beta_2sls_single,
    beta_fuller,
    beta_u,
    delta_hat,
    first_stage_f,
    tau_hat,
)
from .exceptions import ConditioningError, DataError, DegenerateError, DomainError  # noqa: E402
from .multi import (  # noqa: E402
    RbEstimate,
    WeightSpec,
    beta_2sls_multi,
    beta_rb,
    beta_rb_c,
    beta_w,
    robust_transform,
)
from .normal import mills_ratio, std_normal_cdf, std_normal_pdf  # noqa: E402

__all__ = [
    "ConfidenceSet",
    "InstrumentBlock",
    "ReducedFormStats",
    "ar_confidence_set",
    "beta_2sls_single",
    "beta_fuller",
    "beta_u",
    "delta_hat",
    "first_stage_f",
    "tau_hat",
    "ConditioningError",
    "DataError",
    "DegenerateError",
    "DomainError",
    "RbEstimate",
    "WeightSpec",
    "beta_2sls_multi",
    "beta_rb",
    "beta_rb_c",
    "beta_w",
    "robust_transform",
    "mills_ratio",
    "std_normal_cdf",
    "std_normal_pdf",
]
