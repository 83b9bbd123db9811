"""Exploratory annealed decoding for RLVR on synthetic tasks."""

from ._core import (
    AnnealSchedule,
    FixedSchedule,
    decay_rate,
    entropy_beta_derivative,
    load_config,
    majority_at_n,
    pass_at_k,
    schedule_trace,
    softmax,
    temperature_at,
    token_entropy,
    train,
    variance_inflation,
    verify_any_pair,
    verify_sum_mod,
    worst_at_k,
)

__all__ = [
    "AnnealSchedule",
    "FixedSchedule",
    "decay_rate",
    "entropy_beta_derivative",
    "load_config",
    "majority_at_n",
    "pass_at_k",
    "schedule_trace",
    "softmax",
    "temperature_at",
    "token_entropy",
    "train",
    "variance_inflation",
    "verify_any_pair",
    "verify_sum_mod",
    "worst_at_k",
]
