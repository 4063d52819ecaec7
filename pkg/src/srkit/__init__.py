"""srkit: BF16 stochastic-rounding training toolkit.

Rounding kernels with bit-exact BF16 semantics, AdamW with a rounded
update step and a shared-randomness protocol for data-parallel replicas,
convergence-bound evaluators, and reproducible desk-scale experiments.
"""

from .optim import AdamWConfig, AdamWState, Schedule, adamw_step, expose_update, lr_at
from .replica import DriftReport, ReplicaGroup, group_step, reduced_gradient
from .rng import RoundRng
from .rounding import (
    Bf16,
    QuantGrid,
    quant_grid,
    round_nearest,
    round_stochastic,
    sr_up_probability,
    widen,
)
from .tensor import PrecisionPolicy, Tensor, narrow_tensor
from .theory import (
    ProblemConstants,
    corollary_ratio,
    log_sum_check,
    modified_loss,
    nr_bound,
    sample_xi,
    sr_bound,
    xi_variance,
)

__version__ = "0.1.0"

__all__ = [
    "AdamWConfig", "AdamWState", "Bf16", "DriftReport", "PrecisionPolicy",
    "ProblemConstants", "QuantGrid", "ReplicaGroup", "RoundRng", "Schedule",
    "Tensor", "adamw_step", "corollary_ratio", "expose_update", "group_step",
    "log_sum_check", "lr_at", "modified_loss", "narrow_tensor", "nr_bound",
    "quant_grid", "reduced_gradient", "round_nearest", "round_stochastic",
    "sample_xi", "sr_bound", "sr_up_probability", "widen", "xi_variance",
]
