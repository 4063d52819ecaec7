"""Deterministic simulation of data-parallel replicas.

Replicas live in one process and step behind a barrier: every replica
computes its local gradient, the gradients are reduced in a fixed replica
order, and each replica applies the same optimizer step. With shared
randomness on, the stochastic update draws come from a designated
optimizer stream common to all replicas, so replica parameters stay
bit-identical forever. With it off, each replica draws from its own
stream and parameters drift apart.

Random-state scoping replaces save/restore: optimizer draws address the
optimizer stream, everything else addresses per-replica streams, and the
counter-based source makes the order of draws irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .optim import AdamWConfig, AdamWState, adamw_step
from .rng import RoundRng
from .rounding import round_nearest_f32
from .tensor import BF16, FP32, PrecisionPolicy, Tensor, narrow_tensor


@dataclass(frozen=True)
class DriftReport:
    """Cross-replica parameter divergence after one step."""

    step: int
    max_linf: float
    bit_mismatch_frac: float
    per_layer_linf: tuple[float, ...]

    @property
    def bit_identical(self) -> bool:
        return self.bit_mismatch_frac == 0.0 and self.max_linf == 0.0


def reduced_gradient(grads: Sequence[Tensor], precision: str = FP32) -> Tensor:
    """Mean of per-replica gradients, summed sequentially in replica order.

    bf16 reduction narrows after every partial sum, mirroring a low
    precision all-reduce; fp32 keeps binary32 partials. The fixed order
    makes the result independent of scheduling.
    """
    if not grads:
        raise ValueError("no gradients to reduce")
    shape = grads[0].shape
    for g in grads:
        if g.shape != shape:
            raise ValueError(f"shape mismatch in reduction: {g.shape} vs {shape}")
    acc = grads[0].data.copy()
    for g in grads[1:]:
        acc = acc + g.data
        if precision == BF16:
            acc = round_nearest_f32(acc)
    acc = acc / np.float32(len(grads))
    if precision == BF16:
        acc = round_nearest_f32(acc)
    return Tensor(acc, shape, precision, _trusted=True)


@dataclass
class ReplicaGroup:
    """M model replicas plus their optimizer states and stream layout."""

    params: list[list[Tensor]]          # [replica][tensor]
    states: list[list[AdamWState]]      # [replica][tensor]
    rng: RoundRng
    shared_randomness: bool = True
    reduction_precision: str = FP32
    step_count: int = 0

    @property
    def m(self) -> int:
        return len(self.params)

    @classmethod
    def replicate(cls, params: Sequence[Tensor], m: int, rng: RoundRng,
                  policy: PrecisionPolicy, shared_randomness: bool = True,
                  reduction_precision: str = FP32) -> "ReplicaGroup":
        """Clone one parameter set across m replicas with disjoint streams."""
        if m < 1:
            raise ValueError("replica count must be >= 1")
        reps, states = [], []
        for i in range(m):
            reps.append([Tensor(p.data, p.shape, p.storage, _trusted=True)
                         for p in params])
            states.append([
                AdamWState.init(p.shape, policy, stream=rng_mod.replica_stream(i, j))
                for j, p in enumerate(params)
            ])
        return cls(params=reps, states=states, rng=rng,
                   shared_randomness=shared_randomness,
                   reduction_precision=reduction_precision)


def _drift_report(step: int, params: list[list[Tensor]]) -> DriftReport:
    m = len(params)
    n_layers = len(params[0])
    per_layer = []
    mismatched_bits = 0
    total_bits = 0
    max_linf = 0.0
    for j in range(n_layers):
        layer_max = 0.0
        for a in range(m):
            for b in range(a + 1, m):
                da, db = params[a][j].data, params[b][j].data
                layer_max = max(layer_max, float(np.max(np.abs(da - db))) if da.size else 0.0)
                xor = da.view(np.uint32) ^ db.view(np.uint32)
                mismatched_bits += int(np.unpackbits(xor.view(np.uint8)).sum())
                total_bits += da.size * 32
        per_layer.append(layer_max)
        max_linf = max(max_linf, layer_max)
    frac = mismatched_bits / total_bits if total_bits else 0.0
    return DriftReport(step=step, max_linf=max_linf, bit_mismatch_frac=frac,
                       per_layer_linf=tuple(per_layer))


GradFn = Callable[[list[Tensor], object], tuple[float, list[Tensor]]]


def group_step(group: ReplicaGroup, batches: Sequence[object], grad_fn: GradFn,
               cfg: AdamWConfig, policy: PrecisionPolicy) -> tuple[list[float], DriftReport]:
    """One synchronized step across all replicas; returns losses and drift.

    Each replica computes gradients on its own batch via grad_fn, the
    gradients are reduced once, and every replica applies the optimizer
    step. Shared randomness swaps each tensor's stream for the common
    optimizer stream during the update only.
    """
    if len(batches) != group.m:
        raise ValueError(f"need {group.m} batches, got {len(batches)}")
    n_layers = len(group.params[0])

    losses = []
    local_grads: list[list[Tensor]] = []
    for i in range(group.m):
        try:
            loss, grads = grad_fn(group.params[i], batches[i])
        except ValueError as e:
            raise ValueError(f"replica {i}: {e}") from e
        if len(grads) != n_layers:
            raise ValueError(f"replica {i}: expected {n_layers} gradient tensors")
        if policy.gradients == BF16:
            grads = [narrow_tensor(g, "nearest") for g in grads]
        losses.append(loss)
        local_grads.append(grads)

    reduced = [
        reduced_gradient([local_grads[i][j] for i in range(group.m)],
                         group.reduction_precision)
        for j in range(n_layers)
    ]

    # With one replica the shared flag is unobservable: there is only one
    # stream either way, so keep the replica's own.
    use_opt_stream = group.shared_randomness and group.m > 1
    for i in range(group.m):
        for j in range(n_layers):
            state = group.states[i][j]
            if use_opt_stream:
                state = AdamWState(m=state.m, v=state.v, t=state.t,
                                   stream=rng_mod.opt_stream(j))
            try:
                new_p, new_s = adamw_step(group.params[i][j], reduced[j], state,
                                          cfg, policy, group.rng)
            except (ValueError, RuntimeError) as e:
                raise type(e)(f"replica {i}, tensor {j}: {e}") from e
            # keep the replica's own stream id on record either way
            group.states[i][j] = AdamWState(
                m=new_s.m, v=new_s.v, t=new_s.t,
                stream=group.states[i][j].stream)
            group.params[i][j] = new_p

    group.step_count += 1
    return losses, _drift_report(group.step_count, group.params)
