"""AdamW with a rounded update step, parameterized by precision policy.

One code path serves three variants: stochastically rounded bf16 updates,
nearest-rounded bf16 updates, and fp32 master weights (no rounding). The
moment recurrences and the update direction are identical across the
three; only the final quantization of ``x - (lr * direction + lr * wd * x)``
differs. Stochastic updates draw from a counter address
``(state.stream, step, element)`` so that replicas sharing a stream make
identical draws.

Moments are stored in the policy's precision using nearest rounding; the
stochastic draw is spent only on the weight update itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RoundRng
from .tensor import (
    BF16,
    FP32,
    NEAREST,
    NONE,
    STOCHASTIC,
    PrecisionPolicy,
    Tensor,
    load_tensor,
    narrow_tensor,
    save_tensor,
)

EPS_OUTSIDE = "outside"  # denom = sqrt(v / (1 - b2^t)) + eps  (AdamW convention)
EPS_INSIDE = "inside"    # denom = sqrt(v / (1 - b2^t) + eps)


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: constant, cosine with warmup, or the
    square-root ramp that folds the second-moment bias correction into
    the step size (used by the convergence-bound analysis)."""

    kind: str = "constant"
    max_lr: float = 0.0
    min_lr: float = 0.0
    warmup: int = 0
    total: int = 0

    @classmethod
    def constant(cls) -> "Schedule":
        return cls(kind="constant")

    @classmethod
    def cosine(cls, max_lr: float, min_lr: float, warmup: int, total: int) -> "Schedule":
        if not (0 < min_lr <= max_lr and 0 <= warmup < total):
            raise ValueError("invalid cosine schedule parameters")
        return cls(kind="cosine", max_lr=max_lr, min_lr=min_lr, warmup=warmup, total=total)

    @classmethod
    def cosine_floor(cls, max_lr: float, min_lr: float, total: int) -> "Schedule":
        """Cosine decay from max_lr toward zero, clipped below at min_lr.

        Unlike :meth:`cosine`, the floor does not reshape the decay body;
        it only decides where the tail flattens out.
        """
        if not (0 < min_lr <= max_lr and total > 0):
            raise ValueError("invalid cosine_floor schedule parameters")
        return cls(kind="cosine_floor", max_lr=max_lr, min_lr=min_lr, total=total)

    @classmethod
    def moment_ramp(cls) -> "Schedule":
        """alpha_t = alpha * sqrt((1 - beta2^t) / (1 - beta2))."""
        return cls(kind="moment_ramp")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "max_lr": self.max_lr, "min_lr": self.min_lr,
                "warmup": self.warmup, "total": self.total}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(**d)


@dataclass(frozen=True)
class AdamWConfig:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.0
    schedule: Schedule = field(default_factory=Schedule.constant)
    eps_mode: str = EPS_OUTSIDE

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must be in [0, 1)")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta2 must be in [0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        if self.eps_mode not in (EPS_OUTSIDE, EPS_INSIDE):
            raise ValueError(f"eps_mode must be '{EPS_OUTSIDE}' or '{EPS_INSIDE}'")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "weight_decay": self.weight_decay,
                "schedule": self.schedule.to_dict(), "eps_mode": self.eps_mode}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamWConfig":
        d = dict(d)
        d["schedule"] = Schedule.from_dict(d["schedule"])
        return cls(**d)


def lr_at(cfg: AdamWConfig, t: int) -> float:
    """Scheduled learning rate at step t (t >= 1)."""
    if t < 1:
        raise ValueError("step index starts at 1")
    s = cfg.schedule
    if s.kind == "constant":
        return cfg.alpha
    if s.kind == "moment_ramp":
        return cfg.alpha * math.sqrt((1.0 - cfg.beta2**t) / (1.0 - cfg.beta2))
    if s.kind == "cosine":
        if t <= s.warmup:
            return s.max_lr * t / s.warmup if s.warmup > 0 else s.max_lr
        if t >= s.total:
            return s.min_lr
        frac = (t - s.warmup) / (s.total - s.warmup)
        return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + math.cos(math.pi * frac))
    if s.kind == "cosine_floor":
        if t >= s.total:
            return s.min_lr
        return max(s.min_lr, 0.5 * s.max_lr * (1.0 + math.cos(math.pi * t / s.total)))
    raise ValueError(f"unknown schedule kind {s.kind!r}")


@dataclass
class AdamWState:
    """Per-parameter-tensor state: moments, step counter, SR stream id."""

    m: Tensor
    v: Tensor
    t: int
    stream: int

    @classmethod
    def init(cls, shape, policy: PrecisionPolicy, stream: int) -> "AdamWState":
        return cls(m=Tensor.zeros(shape, policy.moment1),
                   v=Tensor.zeros(shape, policy.moment2), t=0, stream=stream)


def _check_grads(grads: Tensor) -> None:
    bad = ~np.isfinite(grads.data)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite gradient at element {idx}: {grads.data[idx]!r}")


def _new_moments(grads: Tensor, state: AdamWState, cfg: AdamWConfig,
                 policy: PrecisionPolicy) -> tuple[Tensor, Tensor]:
    g = narrow_tensor(grads, NEAREST) if policy.gradients == BF16 else grads.astype(FP32)
    m = state.m.mul(cfg.beta1, storage=FP32).add(g.mul(1.0 - cfg.beta1, storage=FP32),
                                                 storage=policy.moment1)
    v = state.v.mul(cfg.beta2, storage=FP32).add(
        g.square(storage=FP32).mul(1.0 - cfg.beta2, storage=FP32),
        storage=policy.moment2)
    if (v.data < 0).any():
        raise RuntimeError("second moment went negative (internal invariant breach)")
    return m, v


def _direction(m: Tensor, v: Tensor, t: int, cfg: AdamWConfig,
               policy: PrecisionPolicy) -> Tensor:
    """Bias-corrected update direction mhat / denom (no lr, no decay)."""
    ua = policy.update_arithmetic
    mhat = m.div(1.0 - cfg.beta1**t, storage=ua)
    vhat = v.div(1.0 - cfg.beta2**t, storage=ua)
    if cfg.eps_mode == EPS_OUTSIDE:
        denom = vhat.sqrt(storage=ua).add(cfg.eps, storage=ua)
    else:
        denom = vhat.add(cfg.eps, storage=ua).sqrt(storage=ua)
    return mhat.div(denom, storage=ua)


def expose_update(params: Tensor, grads: Tensor, state: AdamWState, cfg: AdamWConfig,
                  policy: PrecisionPolicy | None = None) -> Tensor:
    """Pre-rounding update direction for the upcoming step; pure.

    Identical for every choice of update rounding given the same inputs,
    since rounding only enters after the direction is formed.
    """
    policy = policy or PrecisionPolicy.fp32_master()
    _check_grads(grads)
    m, v = _new_moments(grads, state, cfg, policy)
    return _direction(m, v, state.t + 1, cfg, policy)


def adamw_step(params: Tensor, grads: Tensor, state: AdamWState, cfg: AdamWConfig,
               policy: PrecisionPolicy, rng: RoundRng) -> tuple[Tensor, AdamWState]:
    """One optimizer step; returns new params and state with t advanced."""
    if params.shape != grads.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    if state.t < 0:
        raise ValueError("state.t must be nonnegative")
    _check_grads(grads)

    t = state.t + 1
    m, v = _new_moments(grads, state, cfg, policy)
    u = _direction(m, v, t, cfg, policy)

    alpha_t = lr_at(cfg, t)
    ua = policy.update_arithmetic
    delta = u.mul(alpha_t, storage=ua)
    if cfg.weight_decay:
        delta = delta.add(params.mul(alpha_t * cfg.weight_decay, storage=ua), storage=ua)
    target = params.sub(delta, storage=FP32)

    if policy.update_rounding == NONE:
        new_params = target.astype(policy.weights)
    elif policy.update_rounding == NEAREST:
        new_params = narrow_tensor(target, NEAREST).astype(policy.weights)
    elif policy.update_rounding == STOCHASTIC:
        rounded = narrow_tensor(target, STOCHASTIC, rng, stream=state.stream, step=t)
        new_params = rounded.astype(policy.weights)
    else:  # pragma: no cover - policy validation forbids this
        raise ValueError(policy.update_rounding)

    return new_params, AdamWState(m=m, v=v, t=t, stream=state.stream)


# -- checkpointing ----------------------------------------------------------

def save_optimizer_state(state: AdamWState, cfg: AdamWConfig, policy: PrecisionPolicy,
                         prefix: str | Path) -> None:
    prefix = Path(prefix)
    save_tensor(state.m, Path(str(prefix) + ".m.bin"))
    save_tensor(state.v, Path(str(prefix) + ".v.bin"))
    header = {"t": state.t, "stream": state.stream, "cfg": cfg.to_dict(),
              "policy": policy.to_dict()}
    Path(str(prefix) + ".json").write_text(json.dumps(header, indent=2))


def load_optimizer_state(prefix: str | Path) -> tuple[AdamWState, AdamWConfig, PrecisionPolicy]:
    prefix = Path(prefix)
    header = json.loads(Path(str(prefix) + ".json").read_text())
    m = load_tensor(Path(str(prefix) + ".m.bin"))
    v = load_tensor(Path(str(prefix) + ".v.bin"))
    state = AdamWState(m=m, v=v, t=header["t"], stream=header["stream"])
    return state, AdamWConfig.from_dict(header["cfg"]), PrecisionPolicy.from_dict(header["policy"])
