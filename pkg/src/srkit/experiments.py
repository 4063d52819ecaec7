"""Runnable desk-scale experiments with CSV/manifest output.

Five experiment kinds:

- ``hitting_time``: random walk between two quantization levels with a
  half-step warmup and then tiny updates; compares the empirical first
  passage to the closed form 3/2 + 1/(4*eps).
- ``linear_loss``: Adam on a capped linear ramp with a decaying learning
  rate; measures steps until the flat region is reached under fp32 vs
  stochastically rounded bf16 updates.
- ``correlation``: the additive-noise model of gradient correlation
  across time; rounding noise dilutes the shared component.
- ``micro_train``: policy-by-learning-rate grid on a built-in task,
  trained through the replica group.
- ``ablation``: state-precision sweep (gradients, first and second
  moment) with the stochastic update rule held fixed.

Every experiment is a pure function of (spec, seed): metrics rerun to
byte-identical CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import rng as rng_mod
from .models import make_task
from .optim import AdamWConfig, AdamWState, Schedule, adamw_step, lr_at
from .replica import ReplicaGroup, group_step
from .rng import RoundRng
from .tensor import BF16, FP32, PrecisionPolicy, Tensor

KINDS = ("hitting_time", "linear_loss", "correlation", "micro_train", "ablation")

CSV_HEADER = ("experiment", "repetition", "step", "metric", "value")

POLICIES = {
    "bf16_sr": PrecisionPolicy.bf16_sr,
    "bf16_nr": PrecisionPolicy.bf16_nr,
    "fp32_master": PrecisionPolicy.fp32_master,
}


@dataclass(frozen=True)
class MetricsRecord:
    """One long-format metrics row."""

    experiment: str
    repetition: int
    step: int
    metric: str
    value: float


class SpecError(ValueError):
    """Invalid experiment spec; message carries the offending field path."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    seed: int = 0
    repetitions: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind: unknown experiment {self.kind!r}; choose from {KINDS}")
        if self.repetitions < 1:
            raise SpecError("repetitions: must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise SpecError("spec: expected a JSON object")
        unknown = set(d) - {"kind", "seed", "repetitions", "params"}
        if unknown:
            raise SpecError(f"spec: unknown fields {sorted(unknown)}")
        if "kind" not in d:
            raise SpecError("kind: required")
        return cls(kind=d["kind"], seed=int(d.get("seed", 0)),
                   repetitions=int(d.get("repetitions", 1)),
                   params=dict(d.get("params", {})))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed,
                "repetitions": self.repetitions, "params": self.params}


def _param(params: dict, name: str, default=None, required=False):
    if name not in params:
        if required:
            raise SpecError(f"params.{name}: required")
        return default
    return params[name]


# -- hitting time -------------------------------------------------------------

@dataclass(frozen=True)
class HittingTimeResult:
    empirical_mean: float
    analytic_mean: float
    hits: np.ndarray  # per-repetition first-passage step

    @property
    def mc_sigma(self) -> float:
        return float(self.hits.std(ddof=1) / math.sqrt(len(self.hits)))


def hitting_time_analytic(eps: float) -> float:
    """Closed-form expected first passage: 1.5 + 1/(4*eps).

    Derivation: the two half-steps reach the next level by step 2 with
    probability 3/4; otherwise a geometric tail with success rate eps
    starts at step 3. Summing n * P(T = n) gives 3/2 + 1/(4 eps).
    """
    return 1.5 + 0.25 / eps


def hitting_time(eps: float, repetitions: int, rng: RoundRng,
                 max_steps: int = 10_000_000) -> HittingTimeResult:
    """Simulate the unit-grid walk: updates 1/2, 1/2, then eps forever."""
    if not 0.0 < eps <= 0.5:
        raise SpecError("params.eps: must be in (0, 0.5]")
    if repetitions < 1:
        raise SpecError("repetitions: must be >= 1")
    alive = np.ones(repetitions, dtype=bool)
    hits = np.zeros(repetitions, dtype=np.int64)
    # x stays 0 until a draw succeeds; success probability is the update
    # size over the unit resolution
    for t in range(1, max_steps + 1):
        if not alive.any():
            break
        p = 0.5 if t <= 2 else eps
        u = rng.uniform_array(rng_mod.data_stream(100), t, np.arange(repetitions))
        crossed = alive & (u < p)
        hits[crossed] = t
        alive &= ~crossed
    if alive.any():
        raise RuntimeError("hitting_time: walk did not terminate")
    return HittingTimeResult(empirical_mean=float(hits.mean()),
                             analytic_mean=hitting_time_analytic(eps), hits=hits)


# -- linear loss --------------------------------------------------------------

# Schedule constants chosen so the reference fp32 run crosses the flat
# region near step 4600 with a 1e-5 floor; the floor-clipped cosine keeps
# the decay body identical when only the floor changes.
LINEAR_LOSS_MAX_LR = 4.0033e-4
LINEAR_LOSS_DECAY_STEPS = 5000


@dataclass(frozen=True)
class LinearLossResult:
    steps: np.ndarray          # per-repetition steps to reach x >= 3
    diverged: np.ndarray       # per-repetition divergence flag

    @property
    def mean_steps(self) -> float:
        return float(self.steps[~self.diverged].mean())


def linear_loss_adam(min_lr: float, x0: float, policy: PrecisionPolicy,
                     repetitions: int, rng: RoundRng,
                     max_lr: float = LINEAR_LOSS_MAX_LR,
                     decay_steps: int = LINEAR_LOSS_DECAY_STEPS,
                     max_steps: int = 200_000) -> LinearLossResult:
    """Steps until Adam exits the ramp f(x) = -(x-2)+1 (flat past x = 3).

    The loss gradient is -1 left of 3 and 0 after, so each repetition is
    an independent scalar Adam run; they are stepped as one vector.
    """
    if x0 >= 3:
        raise SpecError("params.x0: must be < 3")
    if min_lr <= 0:
        raise SpecError("params.min_lr: must be positive")
    cfg = AdamWConfig(alpha=max_lr, beta1=0.9, beta2=0.95, eps=1e-8,
                      schedule=Schedule.cosine_floor(max_lr, min_lr, decay_steps))
    x = Tensor.from_array(np.full(repetitions, x0), storage=policy.weights)
    state = AdamWState.init((repetitions,), policy, stream=rng_mod.opt_stream(0))
    hits = np.zeros(repetitions, dtype=np.int64)
    diverged = np.zeros(repetitions, dtype=bool)
    for t in range(1, max_steps + 1):
        live = (x.np < 3.0) & ~diverged
        if not live.any():
            break
        g = np.where(live, -1.0, 0.0).astype(np.float32)
        x, state = adamw_step(x, Tensor.from_array(g), state, cfg, policy, rng)
        bad = ~np.isfinite(x.np)
        diverged |= bad & (hits == 0)
        crossed = (x.np >= 3.0) & (hits == 0) & ~diverged
        hits[crossed] = t
    unfinished = (hits == 0) & ~diverged
    hits[unfinished] = max_steps
    return LinearLossResult(steps=hits, diverged=diverged)


# -- correlation --------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationResult:
    empirical: float
    empirical_sr: float
    analytic: float
    analytic_sr: float


def correlation_experiment(rho: float, delta: float, d: int, horizon: int,
                           repetitions: int, rng: RoundRng) -> CorrelationResult:
    """Time-domain gradient correlation with and without rounding noise.

    Gradients share a persistent component of scale rho across time plus a
    fresh component per step; rounding noise adds an independent term of
    scale delta. All three are symmetric two-point variables, matching the
    idealized model. Correlation across distinct steps is estimated over
    all (repetition, dimension) pairs.
    """
    if rho < 0 or delta < 0:
        raise SpecError("params.rho/delta: must be nonnegative")
    n = repetitions * d
    g1 = rho * _bern(rng, 200, 0, n)                      # persistent across time
    cors, cors_sr = [], []
    gs, gs_sr = [], []
    for t in range(horizon):
        g2 = _bern(rng, 201, t, n)
        xi = delta * _bern(rng, 202, t, n)
        gs.append(g1 + g2)
        gs_sr.append(g1 + g2 + xi)
    for series, out in ((gs, cors), (gs_sr, cors_sr)):
        mat = np.stack(series)  # (T, n)
        for a in range(horizon):
            for b in range(a + 1, horizon):
                out.append(_pearson(mat[a], mat[b]))
    return CorrelationResult(
        empirical=float(np.mean(cors)), empirical_sr=float(np.mean(cors_sr)),
        analytic=rho**2 / (1 + rho**2),
        analytic_sr=rho**2 / (1 + rho**2 + delta**2))


def _bern(rng: RoundRng, tag: int, step: int, n: int) -> np.ndarray:
    u = rng.uniform_array(rng_mod.data_stream(tag), step, np.arange(n))
    return (u < 0.5).astype(np.float64)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    return float((a * b).sum() / denom) if denom else 0.0


# -- micro training -----------------------------------------------------------

def _resolve_policy(name: str) -> PrecisionPolicy:
    if name not in POLICIES:
        raise SpecError(f"params.policies: unknown policy {name!r}; "
                        f"choose from {sorted(POLICIES)}")
    return POLICIES[name]()


def _train_cell(task, policy: PrecisionPolicy, lr: float, seed: int, steps: int,
                replicas: int, warmup: int, min_lr_frac: float, weight_decay: float,
                eval_every: int, experiment: str, repetition: int,
                records: list[MetricsRecord], reduction_precision: str = FP32,
                shared_randomness: bool = True) -> float:
    warmup = min(warmup, steps // 4)
    cfg = AdamWConfig(alpha=lr, weight_decay=weight_decay,
                      schedule=Schedule.cosine(lr, lr * min_lr_frac, warmup, steps))
    rng = RoundRng(seed)
    group = ReplicaGroup.replicate(task.init_params(policy.weights), replicas, rng,
                                   policy, shared_randomness=shared_randomness,
                                   reduction_precision=reduction_precision)
    diverged_run = 0
    for step in range(steps):
        losses, drift = group_step(group, task.make_batches(step, replicas),
                                   task.grad_fn, cfg, policy)
        loss = float(np.mean(losses))
        if not math.isfinite(loss):
            diverged_run = 1
            records.append(MetricsRecord(experiment, repetition, step, "diverged", 1.0))
            break
        if step % eval_every == 0 or step == steps - 1:
            records.append(MetricsRecord(experiment, repetition, step, "loss", loss))
            records.append(MetricsRecord(experiment, repetition, step, "val_loss",
                                         task.val_loss(group.params[0])))
            records.append(MetricsRecord(experiment, repetition, step, "lr",
                                         lr_at(cfg, step + 1)))
            records.append(MetricsRecord(experiment, repetition, step,
                                         "max_linf_drift", drift.max_linf))
            records.append(MetricsRecord(experiment, repetition, step,
                                         "bit_mismatch_frac", drift.bit_mismatch_frac))
    final = task.val_loss(group.params[0]) if not diverged_run else float("nan")
    records.append(MetricsRecord(experiment, repetition, steps, "final_val_loss", final))
    return final


def micro_train(spec: ExperimentSpec) -> list[MetricsRecord]:
    p = spec.params
    task_name = _param(p, "task", "char_lm")
    policies = _param(p, "policies", ["fp32_master", "bf16_nr", "bf16_sr"])
    lr_grid = _param(p, "lr_grid", [1e-3])
    sr_lr_mult = float(_param(p, "sr_lr_mult", 1.0))
    steps = int(_param(p, "steps", 1200))
    replicas = int(_param(p, "replicas", 1))
    warmup = int(_param(p, "warmup", 50))
    reduction = _param(p, "reduction_precision", FP32)
    shared = bool(_param(p, "shared_randomness", True))
    if reduction not in (BF16, FP32):
        raise SpecError("params.reduction_precision: must be 'bf16' or 'fp32'")
    task_kwargs = dict(_param(p, "task_kwargs", {}))
    records: list[MetricsRecord] = []
    for rep in range(spec.repetitions):
        for pol_name in policies:
            policy = _resolve_policy(pol_name)
            for lr in lr_grid:
                lr_eff = lr * sr_lr_mult if pol_name == "bf16_sr" else lr
                task = make_task(task_name, **task_kwargs)
                cell = f"micro_train/{task_name}/{pol_name}/lr={lr_eff:g}"
                _train_cell(task, policy, lr_eff, seed=spec.seed + rep, steps=steps,
                            replicas=replicas, warmup=warmup, min_lr_frac=0.1,
                            weight_decay=float(_param(p, "weight_decay", 0.01)),
                            eval_every=int(_param(p, "eval_every", 50)),
                            experiment=cell, repetition=rep, records=records,
                            reduction_precision=reduction, shared_randomness=shared)
    return records


def ablation_grid(spec: ExperimentSpec) -> list[MetricsRecord]:
    p = spec.params
    task_name = _param(p, "task", "char_lm")
    lr = float(_param(p, "lr", 3e-3))
    steps = int(_param(p, "steps", 1200))
    task_kwargs = dict(_param(p, "task_kwargs", {}))
    records: list[MetricsRecord] = []
    base = PrecisionPolicy.bf16_sr()
    for rep in range(spec.repetitions):
        for g in (BF16, FP32):
            for m1 in (BF16, FP32):
                for m2 in (BF16, FP32):
                    policy = base.with_states(gradients=g, moment1=m1, moment2=m2)
                    task = make_task(task_name, **task_kwargs)
                    cell = f"ablation/{task_name}/g={g},m={m1},v={m2}"
                    _train_cell(task, policy, lr, seed=spec.seed + rep, steps=steps,
                                replicas=1, warmup=50, min_lr_frac=0.1,
                                weight_decay=float(_param(p, "weight_decay", 0.01)),
                                eval_every=max(steps // 4, 1), experiment=cell,
                                repetition=rep, records=records)
    return records


# -- dispatcher and serialization ---------------------------------------------

def run_experiment(spec: ExperimentSpec) -> list[MetricsRecord]:
    rng = RoundRng(spec.seed)
    if spec.kind == "hitting_time":
        eps = float(_param(spec.params, "eps", required=True))
        res = hitting_time(eps, spec.repetitions, rng)
        recs = [MetricsRecord("hitting_time", r, 0, "hit_step", float(s))
                for r, s in enumerate(res.hits.tolist())]
        recs.append(MetricsRecord("hitting_time", 0, 0, "analytic_mean",
                                  res.analytic_mean))
        return recs

    if spec.kind == "linear_loss":
        min_lr = float(_param(spec.params, "min_lr", 1e-5))
        x0 = float(_param(spec.params, "x0", 2.0))
        policy = _resolve_policy(_param(spec.params, "policy", "bf16_sr"))
        res = linear_loss_adam(
            min_lr, x0, policy, spec.repetitions, rng,
            max_lr=float(_param(spec.params, "max_lr", LINEAR_LOSS_MAX_LR)),
            decay_steps=int(_param(spec.params, "decay_steps",
                                   LINEAR_LOSS_DECAY_STEPS)))
        recs = []
        for r, (s, dv) in enumerate(zip(res.steps.tolist(), res.diverged.tolist())):
            recs.append(MetricsRecord("linear_loss", r, 0, "steps_to_converge", float(s)))
            if dv:
                recs.append(MetricsRecord("linear_loss", r, 0, "diverged", 1.0))
        return recs

    if spec.kind == "correlation":
        p = spec.params
        res = correlation_experiment(
            float(_param(p, "rho", required=True)), float(_param(p, "delta", required=True)),
            int(_param(p, "d", 1000)), int(_param(p, "horizon", 8)),
            spec.repetitions, rng)
        return [MetricsRecord("correlation", 0, 0, k, v) for k, v in
                (("corr", res.empirical), ("corr_sr", res.empirical_sr),
                 ("analytic_corr", res.analytic), ("analytic_corr_sr", res.analytic_sr))]

    if spec.kind == "micro_train":
        return micro_train(spec)
    if spec.kind == "ablation":
        return ablation_grid(spec)
    raise SpecError(f"kind: unknown experiment {spec.kind!r}")  # pragma: no cover


def records_to_csv(records: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.experiment, r.repetition, r.step, r.metric, repr(r.value)])
    return buf.getvalue()


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_run(spec: ExperimentSpec, records: list[MetricsRecord], out_dir: str | Path
              ) -> tuple[Path, Path]:
    """Write metrics.csv and manifest.json atomically; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    manifest_path = out / "manifest.json"
    _atomic_write(csv_path, records_to_csv(records))
    manifest = {"spec": spec.to_dict(), "rows": len(records),
                "csv_schema": list(CSV_HEADER)}
    _atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path, manifest_path
