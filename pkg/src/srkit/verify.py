"""Self-check suites behind the ``verify`` subcommand.

Each suite runs a fixed-seed batch of property checks over one subsystem
and reports machine-readable results. A check calls into the public API
exactly the way tests do; the suites exist so a build can be validated
from the command line without a test harness.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import theory
from .experiments import correlation_experiment, hitting_time
from .models import make_task
from .optim import AdamWConfig, AdamWState, adamw_step, expose_update
from .replica import ReplicaGroup, group_step, reduced_gradient
from .rng import RoundRng
from .rounding import (
    bf16_values_sorted,
    quant_grid_f32,
    round_nearest_f32,
    round_stochastic_f32,
    sr_up_probability_f32,
)
from .tensor import BF16, FP32, PrecisionPolicy, Tensor

SUITES = ("rounding", "optimizer", "lemmas", "bounds", "replica")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_f32(rng: np.random.Generator, n: int, lo_exp=-30, hi_exp=30) -> np.ndarray:
    mags = np.exp2(rng.uniform(lo_exp, hi_exp, n))
    return (np.sign(rng.normal(size=n)) * mags).astype(np.float32)


# -- rounding ----------------------------------------------------------------

def _check_nearest_reference(seed: int) -> CheckResult:
    table = bf16_values_sorted()
    rng = np.random.default_rng(seed)
    xs = _random_f32(rng, 50_000)
    got = round_nearest_f32(xs).astype(np.float64)
    idx = np.searchsorted(table, xs.astype(np.float64))
    lo = table[np.clip(idx - 1, 0, len(table) - 1)]
    hi = table[np.clip(idx, 0, len(table) - 1)]
    on = table[np.clip(idx, 0, len(table) - 1)] == xs.astype(np.float64)
    best = np.where(np.abs(xs - lo) <= np.abs(hi - xs), lo, hi)
    # ties are measure-zero under this sampler; exact table value wins when on-grid
    expect = np.where(on, xs.astype(np.float64), best)
    ok = np.array_equal(got, expect)
    return CheckResult("nearest_matches_table_reference", ok,
                       f"{len(xs)} random values")


def _check_sr_frequency(seed: int) -> CheckResult:
    rng = RoundRng(seed)
    np_rng = np.random.default_rng(seed + 1)
    xs = _random_f32(np_rng, 64, -8, 8)
    n = 20_000
    worst = 0.0
    for i, x in enumerate(xs.tolist()):
        y = round_stochastic_f32(np.full(n, x, dtype=np.float32), rng, 50, i)
        _, ceil, res = quant_grid_f32(np.array([x], dtype=np.float32))
        p = float(sr_up_probability_f32(np.array([x], dtype=np.float32))[0])
        if res[0] == 0 or p in (0.0, 1.0):
            continue
        p_hat = float((y.astype(np.float64) == ceil[0]).mean())
        sig = math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(p_hat - p) / sig)
    return CheckResult("sr_frequency_within_4_sigma", worst <= 4.0,
                       f"worst deviation {worst:.2f} sigma")


def _check_sr_support(seed: int) -> CheckResult:
    rng = RoundRng(seed)
    np_rng = np.random.default_rng(seed + 2)
    xs = _random_f32(np_rng, 5_000)
    y = round_stochastic_f32(xs, rng, 51, 0)
    floor, ceil, _ = quant_grid_f32(xs)
    y64 = y.astype(np.float64)
    ok = bool(np.all((y64 == floor) | (y64 == ceil)))
    return CheckResult("sr_two_point_support", ok, f"{len(xs)} values")


def _check_sr_unbiased(seed: int) -> CheckResult:
    rng = RoundRng(seed)
    np_rng = np.random.default_rng(seed + 3)
    xs = _random_f32(np_rng, 32, -6, 6)
    n = 40_000
    worst = 0.0
    for i, x in enumerate(xs.tolist()):
        y = round_stochastic_f32(np.full(n, x, dtype=np.float32), rng, 52, i)
        _, _, res = quant_grid_f32(np.array([x], dtype=np.float32))
        p = float(sr_up_probability_f32(np.array([x], dtype=np.float32))[0])
        spread = float(res[0]) * math.sqrt(max(p * (1 - p), 1e-12) / n)
        if spread == 0:
            continue
        dev = abs(float(y.astype(np.float64).mean()) - float(np.float32(x))) / spread
        worst = max(worst, dev)
    return CheckResult("sr_unbiased_within_4_sigma", worst <= 4.0,
                       f"worst deviation {worst:.2f} sigma")


def _suite_rounding(seed: int) -> list[CheckResult]:
    return [_check_nearest_reference(seed), _check_sr_frequency(seed),
            _check_sr_support(seed), _check_sr_unbiased(seed)]


# -- optimizer ----------------------------------------------------------------

def _check_direction_independent(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    x = Tensor.from_array(np_rng.normal(size=32), storage=BF16)
    g = Tensor.from_array(np_rng.normal(size=32).astype(np.float32))
    cfg = AdamWConfig(alpha=1e-3)
    u = []
    for policy in (PrecisionPolicy.bf16_sr(), PrecisionPolicy.bf16_nr()):
        st = AdamWState.init((32,), policy, stream=0)
        u.append(expose_update(x, g, st, cfg, policy).data)
    ok = np.array_equal(u[0], u[1])
    return CheckResult("update_direction_rounding_independent", ok, "32-dim state")


def _check_step_unbiased(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    d, reps = 10, 4000
    x = Tensor.from_array(np_rng.normal(size=d), storage=BF16)
    g = Tensor.from_array(np_rng.normal(size=d).astype(np.float32))
    cfg = AdamWConfig(alpha=3e-3)
    policy = PrecisionPolicy(weights=BF16, gradients=FP32, moment1=FP32,
                             moment2=FP32, update_arithmetic=FP32,
                             update_rounding="stochastic")
    fp = PrecisionPolicy.fp32_master()
    target, _ = adamw_step(x, g, AdamWState.init((d,), fp, 0), cfg, fp, RoundRng(seed))
    acc = np.zeros(d)
    for k in range(reps):
        xk, _ = adamw_step(x, g, AdamWState.init((d,), policy, stream=k), cfg,
                           policy, RoundRng(seed))
        acc += xk.data.astype(np.float64)
    _, _, res = quant_grid_f32(target.data)
    p = sr_up_probability_f32(target.data)
    tol = 4 * res * np.sqrt(np.maximum(p * (1 - p), 1e-12) / reps) + 1e-12
    ok = bool(np.all(np.abs(acc / reps - target.data.astype(np.float64)) <= tol))
    return CheckResult("sr_step_unbiased", ok, f"{reps} draws, {d} dims")


def _check_stagnation(seed: int) -> CheckResult:
    from .rounding import quant_grid
    nr = PrecisionPolicy.bf16_nr()
    sr = PrecisionPolicy.bf16_sr()
    x0 = Tensor.from_array(np.full(64, 1.5), storage=BF16)
    g = Tensor.from_array(np.full(64, 1.0, dtype=np.float32))
    cfg = AdamWConfig(alpha=quant_grid(1.5).resolution / 8, beta1=0.0)
    x_nr, st_nr = x0, AdamWState.init((64,), nr, 0)
    x_sr, st_sr = x0, AdamWState.init((64,), sr, 0)
    for _ in range(20):
        x_nr, st_nr = adamw_step(x_nr, g, st_nr, cfg, nr, RoundRng(seed))
        x_sr, st_sr = adamw_step(x_sr, g, st_sr, cfg, sr, RoundRng(seed))
    ok = np.array_equal(x_nr.data, x0.data) and not np.array_equal(x_sr.data, x0.data)
    return CheckResult("nr_stagnates_sr_moves", ok, "updates at resolution/8")


def _check_quant_error_lemma(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    cfg = AdamWConfig(alpha=1e-2)
    policy = PrecisionPolicy(weights=BF16, gradients=FP32, moment1=FP32,
                             moment2=FP32, update_arithmetic=FP32,
                             update_rounding="stochastic")
    violations = 0
    for trial in range(30):
        d = 8
        x = Tensor.from_array(np_rng.normal(scale=2.0, size=d), storage=BF16)
        g = Tensor.from_array(np_rng.normal(size=d).astype(np.float32))
        u = expose_update(x, g, AdamWState.init((d,), policy, 0), cfg, policy)
        target = (x.np - np.float32(1e-2) * u.np).astype(np.float32)
        floor, ceil, res = quant_grid_f32(target)
        a = ceil - target.astype(np.float64)
        b = target.astype(np.float64) - floor
        exact = float((a * b).sum())  # analytic E||r||^2
        bound = float(res.max()) * 1e-2 * float(np.abs(u.data).sum())
        if exact > bound * (1 + 1e-9):
            violations += 1
    return CheckResult("quantization_error_bounded", violations == 0,
                       f"{violations} violations in 30 states")


def _suite_optimizer(seed: int) -> list[CheckResult]:
    return [_check_direction_independent(seed), _check_step_unbiased(seed),
            _check_stagnation(seed), _check_quant_error_lemma(seed)]


# -- lemmas --------------------------------------------------------------------

def _check_xi_moments(seed: int) -> CheckResult:
    rng = RoundRng(seed)
    np_rng = np.random.default_rng(seed)
    x = np_rng.normal(size=10).astype(np.float32)
    g = np_rng.normal(size=10).astype(np.float32)
    alpha = 1e-3
    n = 30_000
    acc = np.zeros(10)
    acc_sq = 0.0
    acc_sq2 = 0.0
    for k in range(n):
        s = theory.sample_xi(x, g, alpha, rng, stream=60, step=k)
        acc += s.value
        v = float((s.value**2).sum())
        acc_sq += v
        acc_sq2 += v * v
    y = (x - np.float32(alpha) * g).astype(np.float32)
    floor, ceil, _ = quant_grid_f32(y)
    sd = np.sqrt((ceil - y.astype(np.float64)) * (y.astype(np.float64) - floor)) / alpha
    mean_ok = bool(np.all(np.abs(acc / n) <= 4 * sd / math.sqrt(n) + 1e-15))
    mean_sq = acc_sq / n
    sd_sq = math.sqrt(max(acc_sq2 / n - mean_sq**2, 0.0) / n)
    var_ok = abs(mean_sq - theory.xi_variance(x, g, alpha)) <= 4 * sd_sq
    return CheckResult("xi_zero_mean_and_variance", mean_ok and var_ok,
                       f"{n} draws")


def _check_xi_limit(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    base = np.array([1.5, -2.75, 0.625, 5.5, -0.28125], dtype=np.float32)
    g = np_rng.uniform(0.3, 1.5, size=5).astype(np.float32) * np.sign(np_rng.normal(size=5)).astype(np.float32)
    _, _, res = quant_grid_f32(base)
    expected = float((res * np.abs(g.astype(np.float64))).sum())
    alpha, prev, cur = 1e-3, None, None
    for _ in range(40):
        cur = alpha * theory.xi_variance(base, g, alpha)
        if prev is not None and abs(cur - prev) < 0.01 * abs(cur):
            break
        prev, alpha = cur, alpha / 2
    ok = abs(cur - expected) <= 0.01 * expected
    return CheckResult("xi_variance_small_step_limit", ok,
                       f"limit {cur:.3e} vs {expected:.3e}")


def _check_logsum(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(2000):
        T = int(np_rng.integers(1, 50))
        a = np_rng.uniform(0, 5, T) * (10.0 ** np_rng.uniform(-4, 2))
        c = theory.log_sum_check(a, float(np_rng.uniform(0.1, 0.999)),
                                 float(10.0 ** np_rng.uniform(-8, 0)))
        bad += not c.holds
    return CheckResult("log_sum_inequality", bad == 0, f"{bad} failures in 2000")


def _check_descent(seed: int) -> CheckResult:
    def sampler(n, rng):
        u = rng.uniform_array(61, 0, np.arange(n))
        return 0.4 + 0.5 * np.where(u < 0.5, -1.0, 1.0)

    c = theory.descent_direction_check(0.4, sampler, 0.2, 0.95, 1e-8, 1.0,
                                       50_000, RoundRng(seed))
    return CheckResult("descent_direction_lower_bound", c.holds,
                       f"lhs {c.lhs_mean:.4f} rhs {c.rhs:.4f}")


def _suite_lemmas(seed: int) -> list[CheckResult]:
    return [_check_xi_moments(seed), _check_xi_limit(seed), _check_logsum(seed),
            _check_descent(seed)]


# -- bounds --------------------------------------------------------------------

def _check_bound_ordering(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    n = 100_000
    d = np_rng.integers(1, 1000, n).astype(np.float64)
    R = np_rng.uniform(0.01, 10, n)
    L = np_rng.uniform(0.01, 100, n)
    F0 = np_rng.uniform(0.01, 100, n)
    alpha = np_rng.uniform(1e-5, 1e-1, n)
    beta2 = np_rng.uniform(0.5, 0.999, n)
    eps = 10.0 ** np_rng.uniform(-10, -4, n)
    delta = np_rng.uniform(0, 0.1, n)
    T = np_rng.integers(1, 10**6, n).astype(np.float64)
    ln_eps = np.log1p(R * R / (eps * (1 - beta2)))
    ln_b2 = np.log(1 / beta2)
    quant = (R * d * delta * L / (T * np.sqrt(1 - beta2))) \
        * (np.sqrt(T * ln_eps) + T * np.sqrt(ln_b2))
    bias = np.sqrt(1 - beta2) * d * (R * delta + L * delta**2) / alpha
    diff = quant + bias  # nr_total - sr_total
    strict = (delta > 0) & (diff > 0)
    ok = bool(np.all(diff >= 0)) and bool(np.all(strict == (delta > 0)))
    return CheckResult("nr_bound_dominates_sr", ok, f"{n} random constants")


def _check_corollary(seed: int) -> CheckResult:
    np_rng = np.random.default_rng(seed)
    ok = True
    for _ in range(200):
        c = theory.ProblemConstants(
            d=int(np_rng.integers(1, 500)), R=float(np_rng.uniform(0.1, 5)),
            L=float(np_rng.uniform(0.1, 50)), f0_minus_fstar=1.0,
            alpha=float(np_rng.uniform(1e-4, 1e-2)),
            beta2=float(np_rng.uniform(0.5, 0.99)), eps=1e-8, delta=0.0, horizon=1000)
        thr_a, thr_r = theory.corollary_thresholds(c)
        for thr in (thr_a, thr_r):
            c2 = theory.ProblemConstants(**{**c.to_dict(), "delta": thr / 100})
            ok = ok and theory.corollary_ratio(c2) < 0.05
    return CheckResult("corollary_regimes_suppress_noise_term", ok, "200x2 cases")


def _suite_bounds(seed: int) -> list[CheckResult]:
    return [_check_bound_ordering(seed), _check_corollary(seed)]


# -- replica --------------------------------------------------------------------

def _quad_grad(params, batch):
    grads = [Tensor((p.data - np.float32(batch)), p.shape, FP32, _trusted=True)
             for p in params]
    loss = sum(float(((p.data - np.float32(batch)) ** 2).sum()) for p in params)
    return 0.5 * loss, grads


def _check_shared_identity(seed: int) -> CheckResult:
    policy = PrecisionPolicy.bf16_sr()
    cfg = AdamWConfig(alpha=5e-3)
    ok = True
    for m in (2, 4):
        params = [Tensor.from_array(np.linspace(0.5, 2.5, 64), storage=BF16)]
        group = ReplicaGroup.replicate(params, m, RoundRng(seed), policy)
        for _ in range(40):
            _, drift = group_step(group, [0.0] * m, _quad_grad, cfg, policy)
            ok = ok and drift.bit_identical
    return CheckResult("shared_randomness_bit_identity", ok, "M in {2,4}, 40 steps")


def _check_private_drift(seed: int) -> CheckResult:
    policy = PrecisionPolicy.bf16_sr()
    cfg = AdamWConfig(alpha=5e-3)
    params = [Tensor.from_array(np.linspace(0.5, 2.5, 64), storage=BF16)]
    group = ReplicaGroup.replicate(params, 2, RoundRng(seed), policy,
                                   shared_randomness=False)
    drifted = False
    for _ in range(80):
        _, drift = group_step(group, [0.0, 0.0], _quad_grad, cfg, policy)
        drifted = drifted or drift.max_linf > 0
    return CheckResult("private_randomness_drifts", drifted, "80 steps, M=2")


def _check_reduction_equivalence(seed: int) -> CheckResult:
    task = make_task("mlp")
    policy = PrecisionPolicy.fp32_master()
    cfg = AdamWConfig(alpha=1e-3)
    outs = []
    for m in (1, 2):
        group = ReplicaGroup.replicate(task.init_params(policy.weights), m,
                                       RoundRng(seed), policy)
        for step in range(30):
            group_step(group, task.make_batches(step, m), task.grad_fn, cfg, policy)
        outs.append([p.data for p in group.params[0]])
    ok = all(np.array_equal(a.view(np.uint32), b.view(np.uint32))
             for a, b in zip(*outs))
    return CheckResult("data_parallel_mean_equivalence", ok, "M=1 vs M=2, 30 steps")


def _suite_replica(seed: int) -> list[CheckResult]:
    return [_check_shared_identity(seed), _check_private_drift(seed),
            _check_reduction_equivalence(seed)]


_SUITE_FNS = {
    "rounding": _suite_rounding,
    "optimizer": _suite_optimizer,
    "lemmas": _suite_lemmas,
    "bounds": _suite_bounds,
    "replica": _suite_replica,
}


def run_suite(name: str, seed: int = 0, jobs: int = 1) -> dict:
    """Run one named suite; returns {suite, checks, failures}."""
    if name not in _SUITE_FNS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    results = _SUITE_FNS[name](seed)
    return {
        "suite": name,
        "checks": [asdict(r) for r in results],
        "failures": sum(not r.passed for r in results),
    }


def run_suites(names: list[str], seed: int = 0, jobs: int = 1) -> list[dict]:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(lambda n: run_suite(n, seed), names))
    return [run_suite(n, seed) for n in names]
