"""Numerical verification tools for the rounding-aware optimizer analysis.

This module hosts the analysis-side quantities: the effective gradient
perturbation induced by a stochastically rounded step, the modified loss
it implicitly minimizes, closed-form convergence-bound evaluators for
stochastic vs nearest rounding, and the two auxiliary inequalities the
bound derivation rests on. Everything here computes in float64; these are
analysis tools, not training-path code.

Sign convention for the perturbation: ``xi`` is defined through the exact
identity

    quantized_step == y - alpha * xi,   y = float32(x - alpha * grad)

so a step of stochastically rounded gradient descent equals a step of
exact gradient descent with gradient ``grad + xi``. The perturbation has
zero mean and per-dimension second moment (ceil-y)(y-floor)/alpha^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import RoundRng
from .rounding import quant_grid_f32, round_stochastic_f32


# -- effective gradient perturbation ----------------------------------------

@dataclass(frozen=True)
class XiSample:
    """One draw of the update perturbation at (x, grad, alpha).

    ``alpha_times_value`` is the exact float difference y - quantized, so
    the defining identity holds bit-exactly: quantized == y - alpha*xi.
    """

    value: np.ndarray            # xi, float64
    alpha_times_value: np.ndarray  # y - quantized, float64 (exact)
    y: np.ndarray                # float32 pre-rounding step target
    quantized: np.ndarray        # float32 rounded step
    x: np.ndarray
    grad: np.ndarray
    alpha: float


def _step_target(x, grad, alpha: float) -> np.ndarray:
    x32 = np.asarray(x, dtype=np.float32)
    g32 = np.asarray(grad, dtype=np.float32)
    return (x32 - np.float32(alpha) * g32).astype(np.float32)


def sample_xi(x, grad, alpha: float, rng: RoundRng, stream: int = 0,
              step: int = 0) -> XiSample:
    """Draw the gradient-space perturbation of one stochastically rounded step."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    y = _step_target(x, grad, alpha)
    q = round_stochastic_f32(y, rng, stream, step)
    ay = y.astype(np.float64) - q.astype(np.float64)
    return XiSample(value=ay / alpha, alpha_times_value=ay, y=y, quantized=q,
                    x=np.asarray(x, dtype=np.float32),
                    grad=np.asarray(grad, dtype=np.float32), alpha=alpha)


def xi_variance(x, grad, alpha: float) -> float:
    """Analytic E||xi||^2 = sum_i (ceil-y)(y-floor) / alpha^2 at y = x - alpha*grad."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    y = _step_target(x, grad, alpha)
    floor, ceil, _ = quant_grid_f32(y)
    a = ceil - y.astype(np.float64)
    b = y.astype(np.float64) - floor
    return float((a * b).sum() / (alpha * alpha))


def modified_loss(fn: Callable[[np.ndarray], float],
                  grad_fn: Callable[[np.ndarray], np.ndarray],
                  x, alpha: float) -> float:
    """Loss that stochastically rounded gradient descent implicitly minimizes.

    F(x) + (alpha/4) ||grad F||^2 + (alpha/4) E||xi||^2. The second term is
    the usual discrete-step penalty; the third is the quantization-noise
    penalty, which survives as sum_i resolution_i * |grad_i| / 4 when the
    step size goes to zero at a grid point.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_fn(x), dtype=np.float64)
    sq = float((g * g).sum())
    return float(fn(x)) + 0.25 * alpha * sq + 0.25 * alpha * xi_variance(x, g, alpha)


# -- convergence-bound evaluators --------------------------------------------

@dataclass(frozen=True)
class ProblemConstants:
    """Inputs to the convergence bounds.

    delta is the worst-case grid resolution across coordinates, taken as a
    free input rather than derived from any particular weight vector.
    """

    d: int
    R: float
    L: float
    f0_minus_fstar: float
    alpha: float
    beta2: float
    eps: float
    delta: float
    horizon: int

    def __post_init__(self):
        if self.d < 1 or self.horizon < 1:
            raise ValueError("d and horizon must be >= 1")
        for name in ("R", "L", "f0_minus_fstar", "alpha", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta2 must be in (0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("d", "R", "L", "f0_minus_fstar", "alpha", "beta2", "eps",
                 "delta", "horizon")}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConstants":
        return cls(**d)


def _log_terms(c: ProblemConstants) -> tuple[float, float]:
    ln_eps = math.log1p(c.R * c.R / (c.eps * (1.0 - c.beta2)))
    ln_b2 = math.log(1.0 / c.beta2)
    return ln_eps, ln_b2


@dataclass(frozen=True)
class SrBound:
    vanishing: float
    adam_gap: float
    quantization_error: float

    @property
    def total(self) -> float:
        return self.vanishing + self.adam_gap + self.quantization_error


@dataclass(frozen=True)
class NrBound:
    vanishing: float
    adam_gap: float
    quantization_error: float  # twice the stochastic-rounding term
    bias_term: float

    @property
    def total(self) -> float:
        return self.vanishing + self.adam_gap + self.quantization_error + self.bias_term


def _common_terms(c: ProblemConstants) -> tuple[float, float, float]:
    ln_eps, ln_b2 = _log_terms(c)
    T = float(c.horizon)
    vanishing = 2.0 * c.R * c.f0_minus_fstar / (c.alpha * T)
    adam_gap = (2.0 * c.R * c.d / T) \
        * (2.0 * c.R / math.sqrt(1.0 - c.beta2) + c.alpha * c.L / (1.0 - c.beta2)) \
        * (ln_eps + T * ln_b2)
    quant = (c.R * c.d * c.delta * c.L / (T * math.sqrt(1.0 - c.beta2))) \
        * (math.sqrt(T * ln_eps) + T * math.sqrt(ln_b2))
    return vanishing, adam_gap, quant


def sr_bound(c: ProblemConstants) -> SrBound:
    """Average-squared-gradient bound for stochastically rounded updates."""
    vanishing, adam_gap, quant = _common_terms(c)
    return SrBound(vanishing=vanishing, adam_gap=adam_gap, quantization_error=quant)


def nr_bound(c: ProblemConstants) -> NrBound:
    """Bound for nearest-rounded updates: doubled noise term plus a bias term
    that scales like 1/alpha (rounding bias does not average out)."""
    vanishing, adam_gap, quant = _common_terms(c)
    bias = math.sqrt(1.0 - c.beta2) * c.d * (c.R * c.delta + c.L * c.delta * c.delta) \
        / c.alpha
    return NrBound(vanishing=vanishing, adam_gap=adam_gap,
                   quantization_error=2.0 * quant, bias_term=bias)


def adam_gap_limit(c: ProblemConstants) -> float:
    """Non-vanishing part of the adaptive-step gap as the horizon grows."""
    _, ln_b2 = _log_terms(c)
    return 2.0 * c.R * c.d \
        * (2.0 * c.R / math.sqrt(1.0 - c.beta2) + c.alpha * c.L / (1.0 - c.beta2)) * ln_b2


def quantization_error_limit(c: ProblemConstants) -> float:
    """Non-vanishing part of the stochastic-rounding noise term."""
    _, ln_b2 = _log_terms(c)
    return c.R * c.d * c.delta * c.L * math.sqrt(ln_b2) / math.sqrt(1.0 - c.beta2)


def corollary_ratio(c: ProblemConstants) -> float:
    """quantization_error_limit / adam_gap_limit; << 1 when delta is far
    below either alpha/sqrt(1-beta2)*sqrt(ln(1/beta2)) or (R/L)*sqrt(ln(1/beta2))."""
    return quantization_error_limit(c) / adam_gap_limit(c)


def corollary_thresholds(c: ProblemConstants) -> tuple[float, float]:
    """Resolution scales below which rounding noise is negligible."""
    _, ln_b2 = _log_terms(c)
    return (c.alpha / math.sqrt(1.0 - c.beta2) * math.sqrt(ln_b2),
            c.R / c.L * math.sqrt(ln_b2))


# -- auxiliary inequalities ---------------------------------------------------

@dataclass(frozen=True)
class LogSumCheck:
    lhs: float
    rhs: float
    sqrt_lhs: float
    sqrt_rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs and self.sqrt_lhs <= self.sqrt_rhs


def log_sum_check(a: Sequence[float], beta2: float, eps: float) -> LogSumCheck:
    """Evaluate both sides of the discounted-sum log inequality.

    With b_t = sum_{j<=t} beta2^(t-j) a_j the claim is
    sum_t a_t/(eps+b_t) <= ln(1+b_T/eps) + T ln(1/beta2), and the
    square-root variant sum_t sqrt(a_t/(eps+b_t)) <=
    sqrt(T ln(1+b_T/eps)) + T sqrt(ln(1/beta2)).
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("a must be a nonempty 1-d sequence")
    if (arr < 0).any():
        raise ValueError("a must be elementwise nonnegative")
    if not 0.0 < beta2 < 1.0:
        raise ValueError("beta2 must be in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    T = arr.size
    b = np.empty(T)
    acc = 0.0
    for t in range(T):
        acc = beta2 * acc + arr[t]
        b[t] = acc
    ratios = arr / (eps + b)
    lhs = float(ratios.sum())
    sqrt_lhs = float(np.sqrt(ratios).sum())
    ln_b2 = math.log(1.0 / beta2)
    ln_bT = math.log1p(b[-1] / eps)
    return LogSumCheck(lhs=lhs, rhs=ln_bT + T * ln_b2,
                       sqrt_lhs=sqrt_lhs,
                       sqrt_rhs=math.sqrt(T * ln_bT) + T * math.sqrt(ln_b2))


@dataclass(frozen=True)
class DescentCheck:
    lhs_mean: float
    rhs: float
    mc_sigma: float

    @property
    def holds(self) -> bool:
        return self.lhs_mean >= self.rhs - 4.0 * self.mc_sigma


def descent_direction_check(G: float, g_sampler: Callable[[int, RoundRng], np.ndarray],
                            v_prev: float, beta2: float, eps: float, R: float,
                            draws: int, rng: RoundRng) -> DescentCheck:
    """Monte-Carlo check that adaptive updates correlate with the gradient.

    lhs = E[G*g / sqrt(eps+v)] with v = beta2*v_prev + g^2, against the
    lower bound G^2 / (2 sqrt(eps+v_tilde)) - 2R E[g^2/(eps+v)], where
    v_tilde replaces the fresh g^2 by its expectation. The sampler must be
    unbiased for G with |g| <= R.
    """
    g = np.asarray(g_sampler(draws, rng), dtype=np.float64)
    if np.abs(g).max() > R + 1e-12:
        raise ValueError("sampler produced |g| > R")
    v = beta2 * v_prev + g * g
    lhs_samples = G * g / np.sqrt(eps + v)
    v_tilde = beta2 * v_prev + float((g * g).mean())
    rhs = G * G / (2.0 * math.sqrt(eps + v_tilde)) \
        - 2.0 * R * float((g * g / (eps + v)).mean())
    sigma = float(lhs_samples.std(ddof=1)) / math.sqrt(draws) if draws > 1 else 0.0
    return DescentCheck(lhs_mean=float(lhs_samples.mean()), rhs=rhs, mc_sigma=sigma)
