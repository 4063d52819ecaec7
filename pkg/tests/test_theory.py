import math

import numpy as np
import pytest

from srkit.rng import RoundRng
from srkit.rounding import quant_grid, quant_grid_f32, widen
from srkit.theory import (
    DescentCheck,
    ProblemConstants,
    adam_gap_limit,
    corollary_ratio,
    corollary_thresholds,
    descent_direction_check,
    log_sum_check,
    modified_loss,
    nr_bound,
    quantization_error_limit,
    sample_xi,
    sr_bound,
    xi_variance,
)

CONSTANTS = ProblemConstants(d=100, R=1.0, L=10.0, f0_minus_fstar=5.0, alpha=1e-3,
                             beta2=0.95, eps=1e-8, delta=2.0**-8, horizon=10_000)


def random_constants(rng, delta=None):
    return ProblemConstants(
        d=int(rng.integers(1, 1000)),
        R=float(rng.uniform(0.01, 10)),
        L=float(rng.uniform(0.01, 100)),
        f0_minus_fstar=float(rng.uniform(0.01, 100)),
        alpha=float(rng.uniform(1e-5, 1e-1)),
        beta2=float(rng.uniform(0.5, 0.999)),
        eps=float(10.0 ** rng.uniform(-10, -4)),
        delta=float(rng.uniform(0, 0.1)) if delta is None else delta,
        horizon=int(rng.integers(1, 10**6)),
    )


class TestXiSample:
    def test_grid_point_target_gives_zero(self):
        x = np.array([1.0, -2.0, 0.5], dtype=np.float32)
        grad = np.zeros(3, dtype=np.float32)
        s = sample_xi(x, grad, 1e-3, RoundRng(0))
        assert np.all(s.value == 0.0)
        assert np.all(s.quantized == s.y)

    def test_two_point_support_and_identity(self):
        rng = RoundRng(3)
        x = np.array([1.0, 1.5, -0.75, 3.0], dtype=np.float32)
        grad = np.array([0.3, -1.2, 0.9, 2.0], dtype=np.float32)
        alpha = 1e-3
        for k in range(200):
            s = sample_xi(x, grad, alpha, rng, stream=0, step=k)
            floor, ceil, _ = quant_grid_f32(s.y)
            lo = s.y.astype(np.float64) - ceil   # quantized == ceil
            hi = s.y.astype(np.float64) - floor  # quantized == floor
            for i in range(4):
                assert s.alpha_times_value[i] in (lo[i], hi[i])
                # defining identity, bit-exact
                assert s.quantized[i] == np.float32(s.y[i] - s.alpha_times_value[i])

    def test_zero_mean_monte_carlo(self):
        rng = RoundRng(7)
        x = np.full(10, 1.1, dtype=np.float32)
        grad = np.linspace(-1, 1, 10).astype(np.float32)
        alpha = 2e-3
        n = 20000
        acc = np.zeros(10)
        for k in range(n):
            acc += sample_xi(x, grad, alpha, rng, stream=1, step=k).value
        y = (x - np.float32(alpha) * grad).astype(np.float32)
        floor, ceil, _ = quant_grid_f32(y)
        a = ceil - y.astype(np.float64)
        b = y.astype(np.float64) - floor
        sd = np.sqrt(a * b) / alpha  # per-dim std of xi
        assert np.all(np.abs(acc / n) <= 4 * sd / math.sqrt(n) + 1e-15)

    def test_second_moment_matches_analytic(self):
        rng = RoundRng(8)
        np_rng = np.random.default_rng(5)
        x = np_rng.normal(size=10).astype(np.float32)
        grad = np_rng.normal(size=10).astype(np.float32)
        alpha = 1e-3
        n = 20000
        acc = 0.0
        acc2 = 0.0
        for k in range(n):
            s = sample_xi(x, grad, alpha, rng, stream=2, step=k)
            val = float((s.value**2).sum())
            acc += val
            acc2 += val * val
        mean = acc / n
        sd = math.sqrt(max(acc2 / n - mean * mean, 0.0) / n)
        assert abs(mean - xi_variance(x, grad, alpha)) <= 4 * sd


class TestXiVariance:
    def test_zero_on_grid(self):
        assert xi_variance(np.array([1.0, 2.0]), np.zeros(2), 1e-3) == 0.0

    def test_midpoint_value(self):
        # park y exactly at midpoints: x on grid, step of half a resolution
        x = np.array([1.0, 2.0], dtype=np.float32)
        res = np.array([quant_grid(1.0).resolution, quant_grid(2.0).resolution])
        alpha = 1.0
        grad = (-res / 2).astype(np.float32)  # y = x + res/2
        got = xi_variance(x, grad, alpha)
        assert got == pytest.approx(float((res**2 / 4).sum()), rel=1e-12)

    def test_small_step_limit_tracks_resolution_times_gradient(self):
        """alpha * E||xi||^2 -> sum_i resolution_i * |grad_i| by alpha halving.

        Evaluated at grid points away from binade boundaries, where the
        grid gap is one-sided independent of approach direction.
        """
        x = np.array([1.5, -2.75, 0.625, 5.5], dtype=np.float32)
        grad = np.array([0.8, -1.3, 2.0, -0.4], dtype=np.float32)
        expected = sum(quant_grid(float(v)).resolution * abs(float(g))
                       for v, g in zip(x, grad))
        alpha = 1e-4
        prev = None
        for _ in range(40):
            cur = alpha * xi_variance(x, grad, alpha)
            if prev is not None and abs(cur - prev) < 0.01 * abs(cur):
                break
            prev = cur
            alpha /= 2
        assert cur == pytest.approx(expected, rel=0.01)


class TestModifiedLoss:
    @staticmethod
    def quad(x):
        return 0.5 * float((x * x).sum())

    @staticmethod
    def quad_grad(x):
        return x

    def test_stationary_grid_point_equals_loss(self):
        x = np.array([0.0, 0.0])
        assert modified_loss(self.quad, self.quad_grad, x, 1e-3) == 0.0

    def test_no_rounding_noise_reduces_to_discrete_penalty(self):
        """When the step target lands exactly on the grid the noise penalty
        vanishes and only F + (alpha/4)||grad||^2 remains."""
        x = np.array([1.5], dtype=np.float64)
        res = quant_grid(1.5).resolution
        alpha = float(res / 1.5)  # step alpha*grad = res: y = 1.5 - res, on grid
        got = modified_loss(self.quad, self.quad_grad, x, alpha)
        assert got == pytest.approx(self.quad(x) + 0.25 * alpha * 1.5**2, rel=1e-12)

    def test_quadratic_penalty_limit_at_one(self):
        """F = x^2/2 at x = 1: the noise penalty tends to gap/4 where gap is
        the grid spacing on the side the step approaches from (1.0 starts a
        binade, so a positive gradient approaches across the finer gap below)."""
        x = np.array([1.0], dtype=np.float64)
        gap_below = 1.0 - widen(0x3F7F)  # spacing just below 1.0
        alpha, prev = 1e-3, None
        for _ in range(30):
            cur = modified_loss(self.quad, self.quad_grad, x, alpha) - self.quad(x) \
                - 0.25 * alpha * 1.0
            if prev is not None and abs(cur - prev) < 0.01 * abs(cur):
                break
            prev, alpha = cur, alpha / 2
        assert cur == pytest.approx(gap_below / 4, rel=0.02)


class TestBounds:
    def test_zero_delta_kills_quantization_term(self):
        c = ProblemConstants(**{**CONSTANTS.to_dict(), "delta": 0.0})
        assert sr_bound(c).quantization_error == 0.0
        n = nr_bound(c)
        assert n.quantization_error == 0.0 and n.bias_term == 0.0
        assert n.total == sr_bound(c).total

    def test_large_horizon_approaches_persistent_terms(self):
        c = ProblemConstants(**{**CONSTANTS.to_dict(), "horizon": 10**12})
        total = sr_bound(c).total
        persistent = adam_gap_limit(c) + quantization_error_limit(c)
        assert total == pytest.approx(persistent, rel=1e-5)

    def test_alpha_scaling_of_terms(self):
        c2 = ProblemConstants(**{**CONSTANTS.to_dict(), "alpha": CONSTANTS.alpha * 2})
        b1, b2 = sr_bound(CONSTANTS), sr_bound(c2)
        assert b2.quantization_error == pytest.approx(b1.quantization_error)
        # adam gap: the alpha*L/(1-beta2) part doubles, the rest is unchanged
        ln_eps = math.log1p(CONSTANTS.R**2 / (CONSTANTS.eps * (1 - CONSTANTS.beta2)))
        ln_b2 = math.log(1 / CONSTANTS.beta2)
        scale = (ln_eps + CONSTANTS.horizon * ln_b2) * 2 * CONSTANTS.R * CONSTANTS.d / CONSTANTS.horizon
        alpha_part1 = CONSTANTS.alpha * CONSTANTS.L / (1 - CONSTANTS.beta2) * scale
        assert b2.adam_gap - b1.adam_gap == pytest.approx(alpha_part1, rel=1e-9)

    def test_nr_dominates_sr(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            c = random_constants(rng)
            nr, sr = nr_bound(c), sr_bound(c)
            assert nr.total >= sr.total
            if c.delta > 0:
                assert nr.total > sr.total

    def test_nr_bias_term_explodes_as_alpha_vanishes(self):
        c1 = ProblemConstants(**{**CONSTANTS.to_dict(), "alpha": 1e-3})
        c2 = ProblemConstants(**{**CONSTANTS.to_dict(), "alpha": 5e-4})
        assert nr_bound(c2).bias_term == pytest.approx(2 * nr_bound(c1).bias_term)

    def test_terms_nonnegative_and_quant_linear_in_delta(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            c = random_constants(rng)
            b = sr_bound(c)
            assert min(b.vanishing, b.adam_gap, b.quantization_error) >= 0
            c2 = ProblemConstants(**{**c.to_dict(), "delta": c.delta * 3})
            assert sr_bound(c2).quantization_error == pytest.approx(
                3 * b.quantization_error)

    def test_validation(self):
        with pytest.raises(ValueError):
            ProblemConstants(d=0, R=1, L=1, f0_minus_fstar=1, alpha=1e-3,
                             beta2=0.9, eps=1e-8, delta=0.0, horizon=10)
        with pytest.raises(ValueError):
            ProblemConstants(d=1, R=1, L=1, f0_minus_fstar=1, alpha=1e-3,
                             beta2=1.0, eps=1e-8, delta=0.0, horizon=10)


class TestCorollary:
    def test_zero_delta_zero_ratio(self):
        c = ProblemConstants(**{**CONSTANTS.to_dict(), "delta": 0.0})
        assert corollary_ratio(c) == 0.0

    def test_ratio_small_in_both_regimes(self):
        thr_alpha, thr_rl = corollary_thresholds(CONSTANTS)
        for thr in (thr_alpha, thr_rl):
            c = ProblemConstants(**{**CONSTANTS.to_dict(), "delta": thr / 100})
            assert corollary_ratio(c) < 0.05

    def test_ratio_unbounded_when_beta2_approaches_one(self):
        ratios = []
        for k in range(3, 10):
            T = 10**k
            c = ProblemConstants(d=10, R=1.0, L=1.0, f0_minus_fstar=1.0,
                                 alpha=1.0 / math.sqrt(T), beta2=1.0 - 1.0 / T,
                                 eps=1e-8, delta=0.01, horizon=T)
            ratios.append(corollary_ratio(c))
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] > 10


class TestLogSum:
    def test_zero_sequence(self):
        c = log_sum_check([0.0] * 5, 0.9, 1e-2)
        assert c.lhs == 0.0 <= c.rhs and c.holds

    def test_hand_example(self):
        c = log_sum_check([1.0], 0.5, 1.0)
        assert c.lhs == pytest.approx(0.5)
        assert c.rhs == pytest.approx(2 * math.log(2))
        assert c.holds

    def test_random_sweep_no_counterexample(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            T = int(rng.integers(1, 60))
            a = rng.uniform(0, 10, T) * (10.0 ** rng.uniform(-5, 3))
            beta2 = float(rng.uniform(0.1, 0.999))
            eps = float(10.0 ** rng.uniform(-8, 0))
            assert log_sum_check(a, beta2, eps).holds

    def test_input_validation(self):
        with pytest.raises(ValueError):
            log_sum_check([-1.0], 0.9, 1e-2)
        with pytest.raises(ValueError):
            log_sum_check([1.0], 0.9, 0.0)


class TestDescentDirection:
    def test_deterministic_gradient(self):
        G, R, eps, v_prev, beta2 = 0.7, 1.0, 1e-8, 0.3, 0.95

        def sampler(n, rng):
            return np.full(n, G)

        c = descent_direction_check(G, sampler, v_prev, beta2, eps, R, 1000, RoundRng(0))
        v = beta2 * v_prev + G * G
        assert c.lhs_mean == pytest.approx(G * G / math.sqrt(eps + v))
        assert c.holds

    def test_symmetric_two_point_gradient(self):
        G, spread, R = 0.5, 0.4, 1.0

        def sampler(n, rng):
            signs = np.where(rng.uniform_array(9, 0, np.arange(n)) < 0.5, -1.0, 1.0)
            return G + spread * signs

        c = descent_direction_check(G, sampler, 0.2, 0.95, 1e-8, R, 100_000, RoundRng(4))
        assert c.holds

    def test_zero_expected_gradient(self):
        def sampler(n, rng):
            signs = np.where(rng.uniform_array(9, 1, np.arange(n)) < 0.5, -1.0, 1.0)
            return 0.8 * signs

        c = descent_direction_check(0.0, sampler, 0.1, 0.9, 1e-8, 1.0, 50_000, RoundRng(5))
        assert c.rhs <= 0.0
        assert c.holds

    def test_sampler_bound_enforced(self):
        with pytest.raises(ValueError):
            descent_direction_check(0.0, lambda n, rng: np.full(n, 2.0), 0.1, 0.9,
                                    1e-8, 1.0, 10, RoundRng(0))
