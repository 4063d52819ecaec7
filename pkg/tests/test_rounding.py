"""Rounding kernel tests against independent oracles.

The reference for nearest rounding is a table lookup over all finite bf16
values with explicit distance comparison and ties-to-even, never the carry
trick under test. Stochastic rounding is checked against the analytic
two-point law.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srkit.rng import RoundRng
from srkit.rounding import (
    Bf16,
    bf16_values_sorted,
    dither_f32,
    is_representable,
    narrow_exact,
    quant_grid,
    quant_grid_f32,
    round_nearest,
    round_nearest_f32,
    round_stochastic,
    round_stochastic_f32,
    sr_up_probability,
    widen,
)

TABLE = bf16_values_sorted()


def reference_nearest(x: float, ties: str = "even") -> float:
    """Nearest-value oracle: explicit distances over the full value table."""
    x = float(np.float32(x))
    if math.isnan(x):
        return math.nan
    if math.isinf(x):
        return x
    i = np.searchsorted(TABLE, x)
    if i < len(TABLE) and TABLE[i] == x:
        return float(TABLE[i])
    lo = TABLE[i - 1] if i > 0 else -math.inf
    hi = TABLE[i] if i < len(TABLE) else math.inf
    d_lo, d_hi = x - lo, hi - x
    if d_lo < d_hi:
        return float(lo)
    if d_hi < d_lo:
        return float(hi)
    if ties == "away":
        return float(hi if x > 0 else lo)
    # ties-to-even: pick the candidate whose 16-bit pattern is even
    lo_bits = narrow_exact(lo).bits if math.isfinite(lo) else None
    return float(lo) if lo_bits is not None and lo_bits % 2 == 0 else float(hi)


def reference_grid(x: float) -> tuple[float, float]:
    x = float(np.float32(x))
    i = np.searchsorted(TABLE, x)
    if i < len(TABLE) and TABLE[i] == x:
        return x, x
    lo = TABLE[i - 1] if i > 0 else -math.inf
    hi = TABLE[i] if i < len(TABLE) else math.inf
    return float(lo), float(hi)


class TestBf16Representation:
    def test_round_trip_all_finite_patterns(self):
        """widen(narrow_exact(.)) is the identity on every finite pattern."""
        for bits in range(0x10000):
            v = widen(bits)
            if math.isnan(v):
                continue
            if math.isinf(v):
                continue
            assert narrow_exact(v).bits == bits

    def test_value_order_matches_pattern_order(self):
        """Numeric order of finite values equals sign-applied magnitude order."""
        finite = []
        for bits in range(0x10000):
            v = widen(bits)
            if math.isfinite(v):
                mag = bits & 0x7FFF
                key = -mag if bits & 0x8000 else mag
                finite.append((v, key))
        finite.sort(key=lambda t: t[1])
        vals = [v for v, _ in finite]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_pattern_range_checked(self):
        with pytest.raises(ValueError):
            Bf16(0x1FFFF)
        with pytest.raises(ValueError):
            narrow_exact(1.001953125)


class TestRoundNearest:
    def test_fixed_point_on_representable(self):
        assert round_nearest(1.0).bits == 0x3F80

    def test_below_halfway_rounds_down(self):
        # distances 0.001953125 vs 0.005859375 around 0x3F804000
        assert round_nearest(1.001953125).bits == 0x3F80

    def test_exact_midpoint_ties_to_even(self):
        # 0x3F808000 is halfway between 1.0 (even mantissa) and 1.0078125
        assert round_nearest(1.00390625).bits == 0x3F80

    def test_ties_away_mode(self):
        assert round_nearest(1.00390625, ties="away").value == 1.0078125
        assert round_nearest(-1.00390625, ties="away").value == -1.0078125

    def test_specials(self):
        assert round_nearest(math.inf).value == math.inf
        assert round_nearest(-math.inf).value == -math.inf
        assert round_nearest(math.nan).is_nan
        assert round_nearest(0.0).bits == 0x0000
        assert round_nearest(-0.0).bits == 0x8000

    def test_overflow_to_infinity_above_last_midpoint(self):
        top = widen(0x7F7F)
        above = float(np.float32(top) * np.float32(1.002))
        assert round_nearest(above).value == math.inf

    def test_exhaustive_two_binades_quarter_points(self):
        """Sweep every quarter-point offset in binades [1,2) and [2,4)."""
        for base_bits in range(0x3F80, 0x4080):  # bf16 patterns covering [1,4)
            base = widen(base_bits)
            step = quant_grid(base).resolution
            for frac in (0.0, 0.25, 0.5, 0.75):
                x = float(np.float32(base + frac * step))
                got = round_nearest(x).value
                assert got == reference_nearest(x), (x, got)

    def test_random_values_match_reference(self):
        rng = np.random.default_rng(7)
        exps = rng.uniform(-30, 30, size=20000)
        xs = np.sign(rng.normal(size=exps.size)) * np.exp2(exps)
        xs = xs.astype(np.float32)
        got = round_nearest_f32(xs)
        for x, g in zip(xs.tolist(), got.tolist()):
            assert g == reference_nearest(x)

    @given(st.floats(width=32, allow_nan=False, allow_infinity=False))
    @settings(max_examples=300, deadline=None)
    def test_error_at_most_half_resolution(self, x):
        g = quant_grid(x)
        if not math.isfinite(g.resolution):
            return
        r = round_nearest(x).value
        assert abs(r - x) <= g.resolution / 2


class TestQuantGrid:
    def test_spec_values(self):
        g = quant_grid(1.003)
        assert (g.floor, g.ceil, g.resolution) == (1.0, 1.0078125, 0.0078125)
        g = quant_grid(3.1)
        assert (g.floor, g.ceil, g.resolution) == (3.09375, 3.109375, 0.015625)
        g = quant_grid(1.0)
        assert g.floor == g.ceil == 1.0
        assert g.resolution == 0.0078125

    def test_resolution_at_grid_points_tracks_binade(self):
        assert quant_grid(2.0).resolution == 2.0**-6
        assert quant_grid(0.5).resolution == 2.0**-8
        assert quant_grid(0.0).resolution == 2.0**-133

    def test_grid_point_at_top_of_range(self):
        top = widen(0x7F7F)
        g = quant_grid(top)
        assert g.floor == g.ceil == top
        assert g.resolution == 2.0**120

    def test_negative_interval_orientation(self):
        g = quant_grid(-1.003)
        assert g.floor == -1.0078125 and g.ceil == -1.0
        assert g.floor <= -1.003 <= g.ceil

    def test_neighbors_match_table_reference(self):
        rng = np.random.default_rng(11)
        xs = (np.sign(rng.normal(size=5000)) * np.exp2(rng.uniform(-40, 40, 5000))).astype(
            np.float32
        )
        floors, ceils, _ = quant_grid_f32(xs)
        for x, f, c in zip(xs.tolist(), floors.tolist(), ceils.tolist()):
            rf, rc = reference_grid(x)
            assert (f, c) == (rf, rc), x

    def test_subnormal_region(self):
        x = float(np.float32(1.5e-40))
        g = quant_grid(x)
        assert g.floor <= x <= g.ceil
        assert g.resolution == 2.0**-133

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            quant_grid(math.inf)


class TestSrUpProbability:
    def test_spec_values(self):
        assert sr_up_probability(1.0) == 0.0
        assert sr_up_probability(1.00390625) == 0.5
        assert sr_up_probability(1.001953125) == 0.25

    @given(st.floats(width=32, allow_nan=False, allow_infinity=False, min_value=-(2.0**100), max_value=2.0**100))
    @settings(max_examples=300, deadline=None)
    def test_in_unit_interval_and_consistent_with_grid(self, x):
        p = sr_up_probability(x)
        assert 0.0 <= p <= 1.0
        g = quant_grid(x)
        if g.floor != g.ceil:
            assert p == pytest.approx((float(np.float32(x)) - g.floor) / g.resolution)


class TestRoundStochastic:
    def test_representable_is_fixed_point(self):
        rng = RoundRng(1)
        for i in range(64):
            assert round_stochastic(1.0, rng, stream=0, step=0, index=i).value == 1.0

    def test_two_point_support(self):
        rng = RoundRng(2)
        g = quant_grid(1.001953125)
        outs = {
            round_stochastic(1.001953125, rng, 0, 0, i).value for i in range(256)
        }
        assert outs <= {g.floor, g.ceil}
        assert len(outs) == 2

    def test_midpoint_frequency_half(self):
        rng = RoundRng(3)
        n = 20000
        ups = sum(
            round_stochastic(1.00390625, rng, 0, 0, i).value == 1.0078125
            for i in range(n)
        )
        sigma = math.sqrt(0.25 * n)
        assert abs(ups - 0.5 * n) <= 4 * sigma

    def test_quarter_frequency(self):
        rng = RoundRng(4)
        x = 1.001953125
        n = 40000
        y = round_stochastic_f32(np.full(n, x, dtype=np.float32), rng, 0, 0)
        ups = int((y == np.float32(1.0078125)).sum())
        p = sr_up_probability(x)
        sigma = math.sqrt(p * (1 - p) * n)
        assert abs(ups - p * n) <= 4 * sigma

    def test_determinism_same_address(self):
        rng = RoundRng(99)
        a = round_stochastic_f32(np.full(1000, 2.7182818, dtype=np.float32), rng, 5, 17)
        b = round_stochastic_f32(np.full(1000, 2.7182818, dtype=np.float32), rng, 5, 17)
        assert np.array_equal(a.view(np.uint32), b.view(np.uint32))

    def test_binade_straddle_unbiased(self):
        """Values whose neighbors lie in different binades still follow the law."""
        rng = RoundRng(5)
        x = float(np.float32(1.998))  # floor 1.9921875 in [1,2), ceil 2.0
        g = quant_grid(x)
        assert (g.floor, g.ceil) == (1.9921875, 2.0)
        n = 50000
        y = round_stochastic_f32(np.full(n, x, dtype=np.float32), rng, 0, 0)
        p_hat = float((y == np.float32(2.0)).mean())
        p = sr_up_probability(x)
        assert abs(p_hat - p) <= 4 * math.sqrt(p * (1 - p) / n)

    def test_subnormal_support(self):
        rng = RoundRng(6)
        x = float(np.float32(1.7e-40))
        g = quant_grid(x)
        outs = {round_stochastic(x, rng, 0, 0, i).value for i in range(128)}
        assert outs <= {g.floor, g.ceil}

    def test_saturation_never_creates_infinity(self):
        top = widen(0x7F7F)
        x = np.full(256, np.nextafter(np.float32(top), np.float32(np.inf)), dtype=np.float32)
        y = round_stochastic_f32(x, RoundRng(7), 0, 0)
        assert np.all(np.isfinite(y))
        assert np.all(y == np.float32(top))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            round_stochastic(math.nan, RoundRng(0), 0, 0, 0)
        with pytest.raises(ValueError):
            round_stochastic_f32(
                np.array([1.0, np.inf], dtype=np.float32), RoundRng(0), 0, 0
            )

    @given(
        st.floats(width=32, allow_nan=False, allow_infinity=False, min_value=-(2.0**100), max_value=2.0**100),
        st.integers(min_value=0, max_value=2**32),
    )
    @settings(max_examples=200, deadline=None)
    def test_error_bounded_by_resolution(self, x, salt):
        y = round_stochastic(x, RoundRng(salt), 0, 0, 0).value
        g = quant_grid(x)
        assert abs(y - float(np.float32(x))) <= g.resolution
        assert y in (g.floor, g.ceil)


class TestDitherMatchesLaw:
    def test_exact_threshold(self):
        """Dithering rounds up exactly when u >= 2^16 - frac_bits."""
        x = np.float32(1.001953125)  # low 16 bits 0x4000
        us = np.arange(0x10000, dtype=np.uint16)
        xs = np.full(0x10000, x, dtype=np.float32)
        y = dither_f32(xs, us)
        ups = int((y == np.float32(1.0078125)).sum())
        assert ups == 0x4000  # exactly frac/2^16 of all draws round up

    def test_monte_carlo_mean_unbiased(self):
        rng = RoundRng(8)
        for x in (0.1, -3.7, 123.456, 1e-8):
            x32 = float(np.float32(x))
            n = 100000
            y = round_stochastic_f32(np.full(n, x32, dtype=np.float32), rng, 1, 0)
            g = quant_grid(x32)
            p = sr_up_probability(x32)
            mean = float(y.astype(np.float64).mean())
            tol = 4 * g.resolution * math.sqrt(max(p * (1 - p), 1e-12) / n)
            assert abs(mean - x32) <= tol, x


def test_is_representable():
    assert is_representable(1.0)
    assert not is_representable(1.001953125)
