"""Bit-exact BF16 representation plus nearest and stochastic rounding.

A BF16 value is the top half of an IEEE-754 binary32 pattern (1 sign,
8 exponent, 7 mantissa bits). Widening is a 16-bit left shift; narrowing
is a rounding decision on the low 16 bits of the binary32 pattern.

Stochastic rounding is implemented by dithering: draw a uniform 16-bit
integer, add it to the low 16 bits of the magnitude pattern (carry
propagates into the exponent), then truncate. Consecutive representable
values differ by exactly 0x10000 in magnitude-pattern space and binary32
is uniform between them, so the carry realizes the two-point law

    up   with probability (x - floor) / (ceil - floor)
    down otherwise

exactly, for every finite input including subnormals and values that
straddle a binade boundary. A carry that would produce an infinity
saturates to the largest finite value instead: a rounding step never
turns a finite number into infinity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .rng import RoundRng

_U32 = np.uint32
_SIGN32 = _U32(0x80000000)
_MAG32 = _U32(0x7FFFFFFF)
_EXP32 = _U32(0x7F800000)
_MANT32 = _U32(0x007FFFFF)
_HIGH32 = _U32(0xFFFF0000)
_LOW32 = _U32(0x0000FFFF)
_STEP32 = _U32(0x00010000)  # gap between consecutive bf16 magnitudes, widened

BF16_MAX_BITS = 0x7F7F  # largest finite bf16, 16-bit pattern
_BF16_MAX_MAG32 = _U32(BF16_MAX_BITS << 16)
_QNAN16 = 0x7FC0

TieRule = Literal["even", "away"]


def _bits32(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32).view(np.uint32)


def _f32(bits: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(bits, dtype=np.uint32).view(np.float32)


def widen(bits: int) -> float:
    """Value of a 16-bit bf16 pattern (shift into the binary32 high half)."""
    if not 0 <= bits <= 0xFFFF:
        raise ValueError(f"bf16 pattern out of range: {bits:#x}")
    return float(_f32(np.array([bits << 16], dtype=np.uint32))[0])


def is_representable(x: float) -> bool:
    """True if the binary32 value of x is exactly a bf16 value."""
    b = int(_bits32(np.array([x], dtype=np.float32))[0])
    return (b & 0xFFFF) == 0


@dataclass(frozen=True)
class Bf16:
    """A bf16 value carried as its 16-bit pattern."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= 0xFFFF:
            raise ValueError(f"bf16 pattern out of range: {self.bits:#x}")

    @property
    def value(self) -> float:
        return widen(self.bits)

    @property
    def is_nan(self) -> bool:
        return (self.bits & 0x7F80) == 0x7F80 and (self.bits & 0x007F) != 0

    @property
    def is_finite(self) -> bool:
        return (self.bits & 0x7F80) != 0x7F80

    def __repr__(self) -> str:
        return f"Bf16(0x{self.bits:04X}={self.value!r})"


def narrow_exact(x: float) -> Bf16:
    """Narrow a value that is already bf16-representable; raise otherwise."""
    if np.isnan(x):
        raise ValueError("narrow_exact rejects NaN; use round_nearest")
    b = int(_bits32(np.array([x], dtype=np.float32))[0])
    if b & 0xFFFF:
        raise ValueError(f"{x!r} is not bf16-representable")
    return Bf16(b >> 16)


@dataclass(frozen=True)
class QuantGrid:
    """Consecutive bf16 neighbors around a binary32 value.

    For representable x, floor == ceil == x and resolution is the grid
    spacing at x's binade. Otherwise resolution == ceil - floor (which is
    +inf only above the largest finite bf16, where ceil is +/-inf).
    """

    floor: float
    ceil: float
    resolution: float


def round_nearest_f32(x: np.ndarray, ties: TieRule = "even") -> np.ndarray:
    """Round binary32 values to the nearest bf16, returned as binary32.

    The carry trick: adding 0x7FFF plus the parity of bit 16 rounds the
    high half to nearest with ties-to-even; adding a constant 0x8000
    rounds ties away from zero. NaN maps to a quiet NaN, infinities pass
    through, and magnitudes above the last finite midpoint become inf.
    """
    bits = _bits32(x)
    if ties == "even":
        bias = _U32(0x7FFF) + ((bits >> _U32(16)) & _U32(1))
    elif ties == "away":
        bias = _U32(0x8000)
    else:
        raise ValueError(f"unknown tie rule: {ties!r}")
    out = (bits + bias) & _HIGH32
    nan = ((bits & _EXP32) == _EXP32) & ((bits & _MANT32) != 0)
    if nan.any():
        out = np.where(nan, (bits & _SIGN32) | _U32(_QNAN16 << 16), out)
    return _f32(out).reshape(np.shape(x))


def round_nearest(x: float, ties: TieRule = "even") -> Bf16:
    """Nearest bf16 to a binary32 value (total function; NaN -> quiet NaN)."""
    y = round_nearest_f32(np.array([x], dtype=np.float32), ties=ties)
    return Bf16(int(_bits32(y)[0]) >> 16)


def _check_finite(x: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise ValueError(f"{what} must be finite; element {idx} is {x.ravel()[idx]!r}")


def dither_f32(x: np.ndarray, u16: np.ndarray) -> np.ndarray:
    """Stochastically round binary32 values given per-element uniform u16.

    Adds u16 to the low bits of the magnitude pattern, truncates, and
    saturates any carry past the largest finite bf16.
    """
    bits = _bits32(x)
    sign = bits & _SIGN32
    mag = (bits & _MAG32) + u16.astype(np.uint32)
    mag &= _HIGH32
    mag = np.minimum(mag, _BF16_MAX_MAG32)
    return _f32(sign | mag).reshape(np.shape(x))


def round_stochastic_f32(
    x: np.ndarray, rng: RoundRng, stream: int, step: int, base_index: int = 0
) -> np.ndarray:
    """Vectorized stochastic rounding; element i uses address (stream, step, base_index+i)."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    _check_finite(arr, "round_stochastic input")
    idx = np.arange(base_index, base_index + arr.size, dtype=np.uint64)
    u = rng.u16_array(stream, step, idx).reshape(arr.shape)
    return dither_f32(arr, u)


def round_stochastic(x: float, rng: RoundRng, stream: int, step: int, index: int) -> Bf16:
    """Stochastically round one binary32 value at a unique counter address."""
    if not np.isfinite(np.float32(x)):
        raise ValueError(f"round_stochastic requires finite input, got {x!r}")
    y = round_stochastic_f32(np.array([x], dtype=np.float32), rng, stream, step, index)
    return Bf16(int(_bits32(y)[0]) >> 16)


def quant_grid_f32(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (floor, ceil, resolution) as float64 arrays."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    _check_finite(arr, "quant_grid input")
    bits = _bits32(arr)
    sign_neg = (bits & _SIGN32) != 0
    mag = bits & _MAG32
    lo_mag = mag & _HIGH32
    on_grid = (mag & _LOW32) == 0

    hi_mag = lo_mag + _STEP32
    lo_val = _f32(lo_mag).astype(np.float64)
    hi_val = _f32(hi_mag).astype(np.float64)  # +inf when lo is bf16 max

    # resolution: grid gap of the interval; at grid points, the gap of the
    # binade the point starts (gap above), except at the top of the finite
    # range where only the gap below exists.
    res = hi_val - lo_val
    at_top = on_grid & (lo_mag == _BF16_MAX_MAG32)
    if at_top.any():
        below = _f32(lo_mag - _STEP32).astype(np.float64)
        res = np.where(at_top, lo_val - below, res)

    floor = np.where(sign_neg, -hi_val, lo_val)
    ceil = np.where(sign_neg, -lo_val, hi_val)
    floor = np.where(on_grid, arr.astype(np.float64), floor)
    ceil = np.where(on_grid, arr.astype(np.float64), ceil)
    shape = np.shape(x)
    return floor.reshape(shape), ceil.reshape(shape), res.reshape(shape)


def quant_grid(x: float) -> QuantGrid:
    """Consecutive bf16 neighbors of x and the local grid resolution."""
    f, c, r = quant_grid_f32(np.array([x], dtype=np.float32))
    return QuantGrid(float(f[0]), float(c[0]), float(r[0]))


def sr_up_probability_f32(x: np.ndarray) -> np.ndarray:
    """Vectorized probability that stochastic rounding returns ceil."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    floor, ceil, _ = quant_grid_f32(arr)
    gap = ceil - floor
    p = np.zeros(arr.shape, dtype=np.float64)
    off = gap > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = (arr.astype(np.float64) - floor) / gap
    p = np.where(off & np.isfinite(gap), frac, p)
    return p.reshape(np.shape(x))


def sr_up_probability(x: float) -> float:
    """P(round_stochastic(x) == ceil): (x - floor) / (ceil - floor)."""
    return float(sr_up_probability_f32(np.array([x], dtype=np.float32))[0])


def bf16_values_sorted() -> np.ndarray:
    """All finite bf16 values as a sorted float64 array (reference table)."""
    bits = np.arange(0x10000, dtype=np.uint32)
    with np.errstate(invalid="ignore"):
        vals = _f32(bits << 16).astype(np.float64)
    return np.unique(vals[np.isfinite(vals)])
