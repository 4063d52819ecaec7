"""Nearest vs stochastic rounding on the bf16 grid.

Walks through the quantization grid around a value, the deterministic
nearest rounding, and the dithered stochastic rounding whose empirical
up-round frequency matches the two-point law.
"""

import numpy as np

from srkit import RoundRng, quant_grid, round_nearest, sr_up_probability
from srkit.rounding import round_stochastic_f32

x = 1.001953125
g = quant_grid(x)
print(f"value          {x}")
print(f"grid floor     {g.floor}")
print(f"grid ceil      {g.ceil}")
print(f"resolution     {g.resolution}  (bf16 spacing in the binade [1, 2))")

nr = round_nearest(x)
print(f"\nnearest        {nr.value}  (pattern 0x{nr.bits:04X})")
print(f"nearest error  {abs(nr.value - x):.9f} <= resolution/2 = {g.resolution / 2}")

p = sr_up_probability(x)
print(f"\nanalytic P(up) {p}")

rng = RoundRng(seed=0)
n = 200_000
draws = round_stochastic_f32(np.full(n, x, dtype=np.float32), rng, stream=0, step=0)
p_hat = float((draws.astype(np.float64) == g.ceil).mean())
mean = float(draws.astype(np.float64).mean())
print(f"empirical P(up) over {n} draws: {p_hat:.5f}")
print(f"empirical mean {mean:.9f} vs exact value {x}  (unbiased)")

print("\nA value already on the grid is a fixed point of both roundings:")
on_grid = 1.0078125
draws = round_stochastic_f32(np.full(8, on_grid, dtype=np.float32), rng, 1, 0)
print(f"stochastic({on_grid}) -> {sorted(set(draws.tolist()))}")

print("\nTies round to the even mantissa under the default rule:")
mid = 1.00390625  # exact midpoint of [1.0, 1.0078125]
print(f"nearest({mid})            -> {round_nearest(mid).value}")
print(f"nearest({mid}, ties=away) -> {round_nearest(mid, ties='away').value}")
