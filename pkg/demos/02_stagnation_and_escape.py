"""Why low-precision training stalls, and how stochastic rounding escapes.

Under nearest rounding any update below half the local grid spacing is
swallowed; the parameter freezes exactly. Stochastic rounding moves with
probability proportional to the update instead, so progress continues in
expectation at the true rate.
"""

import numpy as np

from srkit import AdamWConfig, AdamWState, RoundRng, Tensor, adamw_step
from srkit.experiments import linear_loss_adam
from srkit.rounding import quant_grid
from srkit.tensor import PrecisionPolicy

res = quant_grid(1.5).resolution
print(f"bf16 resolution at 1.5: {res}")
print(f"an update of resolution/8 = {res / 8} is below the half-gap\n")

cfg = AdamWConfig(alpha=res / 8, beta1=0.0)
g = Tensor.from_array(np.full(16, 1.0, dtype=np.float32))

for policy in (PrecisionPolicy.bf16_nr(), PrecisionPolicy.bf16_sr()):
    x = Tensor.from_array(np.full(16, 1.5), storage="bf16")
    st = AdamWState.init((16,), policy, stream=0)
    for _ in range(50):
        x, st = adamw_step(x, g, st, cfg, policy, RoundRng(4))
    moved = int((x.np != 1.5).sum())
    print(f"{policy.update_rounding:>10} rounding: {moved}/16 coordinates moved "
          f"after 50 steps, mean {x.mean():.6f}")

print("\nRamp walk-off with a decaying step size (steps to leave the ramp):")
fp = linear_loss_adam(1e-5, 2.0, PrecisionPolicy.fp32_master(), 2, RoundRng(0))
sr = linear_loss_adam(1e-5, 2.0, PrecisionPolicy.bf16_sr(), 64, RoundRng(5))
sr_hi = linear_loss_adam(5e-5, 2.0, PrecisionPolicy.bf16_sr(), 64, RoundRng(6))
print(f"  fp32 master, floor 1e-5:     {fp.mean_steps:.0f} steps")
print(f"  bf16 stochastic, floor 1e-5: {sr.mean_steps:.0f} steps "
      f"({sr.mean_steps / fp.mean_steps:.2f}x slower; tiny steps rarely round up)")
print(f"  bf16 stochastic, floor 5e-5: {sr_hi.mean_steps:.0f} steps "
      "(a larger floor restores the pace)")
