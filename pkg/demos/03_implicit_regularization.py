"""The gradient-space noise of a rounded step and the loss it regularizes.

A stochastically rounded descent step equals an exact step on a perturbed
gradient. The perturbation has zero mean, an analytic second moment, and
in the small-step limit contributes a penalty proportional to grid
resolution times gradient magnitude: rounding-aware training in effect.
"""

import numpy as np

from srkit import RoundRng, modified_loss, sample_xi, xi_variance
from srkit.rounding import quant_grid

x = np.array([1.5, -2.75, 0.625], dtype=np.float32)
grad = np.array([0.8, -1.3, 0.4], dtype=np.float32)
alpha = 1e-3

s = sample_xi(x, grad, alpha, RoundRng(0))
print("one perturbation draw:", np.array2string(s.value, precision=3))
print("step target quantizes to:", s.quantized.tolist())

n = 50_000
rng = RoundRng(1)
acc = np.zeros(3)
acc2 = 0.0
for k in range(n):
    v = sample_xi(x, grad, alpha, rng, step=k).value
    acc += v
    acc2 += float((v * v).sum())
print(f"\nmean over {n} draws: {np.array2string(acc / n, precision=5)}  (-> 0)")
print(f"mean squared norm:  {acc2 / n:.4f}")
print(f"analytic E||xi||^2: {xi_variance(x, grad, alpha):.4f}")

print("\nsmall-step limit of alpha * E||xi||^2 vs resolution-weighted gradient:")
expected = sum(quant_grid(float(v)).resolution * abs(float(g))
               for v, g in zip(x, grad))
for a in (1e-3, 1e-4, 1e-5):
    print(f"  alpha={a:.0e}: {a * xi_variance(x, grad, a):.6f}")
print(f"  limit:      {expected:.6f}")


def quad(z):
    return 0.5 * float((z * z).sum())


def quad_grad(z):
    return z

print("\nmodified loss for F(x) = ||x||^2/2 at a grid point:")
z = np.array([1.5])
for a in (1e-2, 1e-3, 1e-4):
    m = modified_loss(quad, quad_grad, z, a)
    print(f"  alpha={a:.0e}: F={quad(z):.4f}  F_effective={m:.6f}")
print("the gap that remains as alpha shrinks is the quantization penalty")
