"""Convergence-bound evaluators: stochastic vs nearest rounding.

The average-squared-gradient bound splits into a vanishing term, the
adaptive-step gap, and a quantization term. Nearest rounding doubles the
quantization term and adds a bias term scaling like 1/lr, so its bound is
strictly larger whenever the grid is coarse at all.
"""

from srkit import ProblemConstants, corollary_ratio, nr_bound, sr_bound
from srkit.theory import corollary_thresholds

base = ProblemConstants(d=1000, R=1.0, L=10.0, f0_minus_fstar=5.0, alpha=1e-3,
                        beta2=0.95, eps=1e-8, delta=2.0**-8, horizon=100_000)

s, n = sr_bound(base), nr_bound(base)
print("stochastic rounding bound:")
print(f"  vanishing           {s.vanishing:.4g}")
print(f"  adaptive-step gap   {s.adam_gap:.4g}")
print(f"  quantization error  {s.quantization_error:.4g}")
print(f"  total               {s.total:.4g}")
print("nearest rounding bound:")
print(f"  quantization error  {n.quantization_error:.4g}  (doubled)")
print(f"  bias term           {n.bias_term:.4g}  (scales like 1/lr)")
print(f"  total               {n.total:.4g}")

print("\nresolution sweep (totals):")
for delta in (0.0, 2.0**-10, 2.0**-8, 2.0**-6):
    c = ProblemConstants(**{**base.to_dict(), "delta": delta})
    print(f"  delta={delta:<12g} sr={sr_bound(c).total:10.4g} "
          f"nr={nr_bound(c).total:10.4g}")

thr_alpha, thr_rl = corollary_thresholds(base)
print(f"\nnoise-negligible thresholds: {thr_alpha:.3g} (lr-based), "
      f"{thr_rl:.3g} (curvature-based)")
c = ProblemConstants(**{**base.to_dict(), "delta": thr_alpha / 100})
print(f"at delta = threshold/100 the noise/gap ratio is {corollary_ratio(c):.4f}")

print("\nsmall learning rates make the nearest-rounding bias explode:")
for alpha in (1e-2, 1e-3, 1e-4):
    c = ProblemConstants(**{**base.to_dict(), "alpha": alpha})
    print(f"  lr={alpha:.0e}: bias term {nr_bound(c).bias_term:.4g}")
