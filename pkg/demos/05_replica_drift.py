"""Shared randomness keeps data-parallel replicas bit-identical.

Each replica applies the same reduced gradient, but stochastic update
rounding draws random bits. If every replica draws from a designated
optimizer stream they make identical decisions and never diverge; private
streams let the models drift apart, corrupting the data-parallel
assumption that all replicas hold the same weights.
"""

from srkit import AdamWConfig, RoundRng, Schedule
from srkit.models import make_task
from srkit.replica import ReplicaGroup, group_step
from srkit.tensor import PrecisionPolicy

policy = PrecisionPolicy.bf16_sr()
cfg = AdamWConfig(alpha=3e-3, schedule=Schedule.cosine(3e-3, 3e-4, 10, 200))

for shared in (True, False):
    task = make_task("mlp")
    group = ReplicaGroup.replicate(task.init_params(policy.weights), 4,
                                   RoundRng(7), policy, shared_randomness=shared)
    drifts = []
    for step in range(200):
        _, drift = group_step(group, task.make_batches(step, 4), task.grad_fn,
                              cfg, policy)
        if step % 50 == 49:
            drifts.append((step + 1, drift.max_linf, drift.bit_mismatch_frac))
    label = "shared optimizer stream" if shared else "private streams"
    print(f"{label}:")
    for step, linf, bits in drifts:
        print(f"  step {step:3d}: max pairwise distance {linf:.3e}, "
              f"mismatched bits {bits * 100:.2f}%")
    print()
