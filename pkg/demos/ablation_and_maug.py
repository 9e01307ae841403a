"""Remove the negative threshold, then bound the augmented spike size."""

import numpy as np

from snnconv import analysis, ann, converter

from _task import build

net, train, test, ter, aug = build()

# %% how much the negative branch matters in the ANN
logits, _ = ann.forward(net, test.images)
clamped = analysis.clamp_negative_forward(net, test.images)
print(f"inputs with a negative hidden activation: {analysis.negative_activation_fraction(net, test.images):.0%}")
print(f"logits changed by clamping negatives:     {np.mean(np.any(logits != clamped, axis=1)):.0%}")


def acc(s, T):
    return analysis.error_vs_steps(s, test, T, [T]).accuracies[0]


# %% ablation at the converged length
for name, s in (("ter", ter), ("aug", aug)):
    T = analysis.converged_latency(analysis.error_vs_steps(s, test, 2000))
    print(f"{name} at T={T}: full {acc(s, T):.3f}  no negative threshold "
          f"{acc(converter.without_negative_threshold(s), T):.3f}")

# %% spike-size bound
for T in (2, 20):
    row = {m: acc(converter.set_aug_bound(aug, m), T) for m in (1, 2, 4, 10, 40, None)}
    print(f"T={T:3d} " + "  ".join(f"m={'inf' if m is None else m}:{a:.3f}" for m, a in row.items()))
