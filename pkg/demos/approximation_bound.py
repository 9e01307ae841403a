"""How far the first-layer spike rates sit from the scaled ANN activations."""

import numpy as np

from snnconv import analysis, ann, converter

net = ann.mlp([20, 12, 4], alpha_pos=1.0, alpha_neg=0.3, seed=1)
aug = converter.aug_map(net)
x = np.random.default_rng(1).random((1, 20))

# %% the gap shrinks like 1/T
for T in (10, 100, 1000):
    report = analysis.approximation_gap(net, aug, x, T)
    print(f"T={T:5d}  max gap per layer {np.round(report.max_abs_gap, 5).tolist()}  "
          f"1/T={1 / T:.4f}  first layer in bound: {report.first_layer_bound_holds()}")

# %% batched check over many inputs
inputs = np.random.default_rng(2).random((50, 20))
print("violations:", analysis.first_layer_bound_violations(net, aug, inputs, [10, 100, 1000]))
