"""Error vs. simulation length for both conversion methods on the shared task."""

from snnconv import analysis, ann

from _task import build

net, train, test, ter, aug = build()
ann_acc = ann.accuracy(net, test.images, test.labels)
print(f"ANN test accuracy {ann_acc:.3f}")

# %% sweep
checkpoints = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
sweeps = {name: analysis.error_vs_steps(s, test, 1000, checkpoints) for name, s in (("ter", ter), ("aug", aug))}
print("    T   ter acc   aug acc")
for k, T in enumerate(checkpoints):
    print(f"{T:5d}   {sweeps['ter'].accuracies[k]:.3f}     {sweeps['aug'].accuracies[k]:.3f}")

# %% latency to reach the ANN within a tolerance
for tol in (0.01, 0.0):
    for name, sweep in sweeps.items():
        hit = analysis.latency_to_criterion(sweep, ann_acc, tol)
        print(f"tol {tol:<5} {name}: T*={hit.steps} events={hit.events}")
