"""Binary polarized neuron vs augmented neuron on the same drive."""

import numpy as np

from snnconv import snn
from snnconv.converter import NeuronKind

# %% single firing decisions
for V in (-2.7, -0.4, 0.0, 0.6, 1.0, 3.4):
    o_ter, v_ter = snn.fire_double_threshold(V, 1.0, -1.0)
    o_aug, v_aug = snn.fire_augmented(V, 1.0, -1.0)
    print(f"V={V:5.1f}  binary o={o_ter:+d} V'={v_ter:5.2f}   augmented o={o_aug:+d} V'={v_aug:5.2f}")

# %% a constant drive of 2.5 per step
drive = np.full((6, 1), 2.5)
for kind in (NeuronKind.BINARY, NeuronKind.AUGMENTED):
    spikes, V = snn.integrate_sequence(drive, 1.0, -1.0, kind)
    print(f"{kind.value:>9}: spikes {spikes[:, 0].astype(int).tolist()}  rate {spikes.sum() / len(drive):.2f}")

# %% conservation: theta * N(t) + V(t) equals the accumulated drive
rng = np.random.default_rng(0)
drive = rng.normal(size=(500, 8))
spikes, V = snn.integrate_sequence(drive, 0.5, -0.5, NeuronKind.AUGMENTED)
err = np.abs(0.5 * np.cumsum(spikes, axis=0) + V - np.cumsum(drive, axis=0)).max()
print(f"max conservation error over 500 steps: {err:.1e}")
