"""Convert LeakyReLU ANNs to spiking networks with double-threshold or augmented neurons."""

from .ann import Activation, AnnNetwork, AvgPool, Conv, Dense, forward, leaky_relu, record_dataset_stats, train
from .converter import (
    NeuronKind,
    ScalingFactors,
    SpikingNetwork,
    aug_map,
    compute_scaling_factors,
    set_aug_bound,
    ter_map,
)
from .data import LabeledDataset
from .snn import count_events, fire_augmented, fire_double_threshold, simulate

__version__ = "0.1.0"
