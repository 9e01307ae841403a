"""Shared desk-scale task for the demos: noisy 8x8 prototypes, a 64-4-3 LeakyReLU MLP."""

from snnconv import ann, converter
from snnconv.data import make_prototype_images, train_test_split


def build(seed=3):
    ds = make_prototype_images(3, 700, side=8, noise=0.9, seed=seed, complementary=True)
    train, test = train_test_split(ds, 500, seed=seed)
    net = ann.mlp([64, 4, 3], alpha_pos=1.0, alpha_neg=0.25, seed=seed)
    net = ann.train(net, train, epochs=30, lr=0.05, seed=seed, zero_bias=True)
    factors = converter.compute_scaling_factors(ann.record_dataset_stats(net, train))
    return net, train, test, converter.ter_map(net, factors), converter.aug_map(net)
