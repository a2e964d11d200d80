"""Shared helpers for the test suite."""

import numpy as np

from ps_lab.losses import EmbeddingBatch, ProxyBank
from ps_lab.numeric import make_rng


def random_instance(rng, n=8, c=5, d=16, scale=1.0):
    """A random (batch, bank) pair with every class present at least once."""
    labels = np.concatenate([np.arange(c), rng.integers(0, c, size=max(0, n - c))])
    labels = labels[:n]
    rng.shuffle(labels)
    batch = EmbeddingBatch(rng.normal(scale=scale, size=(n, d)), labels)
    bank = ProxyBank(rng.normal(scale=scale, size=(c, d)))
    return batch, bank


def ks_distance_uniform(samples):
    """One-sample Kolmogorov-Smirnov distance against Uniform(0, 1)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(upper - x), np.max(x - lower)))


def seeded(seed):
    return make_rng(seed)
