"""Single funnel for run-level randomness."""

import random

import numpy as np
import torch


def seed_everything(seed: int) -> np.random.Generator:
    """Seed python, numpy and torch RNGs and return a numpy generator.

    Every command seeds exactly once at startup so that reruns with the
    same config are reproducible on CPU.
    """
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    return np.random.default_rng(seed)
