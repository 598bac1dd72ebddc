"""
Seed derivation. Every stochastic component draws from a generator derived
from (master seed, component name, iteration index), so runs are
reproducible component by component and independent of execution order.
"""

import hashlib
import numpy as np


def derive_seed(master_seed: int, component: str, index: int = 0) -> int:
    """Hash the triple into a 64-bit integer seed."""
    key = f"{int(master_seed)}:{component}:{int(index)}".encode('utf-8')
    return int.from_bytes(hashlib.sha256(key).digest()[:8], 'big')


def derive_rng(master_seed: int, component: str, index: int = 0) -> np.random.Generator:
    """Return a fresh numpy Generator for one component/iteration."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(master_seed, component, index)))
