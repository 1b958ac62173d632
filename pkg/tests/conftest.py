import sys
from pathlib import Path

import numpy as np
import pytest

from rtchangepoint import ItemParams, ModelConfig, StructuralParams, pack_params
from rtchangepoint.quadrature import build_grid

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable


def make_instance(seed, n=20, n_items=8, boundary=3, k=11, sigma_range=(0.2, 0.4),
                  alpha_range=(0.5, 1.5), psi=(0.2, np.log(0.85 / 0.15), -0.5)):
    """Seeded random parameters plus a random data matrix.

    Data are plain normal draws (not from the model); these instances
    exercise likelihood algebra, not recovery.
    """
    rng = np.random.default_rng(seed)
    config = ModelConfig(n_items=n_items, boundary=boundary)
    items = ItemParams(
        beta=rng.uniform(3.0, 4.0, n_items),
        alpha=rng.uniform(*alpha_range, n_items),
        gamma=np.concatenate(
            [np.zeros(boundary + 1), rng.uniform(0.3, 0.8, config.n_locations)]
        ),
        sigma=rng.uniform(*sigma_range, n_items),
        config=config,
    )
    psi = StructuralParams(*psi)
    theta = pack_params(items, psi, config)
    y = rng.normal(3.5, 1.0, (n, n_items))
    return {"y": y, "items": items, "psi": psi, "theta": theta,
            "config": config, "grid": build_grid(k)}


@pytest.fixture
def instance():
    return make_instance(0)
