import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def textured_image(rng, h, w):
    """Photo-like fixture: smooth base with edges and fine texture."""
    yy, xx = np.mgrid[0:h, 0:w]
    base = 96.0 + 60.0 * np.sin(xx / 17.0) + 40.0 * np.cos(yy / 23.0)
    edges = 55.0 * ((xx // 32 + yy // 24) % 2)
    noise = rng.normal(0.0, 6.0, size=(h, w))
    return np.clip(base + edges + noise, 0, 255).astype(np.uint8)


@pytest.fixture
def textured_256(rng):
    return textured_image(rng, 256, 256)
