import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from motionmil.flowio import FlowField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_flow(rng, height=None, width=None, scale=5.0, dtype=np.float32):
    h = height if height is not None else int(rng.integers(1, 24))
    w = width if width is not None else int(rng.integers(1, 24))
    u = rng.uniform(-scale, scale, (h, w)).astype(dtype)
    v = rng.uniform(-scale, scale, (h, w)).astype(dtype)
    return FlowField(u=u, v=v)
