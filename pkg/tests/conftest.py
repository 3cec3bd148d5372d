import numpy as np
import pytest
from hypothesis import settings

from ntcompress.core import Topology, TrafficDataset

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_topology(rng, max_nodes=5, max_links=8):
    n = int(rng.integers(2, max_nodes + 1))
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    k = int(rng.integers(1, min(max_links, len(pairs)) + 1))
    chosen = rng.choice(len(pairs), size=k, replace=False)
    return Topology(n, [pairs[i] for i in chosen])


def random_dataset(rng, max_links=8, max_bins=60, min_bins=1):
    topo = random_topology(rng, max_links=max_links)
    t = int(rng.integers(min_bins, max_bins + 1))
    v_max = int(rng.choice([0, 1, 7, 255, 1000, 70000, 2**31]))
    kind = rng.integers(0, 3)
    if kind == 0:
        vals = rng.integers(0, v_max + 1, size=(t, topo.num_links))
    elif kind == 1:
        base = rng.integers(0, v_max + 1, size=topo.num_links)
        vals = np.clip(base + rng.integers(-3, 4, size=(t, topo.num_links)), 0, v_max)
    else:
        vals = np.full((t, topo.num_links), int(rng.integers(0, v_max + 1)))
    return TrafficDataset(topo, vals, v_max=v_max)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line_topology():
    # 0 -> 1 -> 2 plus the reverse links
    return Topology.bidirectional(3, [(0, 1), (1, 2)])
