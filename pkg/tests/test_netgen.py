import numpy as np
import pytest

from gridsense.netgen import (ConfigError, LoadDistribution, TopologyConfig,
                              generate_topology)
from gridsense.topology import OpenLoad


def test_two_nodes_minimal():
    topo = generate_topology(TopologyConfig(n_nodes=2), seed=0)
    assert len(topo.branches) == 1
    assert len(topo.loads) == 1
    assert len(topo.ports) == 1


def test_generation_is_deterministic():
    config = TopologyConfig(n_nodes=20)
    a = generate_topology(config, seed=7).to_json()
    b = generate_topology(config, seed=7).to_json()
    assert a == b
    c = generate_topology(config, seed=8).to_json()
    assert c != a


def test_generated_graphs_are_trees():
    for n in (5, 10, 20):
        config = TopologyConfig(n_nodes=n)
        for seed in range(8):
            topo = generate_topology(config, seed)
            assert len(topo.branches) == n - 1
            topo.validate()  # includes connectivity and leaf loads


def test_degree_cap_is_respected():
    config = TopologyConfig(n_nodes=30, max_node_degree=3)
    for seed in range(6):
        topo = generate_topology(config, seed)
        for node in topo.node_ids:
            assert topo.degree(node) <= 3
        topo.validate()


def test_infeasible_degree_bound():
    with pytest.raises(ConfigError):
        TopologyConfig(n_nodes=5, max_node_degree=1).check()
    with pytest.raises(ConfigError):
        generate_topology(TopologyConfig(n_nodes=5, max_node_degree=1), 0)


def test_mean_branch_length_tracks_target():
    """Sampling check: the empirical mean stays within 15% of 900 m."""
    config = TopologyConfig(n_nodes=20)
    means = []
    for seed in range(1000):
        topo = generate_topology(config, seed)
        means.append(np.mean([b.length_m for b in topo.branches]))
    means = np.array(means)
    assert np.all((means > 765.0) & (means < 1035.0))
    assert abs(means.mean() - 900.0) < 1.0


def test_port_sits_on_highest_degree_node():
    config = TopologyConfig(n_nodes=15)
    for seed in range(5):
        topo = generate_topology(config, seed)
        port = topo.ports[0].node
        top = max(topo.degree(n) for n in topo.node_ids)
        assert topo.degree(port) == top


def test_load_distribution_mix():
    rng = np.random.default_rng(123)
    dist = LoadDistribution()
    loads = [dist.sample(rng) for _ in range(400)]
    open_frac = sum(isinstance(l, OpenLoad) for l in loads) / len(loads)
    assert 0.05 < open_frac < 0.17
    rlc = [l for l in loads if not isinstance(l, OpenLoad)]
    resonant = sum(1 for l in rlc if l.c_f is not None) / len(rlc)
    assert 0.2 < resonant < 0.4
    assert all(5.0 <= l.r_ohm <= 1000.0 for l in rlc)
