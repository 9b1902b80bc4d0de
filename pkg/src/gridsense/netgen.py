"""Random distribution-grid generation.

Nodes are scattered uniformly on a square, joined by their Euclidean minimum
spanning tree, degree-capped by re-attachment, and finally rescaled so the
realized mean branch length equals the requested average exactly.  Leaf nodes
draw terminations from a configurable load distribution; the default sensor
port sits at the highest-degree node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree

from .tlcore import CableSpec
from .topology import Branch, Node, OpenLoad, Port, SeriesRLC, Topology


class ConfigError(ValueError):
    """Unusable generator or experiment configuration."""


@dataclass(frozen=True)
class LoadDistribution:
    """Random termination mix: opens, resistive, and in-band resonant loads."""

    r_min_ohm: float = 5.0
    r_max_ohm: float = 1000.0
    resonant_fraction: float = 0.3
    open_fraction: float = 0.1
    band_max_hz: float = 500e3

    def sample(self, rng: np.random.Generator):
        if rng.random() < self.open_fraction:
            return OpenLoad()
        r = math.exp(rng.uniform(math.log(self.r_min_ohm),
                                 math.log(self.r_max_ohm)))
        if rng.random() < self.resonant_fraction:
            f_res = rng.uniform(0.15, 0.85) * self.band_max_hz
            q = rng.uniform(1.0, 5.0)
            l = q * r / (2.0 * math.pi * f_res)
            c = 1.0 / ((2.0 * math.pi * f_res) ** 2 * l)
            return SeriesRLC(r_ohm=r, l_h=l, c_f=c)
        return SeriesRLC(r_ohm=r)


@dataclass(frozen=True)
class TopologyConfig:
    n_nodes: int = 20
    avg_branch_length_m: float = 900.0
    max_node_degree: int = 4
    area_side_m: float | None = None
    cable: CableSpec = field(default_factory=CableSpec)
    loads: LoadDistribution = field(default_factory=LoadDistribution)

    def check(self):
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be at least 2")
        if self.avg_branch_length_m <= 0:
            raise ConfigError("avg_branch_length_m must be positive")
        if self.max_node_degree < 2:
            raise ConfigError("max_node_degree below 2 prevents connectivity")


def _mst_edges(points: np.ndarray) -> list[tuple[int, int]]:
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    mst = minimum_spanning_tree(csr_matrix(d))
    rows, cols = mst.nonzero()
    return [(min(i, j), max(i, j)) for i, j in zip(rows.tolist(), cols.tolist())]


def _cap_degrees(edges: list[tuple[int, int]], points: np.ndarray,
                 cap: int) -> list[tuple[int, int]]:
    """Re-attach longest edges of overfull nodes until all degrees <= cap."""
    n = points.shape[0]
    edges = set(edges)

    def degrees():
        deg = [0] * n
        for i, j in edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def component(start: int, skip: tuple[int, int]) -> set[int]:
        adj: dict[int, list[int]] = {k: [] for k in range(n)}
        for i, j in edges:
            if (i, j) == skip:
                continue
            adj[i].append(j)
            adj[j].append(i)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    for _ in range(4 * n * n):
        deg = degrees()
        over = [k for k in range(n) if deg[k] > cap]
        if not over:
            return sorted(edges)
        v = over[0]
        incident = sorted((e for e in edges if v in e),
                          key=lambda e: -np.linalg.norm(points[e[0]] - points[e[1]]))
        i, j = incident[0]
        u = j if i == v else i
        edges.remove((i, j))
        far_side = component(u, (i, j))
        candidates = [w for w in range(n)
                      if w not in far_side and w != v and deg[w] < cap]
        if not candidates:
            raise ConfigError("degree bound prevents connectivity")
        w = min(candidates, key=lambda k: np.linalg.norm(points[k] - points[u]))
        edges.add((min(u, w), max(u, w)))
    raise ConfigError("degree capping did not converge")


def generate_topology(config: TopologyConfig, seed) -> Topology:
    """Random connected tree grid; deterministic for a given seed."""
    config.check()
    rng = np.random.default_rng(seed)
    n = config.n_nodes
    side = config.area_side_m or config.avg_branch_length_m * math.sqrt(n)
    points = rng.uniform(0.0, side, size=(n, 2))

    if n == 2:
        edges = [(0, 1)]
    else:
        edges = _cap_degrees(_mst_edges(points), points, config.max_node_degree)

    lengths = [float(np.linalg.norm(points[i] - points[j])) for i, j in edges]
    scale = config.avg_branch_length_m / (sum(lengths) / len(lengths))
    points = points * scale

    nodes = [Node(f"N{k + 1}", float(points[k, 0]), float(points[k, 1]))
             for k in range(n)]
    branches = [
        Branch(f"B{idx + 1}", f"N{i + 1}", f"N{j + 1}",
               float(np.linalg.norm(points[i] - points[j])), config.cable)
        for idx, (i, j) in enumerate(sorted(edges))
    ]

    deg = [0] * n
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    # the sensing modem terminates its own node, so the port leaf (only
    # possible for n = 2) draws no load
    port_idx = max(range(n), key=lambda k: (deg[k], -k))
    loads = {}
    for k in range(n):
        if deg[k] == 1 and k != port_idx:
            loads[f"N{k + 1}"] = config.loads.sample(rng)

    topo = Topology(nodes, branches, loads, [Port(f"N{port_idx + 1}")])
    topo.validate()
    return topo
