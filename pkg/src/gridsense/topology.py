"""Tree-structured grid model: nodes, cable branches, loads, sensor ports.

The JSON schema written/read here is the interchange format used by the CLI
and the service:

    {"nodes": [{"id", "x", "y"}],
     "branches": [{"id", "a", "b", "length_m", "cable", "inline": [...]}],
     "loads": {node_id: load model},
     "ports": [{"node", "y0"}]}

Load models are either a constant complex admittance or series/parallel RLC
with named parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .tlcore import CableSpec, FrequencyGrid


class TopologyError(ValueError):
    """Invalid network structure or dangling reference."""


# ---------------------------------------------------------------------------
# load / admittance models

@dataclass(frozen=True)
class ConstantLoad:
    y_s: complex = 0.0

    def admittance(self, f_hz: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(f_hz).shape, complex(self.y_s))

    def to_dict(self) -> dict:
        return {"kind": "constant", "re": self.y_s.real, "im": self.y_s.imag}


@dataclass(frozen=True)
class OpenLoad:
    def admittance(self, f_hz: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(f_hz).shape, dtype=complex)

    def to_dict(self) -> dict:
        return {"kind": "open"}


@dataclass(frozen=True)
class SeriesRLC:
    """Series R-L-C branch to reference; omit L with l=0 and C with c=None."""

    r_ohm: float = 0.0
    l_h: float = 0.0
    c_f: float | None = None

    def admittance(self, f_hz: np.ndarray) -> np.ndarray:
        w = 2.0 * np.pi * np.asarray(f_hz, dtype=float)
        z = self.r_ohm + 1j * w * self.l_h
        if self.c_f is not None:
            z = z + 1.0 / (1j * w * self.c_f)
        return 1.0 / z

    def to_dict(self) -> dict:
        d = {"kind": "series_rlc", "r_ohm": self.r_ohm, "l_h": self.l_h}
        if self.c_f is not None:
            d["c_f"] = self.c_f
        return d


@dataclass(frozen=True)
class ParallelRLC:
    """Parallel R-L-C to reference; omit elements with None."""

    r_ohm: float | None = None
    l_h: float | None = None
    c_f: float | None = None

    def admittance(self, f_hz: np.ndarray) -> np.ndarray:
        w = 2.0 * np.pi * np.asarray(f_hz, dtype=float)
        y = np.zeros(w.shape, dtype=complex)
        if self.r_ohm is not None:
            y = y + 1.0 / self.r_ohm
        if self.l_h is not None:
            y = y + 1.0 / (1j * w * self.l_h)
        if self.c_f is not None:
            y = y + 1j * w * self.c_f
        return y

    def to_dict(self) -> dict:
        d: dict = {"kind": "parallel_rlc"}
        for key, val in (("r_ohm", self.r_ohm), ("l_h", self.l_h), ("c_f", self.c_f)):
            if val is not None:
                d[key] = val
        return d


LoadModel = ConstantLoad | OpenLoad | SeriesRLC | ParallelRLC


def load_from_dict(d: dict) -> LoadModel:
    kind = d.get("kind")
    if kind == "constant":
        return ConstantLoad(complex(d.get("re", 0.0), d.get("im", 0.0)))
    if kind == "open":
        return OpenLoad()
    if kind == "series_rlc":
        return SeriesRLC(d.get("r_ohm", 0.0), d.get("l_h", 0.0), d.get("c_f"))
    if kind == "parallel_rlc":
        return ParallelRLC(d.get("r_ohm"), d.get("l_h"), d.get("c_f"))
    raise TopologyError(f"unknown load model kind {kind!r}")


def load_matrix(load: LoadModel, grid: FrequencyGrid, n: int) -> np.ndarray:
    """Termination admittance as a (nf, n, n) stack (same load per channel)."""
    y = load.admittance(grid.tones)
    out = np.zeros((grid.count, n, n), dtype=complex)
    for i in range(n):
        out[:, i, i] = y
    return out


def stamp_matrix(y: np.ndarray, channels: tuple[int, ...], n: int) -> np.ndarray:
    """Shunt stamp for a fault on the given channel(s).

    (k,) puts y between channel k and reference; (1, 2) puts y between the
    two channel conductors.
    """
    y = np.asarray(y, dtype=complex)
    out = np.zeros(y.shape + (n, n), dtype=complex)
    chans = tuple(channels)
    if any(c < 1 or c > n for c in chans):
        raise TopologyError(f"channel selection {chans} exceeds n_channels={n}")
    if len(chans) == 1:
        k = chans[0] - 1
        out[..., k, k] = y
    elif len(chans) == 2:
        i, j = chans[0] - 1, chans[1] - 1
        out[..., i, i] = y
        out[..., j, j] = y
        out[..., i, j] = -y
        out[..., j, i] = -y
    else:
        raise TopologyError("channels must name one or two conductors")
    return out


# ---------------------------------------------------------------------------
# structural elements

@dataclass(frozen=True)
class Node:
    id: str
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class InlineShunt:
    offset_m: float
    admittance: LoadModel
    channels: tuple[int, ...] = (1,)

    def to_dict(self) -> dict:
        return {"kind": "shunt", "offset_m": self.offset_m,
                "admittance": self.admittance.to_dict(),
                "channels": list(self.channels)}


@dataclass(frozen=True)
class DegradedSection:
    start_m: float
    end_m: float
    cable: CableSpec

    def to_dict(self) -> dict:
        return {"kind": "degraded", "start_m": self.start_m, "end_m": self.end_m,
                "cable": cable_to_dict(self.cable)}


@dataclass(frozen=True)
class Branch:
    id: str
    a: str
    b: str
    length_m: float
    cable: CableSpec
    shunts: tuple[InlineShunt, ...] = ()
    degraded: tuple[DegradedSection, ...] = ()

    def check(self):
        if self.length_m < 0:
            raise TopologyError(f"branch {self.id}: negative length")
        for s in self.shunts:
            if not 0.0 <= s.offset_m <= self.length_m:
                raise TopologyError(f"branch {self.id}: shunt offset outside branch")
        spans = sorted((d.start_m, d.end_m) for d in self.degraded)
        for lo, hi in spans:
            if not (0.0 <= lo < hi <= self.length_m):
                raise TopologyError(f"branch {self.id}: degraded span outside branch")
        for (lo1, hi1), (lo2, hi2) in zip(spans, spans[1:]):
            if lo2 < hi1:
                raise TopologyError(f"branch {self.id}: overlapping degraded spans")


@dataclass(frozen=True)
class Port:
    node: str
    y0: LoadModel | None = None  # None: matched to the attached cable's Y_C


def cable_to_dict(cable: CableSpec) -> dict:
    return {
        "n_channels": cable.n_channels,
        "r0_ohm_per_m": cable.r0_ohm_per_m,
        "l_h_per_m": cable.l_h_per_m,
        "g0_s_per_m": cable.g0_s_per_m,
        "c_f_per_m": cable.c_f_per_m,
        "f_ref_hz": cable.f_ref_hz,
        "mutual_ratio": cable.mutual_ratio,
    }


def cable_from_dict(d: dict) -> CableSpec:
    return CableSpec(**d)


@dataclass
class Topology:
    nodes: list[Node]
    branches: list[Branch]
    loads: dict[str, LoadModel] = field(default_factory=dict)
    ports: list[Port] = field(default_factory=list)

    # -- structure -----------------------------------------------------

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise TopologyError(f"unknown node {node_id!r}")

    def branch(self, branch_id: str) -> Branch:
        for b in self.branches:
            if b.id == branch_id:
                return b
        raise TopologyError(f"unknown branch {branch_id!r}")

    def adjacency(self) -> dict[str, list[tuple[Branch, str]]]:
        adj: dict[str, list[tuple[Branch, str]]] = {n.id: [] for n in self.nodes}
        for b in self.branches:
            adj[b.a].append((b, b.b))
            adj[b.b].append((b, b.a))
        return adj

    def degree(self, node_id: str) -> int:
        return len(self.adjacency()[node_id])

    def n_channels(self) -> int:
        return self.branches[0].cable.n_channels if self.branches else 1

    def validate(self):
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        if len(self.branches) != len(self.nodes) - 1:
            raise TopologyError("branch count must be node count - 1 (tree)")
        known = set(ids)
        for b in self.branches:
            if b.a not in known or b.b not in known:
                raise TopologyError(f"branch {b.id} references unknown node")
            if b.length_m <= 0:
                raise TopologyError(f"branch {b.id}: length must be positive")
            b.check()
        adj = self.adjacency()
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            u = stack.pop()
            for _, v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if seen != known:
            raise TopologyError("network is not connected")
        port_nodes = {p.node for p in self.ports}
        for nid in known:
            if len(adj[nid]) == 1 and nid not in self.loads \
                    and nid not in port_nodes:
                raise TopologyError(f"leaf node {nid} carries no termination")
        for nid in self.loads:
            if nid not in known:
                raise TopologyError(f"load references unknown node {nid!r}")
        for p in self.ports:
            if p.node not in known:
                raise TopologyError(f"port references unknown node {p.node!r}")

    def path_between(self, a: str, b: str) -> list[tuple[Branch, str, str]]:
        """Ordered (branch, from_node, to_node) steps along the unique a->b path."""
        adj = self.adjacency()
        prev: dict[str, tuple[Branch, str]] = {}
        seen = {a}
        stack = [a]
        while stack:
            u = stack.pop()
            if u == b:
                break
            for br, v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    prev[v] = (br, u)
                    stack.append(v)
        if b not in seen:
            raise TopologyError(f"no path between {a!r} and {b!r}")
        steps = []
        cur = b
        while cur != a:
            br, parent = prev[cur]
            steps.append((br, parent, cur))
            cur = parent
        return list(reversed(steps))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "x": n.x, "y": n.y} for n in self.nodes],
            "branches": [
                {
                    "id": b.id, "a": b.a, "b": b.b, "length_m": b.length_m,
                    "cable": cable_to_dict(b.cable),
                    "inline": [s.to_dict() for s in b.shunts]
                    + [d.to_dict() for d in b.degraded],
                }
                for b in self.branches
            ],
            "loads": {nid: load.to_dict() for nid, load in sorted(self.loads.items())},
            "ports": [
                {"node": p.node, "y0": p.y0.to_dict() if p.y0 is not None else None}
                for p in self.ports
            ],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        nodes = [Node(n["id"], n.get("x", 0.0), n.get("y", 0.0)) for n in d["nodes"]]
        branches = []
        for bd in d["branches"]:
            shunts = []
            degraded = []
            for item in bd.get("inline", []):
                if item.get("kind") == "shunt":
                    shunts.append(InlineShunt(item["offset_m"],
                                              load_from_dict(item["admittance"]),
                                              tuple(item.get("channels", [1]))))
                elif item.get("kind") == "degraded":
                    degraded.append(DegradedSection(item["start_m"], item["end_m"],
                                                    cable_from_dict(item["cable"])))
                else:
                    raise TopologyError(f"unknown inline element {item.get('kind')!r}")
            branches.append(Branch(bd["id"], bd["a"], bd["b"], bd["length_m"],
                                   cable_from_dict(bd["cable"]),
                                   tuple(shunts), tuple(degraded)))
        loads = {nid: load_from_dict(ld) for nid, ld in d.get("loads", {}).items()}
        ports = [Port(p["node"],
                      load_from_dict(p["y0"]) if p.get("y0") is not None else None)
                 for p in d.get("ports", [])]
        return cls(nodes, branches, loads, ports)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))


def node_distances(topology: Topology, port: str) -> dict[str, float]:
    """Tree-path distance in meters from the port node to every node."""
    adj = topology.adjacency()
    if port not in adj:
        raise TopologyError(f"unknown port node {port!r}")
    dist = {port: 0.0}
    stack = [port]
    while stack:
        u = stack.pop()
        for br, v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + br.length_m
                stack.append(v)
    return dist


# ---------------------------------------------------------------------------
# anomalies

@dataclass(frozen=True)
class LoadChange:
    node: str
    load: LoadModel

    def to_dict(self) -> dict:
        return {"kind": "load_change", "node": self.node, "load": self.load.to_dict()}


@dataclass(frozen=True)
class LocalizedFault:
    branch: str
    offset_m: float
    shunt: LoadModel
    channels: tuple[int, ...] = (1,)

    def to_dict(self) -> dict:
        return {"kind": "localized_fault", "branch": self.branch,
                "offset_m": self.offset_m, "shunt": self.shunt.to_dict(),
                "channels": list(self.channels)}


@dataclass(frozen=True)
class DistributedFault:
    branch: str
    start_m: float
    length_m: float
    cable: CableSpec

    def to_dict(self) -> dict:
        return {"kind": "distributed_fault", "branch": self.branch,
                "start_m": self.start_m, "length_m": self.length_m,
                "cable": cable_to_dict(self.cable)}


Anomaly = LoadChange | LocalizedFault | DistributedFault


def anomaly_from_dict(d: dict, topology: Topology | None = None) -> Anomaly:
    """Parse an anomaly fragment; degraded cables may be given as relative
    ``scale`` factors of the target branch's cable."""
    kind = d.get("kind")
    if kind == "load_change":
        return LoadChange(d["node"], load_from_dict(d["load"]))
    if kind == "localized_fault":
        return LocalizedFault(d["branch"], d["offset_m"],
                              load_from_dict(d["shunt"]),
                              tuple(d.get("channels", [1])))
    if kind == "distributed_fault":
        if "cable" in d:
            cable = cable_from_dict(d["cable"])
        elif "scale" in d:
            if topology is None:
                raise TopologyError("scale shorthand needs the target topology")
            cable = topology.branch(d["branch"]).cable.scaled(**d["scale"])
        else:
            raise TopologyError("distributed fault needs 'cable' or 'scale'")
        return DistributedFault(d["branch"], d["start_m"], d["length_m"], cable)
    raise TopologyError(f"unknown anomaly kind {kind!r}")


def inject_anomaly(topology: Topology, anomaly: Anomaly) -> Topology:
    """Return a new topology with the anomaly applied; the input is unchanged."""
    nodes = list(topology.nodes)
    branches = list(topology.branches)
    loads = dict(topology.loads)
    ports = list(topology.ports)

    if isinstance(anomaly, LoadChange):
        topology.node(anomaly.node)
        loads[anomaly.node] = anomaly.load
    elif isinstance(anomaly, LocalizedFault):
        br = topology.branch(anomaly.branch)
        if not 0.0 <= anomaly.offset_m <= br.length_m:
            raise TopologyError("fault offset outside branch")
        new = replace(br, shunts=br.shunts + (
            InlineShunt(anomaly.offset_m, anomaly.shunt, anomaly.channels),))
        branches[branches.index(br)] = new
    elif isinstance(anomaly, DistributedFault):
        br = topology.branch(anomaly.branch)
        section = DegradedSection(anomaly.start_m,
                                  anomaly.start_m + anomaly.length_m, anomaly.cable)
        new = replace(br, degraded=br.degraded + (section,))
        new.check()
        branches[branches.index(br)] = new
    else:
        raise TopologyError(f"unsupported anomaly {type(anomaly).__name__}")

    return Topology(nodes, branches, loads, ports)
