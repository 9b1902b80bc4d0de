"""Network responses by chain-matrix reduction on the branch tree.

A branch is a cascade of uniform line sections (split at inline shunts and
degraded spans) with shunt stamps in between.  Input admittance folds the
tree leaf-to-root; the transfer function chains the tx->rx path and folds
every off-path subtree as a shunt at its junction.
"""

from __future__ import annotations

import numpy as np

from .tlcore import (FrequencyGrid, Spectrum, characteristic_reference,
                     propagation_params, rmatsolve, section_abcd, shunt_abcd,
                     solve_stack)
from .topology import (Branch, Topology, TopologyError, load_matrix,
                       stamp_matrix)


def _branch_elements(branch: Branch, from_node: str | None):
    """Ordered line/shunt elements seen when entering the branch at from_node."""
    if from_node is None:
        from_node = branch.a
    if from_node not in (branch.a, branch.b):
        raise TopologyError(f"node {from_node!r} is not an endpoint of {branch.id}")
    L = branch.length_m
    mirror = from_node == branch.b

    def pos(x: float) -> float:
        return L - x if mirror else x

    shunts = sorted(((pos(s.offset_m), s) for s in branch.shunts), key=lambda t: t[0])
    spans = sorted((min(pos(d.start_m), pos(d.end_m)),
                    max(pos(d.start_m), pos(d.end_m)), d.cable)
                   for d in branch.degraded)

    cuts = {0.0, L}
    cuts.update(x for x, _ in shunts)
    for lo, hi, _ in spans:
        cuts.update((lo, hi))
    points = sorted(cuts)

    def cable_at(x: float):
        for lo, hi, cable in spans:
            if lo <= x < hi:
                return cable
        return branch.cable

    elements = []
    for x0, x1 in zip(points, points[1:]):
        for x, s in shunts:
            if x == x0:
                elements.append(("shunt", s))
        if x1 > x0:
            elements.append(("line", cable_at(0.5 * (x0 + x1)), x1 - x0))
    for x, s in shunts:
        if x == L:
            elements.append(("shunt", s))
    return elements


def branch_abcd(branch: Branch, grid: FrequencyGrid,
                from_node: str | None = None) -> np.ndarray:
    """Chain matrix (nf, 2n, 2n) of the whole branch, entering at from_node."""
    n = branch.cable.n_channels
    M = np.broadcast_to(np.eye(2 * n, dtype=complex),
                        (grid.count, 2 * n, 2 * n)).copy()
    for element in _branch_elements(branch, from_node):
        if element[0] == "line":
            _, cable, length = element
            sec = section_abcd(propagation_params(cable, grid), length)
        else:
            _, s = element
            y = stamp_matrix(s.admittance.admittance(grid.tones), s.channels, n)
            sec = shunt_abcd(y, grid.count, n)
        M = M @ sec
    return M


def _fold_through(M: np.ndarray, y_far: np.ndarray, n: int, what: str) -> np.ndarray:
    """Admittance at the near end: (C + D Y)(A + B Y)^-1."""
    A, B = M[:, :n, :n], M[:, :n, n:]
    C, D = M[:, n:, :n], M[:, n:, n:]
    return rmatsolve(C + D @ y_far, A + B @ y_far, what)


def _node_load(topology: Topology, grid: FrequencyGrid, node: str,
               n: int) -> np.ndarray:
    load = topology.loads.get(node)
    if load is None:
        return np.zeros((grid.count, n, n), dtype=complex)
    return load_matrix(load, grid, n)


def _subtree_admittance(topology: Topology, grid: FrequencyGrid, node: str,
                        exclude: Branch | None, adj) -> np.ndarray:
    n = topology.n_channels()
    y = _node_load(topology, grid, node, n)
    for br, other in adj[node]:
        if exclude is not None and br.id == exclude.id:
            continue
        y_far = _subtree_admittance(topology, grid, other, br, adj)
        M = branch_abcd(br, grid, from_node=node)
        y = y + _fold_through(M, y_far, n, f"fold of branch {br.id}")
    return y


def _resolve_port(topology: Topology, port) -> str:
    node = port.node if hasattr(port, "node") else port
    topology.node(node)
    return node


def port_reference(topology: Topology, port, grid: FrequencyGrid) -> np.ndarray:
    """Reference admittance of a sensor port (matched to the attached cable
    unless the port declares its own model)."""
    node = _resolve_port(topology, port)
    for p in topology.ports:
        if p.node == node and p.y0 is not None:
            return load_matrix(p.y0, grid, topology.n_channels())
    for br in topology.branches:
        if node in (br.a, br.b):
            return characteristic_reference(br.cable, grid)
    raise TopologyError(f"port node {node!r} has no attached branch")


def input_admittance(topology: Topology, port, grid: FrequencyGrid) -> Spectrum:
    """Admittance seen from the port into the whole network."""
    node = _resolve_port(topology, port)
    adj = topology.adjacency()
    values = _subtree_admittance(topology, grid, node, None, adj)
    return Spectrum("yin", grid, values,
                    meta={"port": node, "y0": port_reference(topology, node, grid)})


def transfer_function(topology: Topology, tx: str, rx: str, grid: FrequencyGrid,
                      zs: float = 1.0, zl: float = 100e3) -> Spectrum:
    """Voltage transfer V_rx / V_source for a source behind zs feeding at tx
    and a receiver of input impedance zl at rx."""
    if tx == rx:
        raise TopologyError("tx and rx must differ")
    n = topology.n_channels()
    adj = topology.adjacency()
    steps = topology.path_between(tx, rx)
    path_ids = {br.id for br, _, _ in steps}

    def off_path(node: str) -> np.ndarray:
        y = _node_load(topology, grid, node, n)
        for br, other in adj[node]:
            if br.id in path_ids:
                continue
            y_far = _subtree_admittance(topology, grid, other, br, adj)
            y = y + _fold_through(branch_abcd(br, grid, node), y_far, n,
                                  f"fold of branch {br.id}")
        return y

    M = np.broadcast_to(np.eye(2 * n, dtype=complex),
                        (grid.count, 2 * n, 2 * n)).copy()
    for i, (br, u, _) in enumerate(steps):
        if i > 0:
            M = M @ shunt_abcd(off_path(u), grid.count, n)
        M = M @ branch_abcd(br, grid, from_node=u)

    eye = np.eye(n)
    y_end = off_path(rx) + (1.0 / zl) * eye
    y_src = off_path(tx)
    A, B = M[:, :n, :n], M[:, :n, n:]
    C, D = M[:, n:, :n], M[:, n:, n:]
    fwd = A + B @ y_end
    total = fwd + zs * (y_src @ fwd + C + D @ y_end)
    # H columns: response per driven channel
    h = solve_stack(total, np.broadcast_to(eye, total.shape).copy(),
                    "transfer function")
    return Spectrum("h", grid, h, meta={"tx": tx, "rx": rx, "zs": zs, "zl": zl})
