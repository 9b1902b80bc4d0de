"""Lumped-element nodal benchmark for the chain-matrix solver.

Every branch is discretized into short ladder cells: series (R + jwL) dl in
the middle, shunt (G + jwC) dl/2 at both ends (symmetric pi cell, second
order in dl).  The full nodal admittance matrix is assembled per tone and
solved directly, which shares no code path with the hyperbolic chain
matrices in :mod:`gridsense.network`.
"""

from __future__ import annotations

import math

import numpy as np

from .tlcore import FrequencyGrid, NumericError, Spectrum
from .topology import Topology, load_matrix, stamp_matrix


def _branch_cells(branch, segment_len_m: float):
    """(length, cable) cells from node a to node b plus junction shunt offsets."""
    cuts = {0.0, branch.length_m}
    cuts.update(s.offset_m for s in branch.shunts)
    for d in branch.degraded:
        cuts.update((d.start_m, d.end_m))
    points = sorted(cuts)

    def cable_at(x):
        for d in branch.degraded:
            if d.start_m <= x < d.end_m:
                return d.cable
        return branch.cable

    cells = []
    offsets = [0.0]
    for x0, x1 in zip(points, points[1:]):
        if x1 <= x0:
            continue
        k = max(1, math.ceil((x1 - x0) / segment_len_m))
        dl = (x1 - x0) / k
        cable = cable_at(0.5 * (x0 + x1))
        for i in range(k):
            cells.append((dl, cable))
            offsets.append(x0 + (i + 1) * dl)
    return cells, offsets


class _NodalSystem:
    """Assembled stamps of the discretized network, one dof per junction/channel."""

    def __init__(self, topology: Topology, grid: FrequencyGrid,
                 segment_len_m: float):
        if segment_len_m <= 0:
            raise ValueError("segment_len_m must be positive")
        self.grid = grid
        self.n = topology.n_channels()
        n, nf = self.n, grid.count
        w = 2.0 * np.pi * grid.tones

        junction: dict[str, int] = {nid: i for i, nid in enumerate(topology.node_ids)}
        next_j = len(junction)
        rows: list[int] = []
        cols: list[int] = []
        vals: list[np.ndarray] = []  # each (nf, n, n)

        def add(p: int, q: int, y: np.ndarray):
            rows.append(p)
            cols.append(q)
            vals.append(y)

        def add_shunt(j: int, y: np.ndarray):
            add(j, j, y)

        for branch in topology.branches:
            cells, offsets = _branch_cells(branch, segment_len_m)
            chain = [junction[branch.a]]
            for _ in range(len(cells) - 1):
                chain.append(next_j)
                next_j += 1
            chain.append(junction[branch.b])
            shunt_at = {round(s.offset_m, 9): s for s in branch.shunts}
            for (dl, cable), p, q, x_end in zip(cells, chain, chain[1:], offsets[1:]):
                R, L, G, C = cable.rlgc(grid.tones)
                z_series = (R + 1j * w[:, None, None] * L) * dl
                y_series = np.linalg.inv(z_series)
                y_half = 0.5 * (G + 1j * w[:, None, None] * C) * dl
                add(p, p, y_series + y_half)
                add(q, q, y_series + y_half)
                add(p, q, -y_series)
                add(q, p, -y_series)
            for x, j in zip(offsets, chain):
                s = shunt_at.get(round(x, 9))
                if s is not None:
                    y = stamp_matrix(s.admittance.admittance(grid.tones),
                                     s.channels, n)
                    add_shunt(j, y)

        for nid, load in topology.loads.items():
            add_shunt(junction[nid], load_matrix(load, grid, n))

        self.junction = junction
        self.n_junctions = next_j
        self.size = next_j * n
        self._rows = np.array(rows)
        self._cols = np.array(cols)
        self._vals = np.stack(vals)  # (n_stamps, nf, n, n)

    def dofs(self, node: str) -> np.ndarray:
        j = self.junction[node]
        return np.arange(j * self.n, (j + 1) * self.n)

    def solve(self, injections: dict[int, np.ndarray],
              extra_shunts: dict[int, complex] | None = None) -> np.ndarray:
        """Node voltages (nf, size, n_rhs) for per-tone current injections."""
        nf, n = self.grid.count, self.n
        n_rhs = next(iter(injections.values())).shape[-1]
        out = np.empty((nf, self.size, n_rhs), dtype=complex)
        base = np.zeros((self.size, self.size), dtype=complex)
        rr = (self._rows[:, None, None] * n + np.arange(n)[None, :, None])
        cc = (self._cols[:, None, None] * n + np.arange(n)[None, None, :])
        rr = np.broadcast_to(rr, self._vals.shape[:1] + (n, n)).ravel()
        cc = np.broadcast_to(cc, self._vals.shape[:1] + (n, n)).ravel()
        for k in range(nf):
            Y = base.copy()
            np.add.at(Y, (rr, cc), self._vals[:, k].ravel())
            if extra_shunts:
                for dof, y in extra_shunts.items():
                    Y[dof, dof] += y
            rhs = np.zeros((self.size, n_rhs), dtype=complex)
            for dof, cur in injections.items():
                rhs[dof] = cur[k] if np.ndim(cur) > 1 else cur
            try:
                out[k] = np.linalg.solve(Y, rhs)
            except np.linalg.LinAlgError:
                raise NumericError("singular nodal matrix", [k]) from None
        return out


def nodal_input_admittance(topology: Topology, port, grid: FrequencyGrid,
                           segment_len_m: float = 10.0) -> Spectrum:
    """Y_in at the port from the discretized nodal system."""
    node = port.node if hasattr(port, "node") else port
    sys = _NodalSystem(topology, grid, segment_len_m)
    dofs = sys.dofs(node)
    inj = {int(d): np.eye(sys.n)[i] for i, d in enumerate(dofs)}
    v = sys.solve(inj)
    vp = v[:, dofs, :]
    yin = np.linalg.inv(vp)
    return Spectrum("yin", grid, yin, meta={"port": node, "oracle": "nodal"})


def nodal_transfer_function(topology: Topology, tx: str, rx: str,
                            grid: FrequencyGrid, zs: float = 1.0,
                            zl: float = 100e3,
                            segment_len_m: float = 10.0) -> Spectrum:
    """V_rx / V_source from the discretized nodal system (source behind zs)."""
    sys = _NodalSystem(topology, grid, segment_len_m)
    tx_dofs, rx_dofs = sys.dofs(tx), sys.dofs(rx)
    extra = {int(d): 1.0 / zs for d in tx_dofs}
    extra.update({int(d): 1.0 / zl for d in rx_dofs})
    inj = {int(d): np.eye(sys.n)[i] / zs for i, d in enumerate(tx_dofs)}
    v = sys.solve(inj, extra_shunts=extra)
    h = v[:, rx_dofs, :]
    return Spectrum("h", grid, h,
                    meta={"tx": tx, "rx": rx, "zs": zs, "zl": zl,
                          "oracle": "nodal"})


def nodal_oracle(topology: Topology, grid: FrequencyGrid,
                 segment_len_m: float = 10.0, *, port=None,
                 tx: str | None = None, rx: str | None = None,
                 zs: float = 1.0, zl: float = 100e3):
    """Reference (Yin, H) pair; H is computed only when tx/rx are given."""
    if port is None:
        port = topology.ports[0].node if topology.ports else topology.node_ids[0]
    yin = nodal_input_admittance(topology, port, grid, segment_len_m)
    h = None
    if tx is not None and rx is not None:
        h = nodal_transfer_function(topology, tx, rx, grid, zs, zl, segment_len_m)
    return yin, h
