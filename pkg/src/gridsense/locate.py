"""Anomaly localization from trace peaks and known topology.

Single-sensor: the first delta-trace peak gives the anomaly distance d_hat.
Load changes map directly to the node at that distance.  Faults are scored
per candidate branch: the echoes right after d_hat are predicted from the
branch endpoints (d_hat + |d_hat - d(endpoint)|) and compared against the
measured peak list; the branch with the lowest score wins.

Multi-sensor: first-peak distances from two or more ports are fused by
scanning every point of every branch for the best tree-distance agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detection import (CLASS_IMPEDANCE, CLASS_NONE, DetectionReport, Peak)
from .topology import Topology, node_distances


class LocalizationError(RuntimeError):
    """No candidate consistent with the measured distances."""


@dataclass
class LocalizationReport:
    kind: str  # "node" | "branch" | "point"
    target_id: str | None
    d_hat_m: float | None
    scores: dict[str, float] = field(default_factory=dict)
    ambiguous: bool = False
    first_node: str | None = None  # port-side endpoint of the chosen branch
    offset_m: float | None = None  # position on the branch (multi-sensor fix)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_id": self.target_id,
            "d_hat_m": self.d_hat_m,
            "scores": self.scores,
            "ambiguous": self.ambiguous,
            "first_node": self.first_node,
            "offset_m": self.offset_m,
        }


def _peak_positions(peaks) -> list[float]:
    out = []
    for p in peaks:
        out.append(p.position if isinstance(p, Peak) else float(p))
    return sorted(out)


def _nearest(value: float, targets: list[float]) -> float:
    return min(abs(value - t) for t in targets) if targets else math.inf


def localize_single(report: DetectionReport, peaks, topology: Topology,
                    port, *, bin_m: float, thr_bins: float = 1.5,
                    score_mode: str = "mean",
                    ambiguity_tol_m: float | None = None) -> LocalizationReport:
    """Locate a confirmed anomaly from its delta-trace peaks.

    ``score_mode`` selects the candidate score: "mean" averages the match
    error of both endpoint predictions (robust when one echo is masked),
    "min" keeps only the best prediction.
    """
    if not report.detected or report.anomaly_class == CLASS_NONE:
        raise ValueError("localization needs a confirmed, classified detection")
    if report.d_hat_m is None:
        raise LocalizationError("detection report carries no distance estimate")
    node = port.node if hasattr(port, "node") else port
    d_hat = float(report.d_hat_m)
    dist = node_distances(topology, node)
    positions = _peak_positions(peaks)
    tol = ambiguity_tol_m if ambiguity_tol_m is not None else 0.05 * bin_m

    if report.anomaly_class == CLASS_IMPEDANCE:
        scores = {nid: abs(d - d_hat) for nid, d in dist.items() if nid != node}
        chosen = min(scores, key=lambda k: (scores[k], k))
        within = [nid for nid, s in scores.items() if s < thr_bins * bin_m]
        return LocalizationReport("node", chosen, d_hat, scores,
                                  ambiguous=len(within) > 1)

    candidates = []
    for br in topology.branches:
        d_near = min(dist[br.a], dist[br.b])
        if d_near - bin_m <= d_hat <= d_near + br.length_m + bin_m:
            near = br.a if dist[br.a] <= dist[br.b] else br.b
            candidates.append((br, d_near, d_near + br.length_m, near))
    if not candidates:
        nearest_br = min(
            topology.branches,
            key=lambda br: abs(d_hat - min(dist[br.a], dist[br.b])
                               - 0.5 * br.length_m))
        raise LocalizationError(
            f"no branch interval contains d_hat = {d_hat:.0f} m "
            f"(nearest branch: {nearest_br.id})")

    scores = {}
    first_nodes = {}
    for br, d_near, d_far, near in candidates:
        predictions = [d_hat + abs(d_hat - d_near), d_hat + abs(d_hat - d_far)]
        errs = [_nearest(p, positions) for p in predictions]
        scores[br.id] = min(errs) if score_mode == "min" \
            else float(np.mean(errs))
        first_nodes[br.id] = near
    chosen = min(scores, key=lambda k: (scores[k], k))
    best = scores[chosen]
    ambiguous = sum(1 for s in scores.values() if s <= best + tol) > 1
    return LocalizationReport("branch", chosen, d_hat, scores,
                              ambiguous=ambiguous,
                              first_node=first_nodes[chosen])


def localize_multi(first_peak_distances: dict[str, float],
                   topology: Topology, *, bin_m: float,
                   step_m: float | None = None,
                   no_fix_bins: float = 3.0) -> LocalizationReport:
    """Geometric fusion of first-peak distances from several ports.

    Every branch is discretized at (sub-)bin resolution; the point whose
    tree distances to all ports best match the measurements wins.
    """
    if len(first_peak_distances) < 2:
        raise ValueError("multi-sensor localization needs at least 2 ports")
    step = step_m if step_m is not None else bin_m / 4.0
    dist_maps = {p: node_distances(topology, p) for p in first_peak_distances}

    best = None  # (residual, branch_id, offset)
    per_branch: dict[str, float] = {}
    hits = []
    for br in topology.branches:
        offsets = np.arange(0.0, br.length_m + 0.5 * step, step)
        offsets[-1] = br.length_m
        res = np.zeros_like(offsets)
        for port, measured in first_peak_distances.items():
            dm = dist_maps[port]
            d_pt = np.minimum(dm[br.a] + offsets, dm[br.b] + br.length_m - offsets)
            res += (d_pt - measured) ** 2
        k = int(np.argmin(res))
        per_branch[br.id] = math.sqrt(res[k] / len(first_peak_distances))
        hits.append((res[k], br.id, float(offsets[k])))
        if best is None or res[k] < best[0]:
            best = (res[k], br.id, float(offsets[k]))

    rms = math.sqrt(best[0] / len(first_peak_distances))
    if rms > no_fix_bins * bin_m:
        raise LocalizationError(
            f"no point matches the measured distances (best rms {rms:.0f} m)")

    ambiguous = False
    for res, bid, off in hits:
        if bid == best[1] and abs(off - best[2]) <= bin_m:
            continue
        if res <= best[0] + (0.01 * bin_m) ** 2:
            ambiguous = True
    return LocalizationReport("point", best[1], None, per_branch,
                              ambiguous=ambiguous, offset_m=best[2])
