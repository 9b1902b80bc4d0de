"""Canned networks used by tests and demos."""

from __future__ import annotations

from .tlcore import CableSpec
from .topology import (Branch, DistributedFault, Node, Port, SeriesRLC,
                       Topology)

# Long-haul MV cable: same LC (v = 1.58e8 m/s) as the default spec but with
# lower series loss so echoes from the 13-16 km range stay visible while
# multi-bounce wraps (past the 18.4 km unambiguous range) fade out.
LONG_HAUL_CABLE = CableSpec(r0_ohm_per_m=0.02, g0_s_per_m=2e-10)

TRUNK_M = 11_000.0
BRANCH2_M = 1_950.0   # load at 12.95 km from the port
BRANCH3_M = 4_950.0   # load at 15.95 km from the port
DAMAGE_START_M = 500.0  # 11.5 km from the port
DAMAGE_LENGTH_M = 900.0  # ends 12.4 km from the port


def damaged_section_network(faulted_branch: str = "B3",
                            cable: CableSpec = LONG_HAUL_CABLE,
                            r_scale: float = 1.5,
                            c_scale: float = 1.1):
    """Port, 11 km trunk, junction with two branches; a 900 m degraded span
    starting 11.5 km out sits on B2 or B3.  Returns (topology, anomaly)."""
    if faulted_branch not in ("B2", "B3"):
        raise ValueError("faulted_branch must be 'B2' or 'B3'")
    topo = Topology(
        nodes=[
            Node("N0", 0.0, 0.0),
            Node("N1", TRUNK_M, 0.0),
            Node("N2", TRUNK_M + BRANCH2_M, 600.0),
            Node("N3", TRUNK_M + BRANCH3_M, -600.0),
        ],
        branches=[
            Branch("B1", "N0", "N1", TRUNK_M, cable),
            Branch("B2", "N1", "N2", BRANCH2_M, cable),
            Branch("B3", "N1", "N3", BRANCH3_M, cable),
        ],
        loads={
            "N2": SeriesRLC(r_ohm=120.0),
            "N3": SeriesRLC(r_ohm=120.0),
            "N0": SeriesRLC(r_ohm=120.0),
        },
        ports=[Port("N0")],
    )
    topo.validate()
    anomaly = DistributedFault(
        branch=faulted_branch,
        start_m=DAMAGE_START_M,
        length_m=DAMAGE_LENGTH_M,
        cable=cable.scaled(r0=r_scale, c=c_scale),
    )
    return topo, anomaly
