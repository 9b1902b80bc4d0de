import pytest

from gridsense.tlcore import CableSpec, FrequencyGrid
from gridsense.topology import (Branch, ConstantLoad, Node, OpenLoad, Port,
                                SeriesRLC, Topology)


@pytest.fixture(scope="session")
def grid():
    return FrequencyGrid()


@pytest.fixture(scope="session")
def cable():
    return CableSpec()


@pytest.fixture(scope="session")
def lossless():
    return CableSpec(r0_ohm_per_m=0.0, g0_s_per_m=0.0)


@pytest.fixture
def three_node(cable):
    """Port at A, junction-free chain A-B-C with resistive loads."""
    topo = Topology(
        nodes=[Node("A"), Node("B"), Node("C")],
        branches=[Branch("B1", "A", "B", 500.0, cable),
                  Branch("B2", "B", "C", 700.0, cable)],
        loads={"A": OpenLoad(), "C": ConstantLoad(1 / 50),
               "B": ConstantLoad(1 / 200)},
        ports=[Port("A")],
    )
    topo.validate()
    return topo


@pytest.fixture
def five_node(cable):
    """Fixed 5-node tree used as the oracle reference instance."""
    topo = Topology(
        nodes=[Node("A", 0, 0), Node("B", 150, 0), Node("C", 150, 120),
               Node("D", 290, 0), Node("E", 290, -90)],
        branches=[Branch("B1", "A", "B", 150.0, cable),
                  Branch("B2", "B", "C", 120.0, cable),
                  Branch("B3", "B", "D", 140.0, cable),
                  Branch("B4", "D", "E", 90.0, cable)],
        loads={"A": SeriesRLC(r_ohm=80.0), "C": SeriesRLC(r_ohm=30.0),
               "E": SeriesRLC(r_ohm=200.0)},
        ports=[Port("B")],
    )
    topo.validate()
    return topo
