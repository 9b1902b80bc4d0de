"""Pydantic request/response models for the sensing service.

Topology, load and anomaly payloads use the same JSON schema as the file
format in :mod:`gridsense.topology`, so `model_dump()` output feeds straight
into `Topology.from_dict` and vice versa.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from .. import topology as topo
from ..tlcore import FrequencyGrid, Spectrum


class LoadSpec(BaseModel):
    kind: Literal["constant", "open", "series_rlc", "parallel_rlc"]
    re: float | None = None
    im: float | None = None
    r_ohm: float | None = None
    l_h: float | None = None
    c_f: float | None = None

    def to_load(self) -> topo.LoadModel:
        return topo.load_from_dict(self.model_dump(exclude_none=True))


class CableModel(BaseModel):
    n_channels: int = 1
    r0_ohm_per_m: float = 0.05
    l_h_per_m: float = 0.4e-6
    g0_s_per_m: float = 1.0e-9
    c_f_per_m: float = 0.1e-9
    f_ref_hz: float = 500e3
    mutual_ratio: float = 0.0


class InlineElementModel(BaseModel):
    kind: Literal["shunt", "degraded"]
    offset_m: float | None = None
    admittance: LoadSpec | None = None
    channels: list[int] | None = None
    start_m: float | None = None
    end_m: float | None = None
    cable: CableModel | None = None


class NodeModel(BaseModel):
    id: str
    x: float = 0.0
    y: float = 0.0


class BranchModel(BaseModel):
    id: str
    a: str
    b: str
    length_m: float
    cable: CableModel
    inline: list[InlineElementModel] = Field(default_factory=list)


class PortModel(BaseModel):
    node: str
    y0: LoadSpec | None = None


class TopologyModel(BaseModel):
    nodes: list[NodeModel]
    branches: list[BranchModel]
    loads: dict[str, LoadSpec] = Field(default_factory=dict)
    ports: list[PortModel] = Field(default_factory=list)

    def to_topology(self) -> topo.Topology:
        return topo.Topology.from_dict(self.model_dump(exclude_none=True))

    @classmethod
    def from_topology(cls, network: topo.Topology) -> "TopologyModel":
        return cls.model_validate(network.to_dict())


class AnomalyModel(BaseModel):
    kind: Literal["load_change", "localized_fault", "distributed_fault"]
    node: str | None = None
    load: LoadSpec | None = None
    branch: str | None = None
    offset_m: float | None = None
    shunt: LoadSpec | None = None
    channels: list[int] | None = None
    start_m: float | None = None
    length_m: float | None = None
    cable: CableModel | None = None
    scale: dict[str, float] | None = None

    def to_anomaly(self, network: topo.Topology) -> topo.Anomaly:
        return topo.anomaly_from_dict(self.model_dump(exclude_none=True),
                                      network)


class GridModel(BaseModel):
    delta_f: float = 4.3e3
    count: int = 116

    def to_grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.delta_f, self.count)


class SpectrumEntryModel(BaseModel):
    row: int = 1
    col: int = 1
    re: list[float]
    im: list[float]


class SpectrumModel(BaseModel):
    quantity: Literal["yin", "rho", "h"]
    grid: GridModel
    n_channels: int = 1
    entries: list[SpectrumEntryModel]
    port: str | None = None
    tx: str | None = None
    rx: str | None = None

    def to_spectrum(self) -> Spectrum:
        grid = self.to_grid()
        values = np.zeros((grid.count, self.n_channels, self.n_channels),
                          dtype=complex)
        for e in self.entries:
            values[:, e.row - 1, e.col - 1] = np.array(e.re) + 1j * np.array(e.im)
        meta = {k: v for k, v in (("port", self.port), ("tx", self.tx),
                                  ("rx", self.rx)) if v is not None}
        return Spectrum(self.quantity, grid, values, meta=meta)

    def to_grid(self) -> FrequencyGrid:
        return self.grid.to_grid()

    @classmethod
    def from_spectrum(cls, spec: Spectrum) -> "SpectrumModel":
        n = spec.n_channels
        entries = [
            SpectrumEntryModel(row=i + 1, col=j + 1,
                               re=spec.values[:, i, j].real.tolist(),
                               im=spec.values[:, i, j].imag.tolist())
            for i in range(n) for j in range(n)
        ]
        return cls(quantity=spec.quantity,
                   grid=GridModel(delta_f=spec.grid.delta_f,
                                  count=spec.grid.count),
                   n_channels=n, entries=entries,
                   port=spec.meta.get("port"), tx=spec.meta.get("tx"),
                   rx=spec.meta.get("rx"))


# -- requests / responses ----------------------------------------------------

class GenerateRequest(BaseModel):
    n_nodes: int = 20
    avg_branch_length_m: float = 900.0
    max_node_degree: int = 4
    seed: int = 0
    cable: CableModel | None = None


class InjectRequest(BaseModel):
    topology: TopologyModel
    anomaly: AnomalyModel


class RespondRequest(BaseModel):
    topology: TopologyModel
    quantity: Literal["yin", "rho", "h"] = "yin"
    grid: GridModel = Field(default_factory=GridModel)
    port: str | None = None
    tx: str | None = None
    rx: str | None = None
    zs_ohm: float = 1.0
    zl_ohm: float = 100e3


class DetectorSettings(BaseModel):
    model: Literal["sup", "chain"] = "sup"
    k_sigma: float = 3.0
    confirm_steps: int = 5
    ema_alpha: float = 0.05
    warmup: int = 50
    velocity: float = 1.5811388300841898e8
    max_distance_m: float | None = None
    include_trace: bool = False


class DetectRequest(BaseModel):
    stream: list[SpectrumModel]
    settings: DetectorSettings = Field(default_factory=DetectorSettings)


class TraceModel(BaseModel):
    distance_m: list[float]
    magnitude: list[float]


class DetectionReportModel(BaseModel):
    detected: bool
    anomaly_class: str
    n_max: int | None = None
    d_hat_m: float | None = None
    low_confidence: bool = False
    steps_processed: int = 0
    detected_at_step: int | None = None
    evidence: dict = Field(default_factory=dict)
    trace: TraceModel | None = None


class LocateRequest(BaseModel):
    mode: Literal["single", "multi"] = "single"
    topology: TopologyModel
    report: DetectionReportModel | None = None
    peaks_m: list[float] | None = None
    port: str | None = None
    distances: dict[str, float] | None = None
    bin_m: float | None = None
    velocity: float = 1.5811388300841898e8
    grid: GridModel = Field(default_factory=GridModel)


class LocalizationReportModel(BaseModel):
    kind: str
    target_id: str | None
    d_hat_m: float | None = None
    scores: dict[str, float] = Field(default_factory=dict)
    ambiguous: bool = False
    first_node: str | None = None
    offset_m: float | None = None


class ExperimentRequest(BaseModel):
    config_text: str
    workers: int = 1


class ExperimentResponse(BaseModel):
    n_records: int
    records_csv: str
    summary_csv: str
