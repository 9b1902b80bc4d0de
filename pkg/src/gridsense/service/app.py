"""FastAPI service exposing the sensing toolkit.

Every endpoint wraps a pure library call; the process itself holds no state,
so instances can be replicated freely.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..detection import (ClassifierConfig, DetectorConfig, ReferenceState,
                         classify, delta, detect_step, to_time_domain)
from ..experiment import (apply_env_seed, parse_config_text, records_to_csv,
                          rows_to_csv, run_experiment)
from ..locate import LocalizationError, localize_multi, localize_single
from ..netgen import ConfigError, TopologyConfig, generate_topology
from ..network import input_admittance, transfer_function
from ..tlcore import CableSpec, NumericError, reflection_coefficient
from ..topology import TopologyError, inject_anomaly
from .schemas import (DetectionReportModel, DetectRequest, ExperimentRequest,
                      ExperimentResponse, GenerateRequest, InjectRequest,
                      LocalizationReportModel, LocateRequest, RespondRequest,
                      SpectrumModel, TopologyModel, TraceModel)


def create_app() -> FastAPI:
    app = FastAPI(title="gridsense", version=__version__,
                  description="Power-line grid sensing: simulate, detect, "
                              "classify and localize network anomalies.")

    @app.exception_handler(TopologyError)
    @app.exception_handler(ConfigError)
    async def _bad_request(request, exc):  # pragma: no cover - thin glue
        raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/topology/generate", response_model=TopologyModel)
    def generate(req: GenerateRequest) -> TopologyModel:
        cable = CableSpec(**req.cable.model_dump()) if req.cable else CableSpec()
        config = TopologyConfig(n_nodes=req.n_nodes,
                                avg_branch_length_m=req.avg_branch_length_m,
                                max_node_degree=req.max_node_degree,
                                cable=cable)
        try:
            network = generate_topology(config, req.seed)
        except ConfigError as exc:
            raise HTTPException(400, str(exc))
        return TopologyModel.from_topology(network)

    @app.post("/topology/inject", response_model=TopologyModel)
    def inject(req: InjectRequest) -> TopologyModel:
        try:
            network = req.topology.to_topology()
            anomaly = req.anomaly.to_anomaly(network)
            return TopologyModel.from_topology(inject_anomaly(network, anomaly))
        except TopologyError as exc:
            raise HTTPException(400, str(exc))

    @app.post("/respond", response_model=SpectrumModel)
    def respond(req: RespondRequest) -> SpectrumModel:
        try:
            network = req.topology.to_topology()
            network.validate()
            grid = req.grid.to_grid()
            if req.quantity == "h":
                if not req.tx or not req.rx:
                    raise HTTPException(400, "h needs tx and rx nodes")
                spec = transfer_function(network, req.tx, req.rx, grid,
                                         zs=req.zs_ohm, zl=req.zl_ohm)
            else:
                port = req.port or (network.ports[0].node if network.ports
                                    else None)
                if port is None:
                    raise HTTPException(400, "no sensor port given")
                spec = input_admittance(network, port, grid)
                if req.quantity == "rho":
                    spec = reflection_coefficient(spec, spec.meta["y0"])
        except TopologyError as exc:
            raise HTTPException(400, str(exc))
        except NumericError as exc:
            raise HTTPException(422, str(exc))
        return SpectrumModel.from_spectrum(spec)

    @app.post("/detect", response_model=DetectionReportModel)
    def detect(req: DetectRequest) -> DetectionReportModel:
        if not req.stream:
            raise HTTPException(400, "empty estimate stream")
        s = req.settings
        dconf = DetectorConfig(model=s.model, k_sigma=s.k_sigma,
                               confirm_steps=s.confirm_steps,
                               ema_alpha=s.ema_alpha, warmup=s.warmup)
        state = ReferenceState()
        detected_at = None
        spectra = [m.to_spectrum() for m in req.stream]
        last = spectra[0]
        try:
            for step, spec in enumerate(spectra):
                last = spec
                state, flag = detect_step(spec, state, dconf)
                if flag:
                    detected_at = step
                    break
            if detected_at is None:
                return DetectionReportModel(detected=False,
                                            anomaly_class="none",
                                            steps_processed=len(spectra))
            before = state.reference_spectrum(last.quantity, last.grid,
                                              meta=last.meta)
            cconf = ClassifierConfig(velocity=s.velocity,
                                     max_distance_m=s.max_distance_m)
            dlt = delta(last, state, s.model)
            report = classify(before, last, dlt, cconf,
                              n_max=state.pending_tone)
            trace = None
            if s.include_trace:
                tt = to_time_domain(dlt, s.velocity)
                trace = TraceModel(distance_m=tt.distances.tolist(),
                                   magnitude=tt.magnitude.tolist())
        except NumericError as exc:
            raise HTTPException(422, str(exc))
        return DetectionReportModel(detected=True,
                                    anomaly_class=report.anomaly_class,
                                    n_max=report.n_max,
                                    d_hat_m=report.d_hat_m,
                                    low_confidence=report.low_confidence,
                                    steps_processed=detected_at + 1,
                                    detected_at_step=detected_at,
                                    evidence=report.evidence,
                                    trace=trace)

    @app.post("/locate", response_model=LocalizationReportModel)
    def locate(req: LocateRequest) -> LocalizationReportModel:
        try:
            network = req.topology.to_topology()
            grid = req.grid.to_grid()
            bin_m = req.bin_m or req.velocity / (2.0 * grid.count * grid.delta_f)
            if req.mode == "multi":
                if not req.distances:
                    raise HTTPException(400, "multi mode needs distances")
                result = localize_multi(req.distances, network, bin_m=bin_m)
            else:
                if req.report is None or not req.port:
                    raise HTTPException(400, "single mode needs report and port")
                from ..detection import DetectionReport
                rep = DetectionReport(req.report.detected,
                                      req.report.anomaly_class,
                                      req.report.n_max, req.report.d_hat_m,
                                      req.report.low_confidence,
                                      req.report.evidence)
                peaks = req.peaks_m
                if peaks is None:
                    peaks = rep.evidence.get("delta_peaks_m", [])
                result = localize_single(rep, peaks, network, req.port,
                                         bin_m=bin_m)
        except (TopologyError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        except LocalizationError as exc:
            raise HTTPException(422, str(exc))
        return LocalizationReportModel(**result.to_dict())

    @app.post("/experiment", response_model=ExperimentResponse)
    def experiment(req: ExperimentRequest) -> ExperimentResponse:
        try:
            config = apply_env_seed(parse_config_text(req.config_text))
            records, summary = run_experiment(config, workers=req.workers)
        except ConfigError as exc:
            raise HTTPException(400, str(exc))
        return ExperimentResponse(n_records=len(records),
                                  records_csv=records_to_csv(records),
                                  summary_csv=rows_to_csv(summary))

    return app


app = create_app()
