import csv
import json

import numpy as np
import pytest

from gridsense.cli import main
from gridsense.network import input_admittance
from gridsense.sensing import DirectQnr, MainsSensing, simulate_measurement
from gridsense.tlcore import FrequencyGrid
from gridsense.topology import Topology, anomaly_from_dict, inject_anomaly


def run_cli(*argv):
    main([str(a) for a in argv])


def test_generate_writes_valid_topology(tmp_path):
    out = tmp_path / "topo.json"
    run_cli("generate", "--nodes", 7, "--seed", 3, "-o", out)
    topo = Topology.from_json(out.read_text())
    topo.validate()
    assert len(topo.nodes) == 7

    out2 = tmp_path / "topo2.json"
    run_cli("generate", "--nodes", 7, "--seed", 3, "-o", out2)
    assert out.read_text() == out2.read_text()


def test_inject_subcommand(tmp_path):
    topo_path = tmp_path / "topo.json"
    run_cli("generate", "--nodes", 5, "--seed", 1, "-o", topo_path)
    anomaly_path = tmp_path / "anomaly.json"
    anomaly_path.write_text(json.dumps({
        "kind": "distributed_fault", "branch": "B1", "start_m": 2.0,
        "length_m": 10.0, "scale": {"r0": 1.5, "c": 1.1}}))
    out = tmp_path / "faulty.json"
    run_cli("inject", "-t", topo_path, "-a", anomaly_path, "-o", out)
    faulty = Topology.from_json(out.read_text())
    assert faulty.branch("B1").degraded


def test_respond_csv_contract(tmp_path):
    topo_path = tmp_path / "topo.json"
    run_cli("generate", "--nodes", 4, "--seed", 2, "-o", topo_path)
    out = tmp_path / "spec.csv"
    run_cli("respond", "-t", topo_path, "--quantity", "yin", "-o", out)
    raw = out.read_bytes()
    assert b"\r" not in raw  # LF line endings
    lines = raw.decode().splitlines()
    assert lines[0] == "f_hz,re,im"
    assert len(lines) == 1 + 116
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(4300.0)
    assert "." in first[1]  # decimal point, not comma

    # values match the library
    topo = Topology.from_json(topo_path.read_text())
    direct = input_admittance(topo, topo.ports[0].node, FrequencyGrid())
    assert complex(float(first[1]), float(first[2])) == pytest.approx(
        complex(direct.values[0, 0, 0]), rel=1e-12)


def test_detect_and_locate_flow(tmp_path, grid):
    topo_path = tmp_path / "topo.json"
    run_cli("generate", "--nodes", 6, "--seed", 4, "-o", topo_path)
    topo = Topology.from_json(topo_path.read_text())
    port = topo.ports[0].node

    anomaly = {"kind": "localized_fault", "branch": "B2", "offset_m": 150.0,
               "shunt": {"kind": "constant", "re": 0.05, "im": 0.0}}
    perturbed = inject_anomaly(topo, anomaly_from_dict(anomaly, topo))
    y0 = input_admittance(topo, port, grid)
    y1 = input_admittance(perturbed, port, grid)
    rng = np.random.default_rng(5)
    stream_path = tmp_path / "stream.csv"
    with open(stream_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "f_hz", "re", "im"])
        for step in range(40):
            src = y0 if step < 34 else y1
            est = simulate_measurement(src, DirectQnr(60.0), MainsSensing(),
                                       rng)
            for k, f in enumerate(grid.tones):
                v = est.values[k, 0, 0]
                writer.writerow([step, repr(float(f)), repr(float(v.real)),
                                 repr(float(v.imag))])

    report_path = tmp_path / "report.json"
    trace_path = tmp_path / "trace.csv"
    run_cli("detect", "--stream", stream_path, "--warmup", 30,
            "-o", report_path, "--trace-output", trace_path)
    report = json.loads(report_path.read_text())
    assert report["detected"]

    trace_lines = trace_path.read_text().splitlines()
    assert trace_lines[0] == "distance_m,magnitude"
    assert len(trace_lines) > 100

    loc_path = tmp_path / "loc.json"
    run_cli("locate", "-t", topo_path, "--report", report_path,
            "--port", port, "-o", loc_path)
    loc = json.loads(loc_path.read_text())
    assert loc["target_id"] == "B2"


def test_locate_multi_distances(tmp_path):
    topo_path = tmp_path / "topo.json"
    run_cli("generate", "--nodes", 2, "--avg-length", 1000, "--seed", 1,
            "-o", topo_path)
    topo = Topology.from_json(topo_path.read_text())
    a, b = topo.branches[0].a, topo.branches[0].b
    length = topo.branches[0].length_m
    out = tmp_path / "fix.json"
    run_cli("locate", "-t", topo_path,
            "--distances", f"{a}=400,{b}={length - 400}", "-o", out)
    fix = json.loads(out.read_text())
    assert fix["kind"] == "point"
    assert fix["offset_m"] == pytest.approx(400.0, abs=50.0) or \
        fix["offset_m"] == pytest.approx(length - 400.0, abs=50.0)


EXPERIMENT_CFG = """
mode = pipeline
quantities = yin
models = sup
network_sizes = 5
qnr_sweep_db = 50
anomaly_classes = load_change
trials = 3
master_seed = 9
warmup = 15
"""


def test_experiment_subcommand(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(EXPERIMENT_CFG)
    records = tmp_path / "records.csv"
    summary = tmp_path / "summary.csv"
    run_cli("experiment", "-c", cfg, "-o", records, "--summary", summary)
    rec_lines = records.read_text().splitlines()
    assert rec_lines[0].startswith("cell,trial,network_size")
    assert len(rec_lines) == 1 + 3
    assert summary.read_text().splitlines()[0].startswith("network_size")

    # the master seed responds to GRIDSENSE_SEED
    records2 = tmp_path / "records2.csv"
    monkeypatch.setenv("GRIDSENSE_SEED", "123")
    run_cli("experiment", "-c", cfg, "-o", records2, "--summary",
            tmp_path / "s2.csv")
    assert records2.read_text() != records.read_text()
