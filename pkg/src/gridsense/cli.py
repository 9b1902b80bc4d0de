"""Command-line client for the sensing service.

Every subcommand drives the HTTP API.  By default an in-process instance of
the service handles the requests; pass ``--server http://host:port`` to talk
to a running one instead (start it with ``gridsense serve``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings


def _client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=600.0)
    warnings.filterwarnings("ignore", message="Using `httpx` with")
    from starlette.testclient import TestClient

    from .service.app import create_app
    return TestClient(create_app())


def _check(resp):
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        sys.exit(f"error ({resp.status_code}): {detail}")
    return resp.json()


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _spectrum_to_csv(spec: dict, path: str) -> None:
    """f_hz,re,im per entry; row/col columns appear for matrix channels."""
    grid = spec["grid"]
    f_hz = [(k + 1) * grid["delta_f"] for k in range(grid["count"])]
    matrix = spec["n_channels"] > 1
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["f_hz", "row", "col", "re", "im"] if matrix
                        else ["f_hz", "re", "im"])
        for entry in spec["entries"]:
            for f, re, im in zip(f_hz, entry["re"], entry["im"]):
                row = [repr(f), repr(re), repr(im)]
                if matrix:
                    row = [repr(f), entry["row"], entry["col"],
                           repr(re), repr(im)]
                writer.writerow(row)


def _stream_from_csv(path: str, quantity: str) -> list[dict]:
    """step,f_hz[,row,col],re,im rows -> ordered SpectrumModel payloads."""
    by_step: dict[int, dict] = {}
    freqs: set[float] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            step = int(row["step"])
            key = (int(row.get("row") or 1), int(row.get("col") or 1))
            f = float(row["f_hz"])
            freqs.add(f)
            cell = by_step.setdefault(step, {})
            cell.setdefault(key, []).append((f, float(row["re"]),
                                             float(row["im"])))
    if not by_step:
        sys.exit("error: empty stream file")
    f_sorted = sorted(freqs)
    delta_f = f_sorted[0]
    count = len(f_sorted)
    n = max(max(k) for cell in by_step.values() for k in cell)
    stream = []
    for step in sorted(by_step):
        entries = []
        for (r, c), samples in sorted(by_step[step].items()):
            samples.sort()
            entries.append({"row": r, "col": c,
                            "re": [s[1] for s in samples],
                            "im": [s[2] for s in samples]})
        stream.append({"quantity": quantity,
                       "grid": {"delta_f": delta_f, "count": count},
                       "n_channels": n, "entries": entries})
    return stream


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- subcommands -------------------------------------------------------------

def cmd_generate(args) -> None:
    body = {"n_nodes": args.nodes, "avg_branch_length_m": args.avg_length,
            "max_node_degree": args.degree, "seed": args.seed}
    if args.mimo:
        body["cable"] = {"n_channels": 2, "mutual_ratio": args.mutual_ratio}
    with _client(args.server) as client:
        topo = _check(client.post("/topology/generate", json=body))
    _write_json(args.output, topo)
    print(f"wrote {args.output} ({args.nodes} nodes)")


def cmd_inject(args) -> None:
    body = {"topology": _load_json(args.topology),
            "anomaly": _load_json(args.anomaly)}
    with _client(args.server) as client:
        topo = _check(client.post("/topology/inject", json=body))
    _write_json(args.output, topo)
    print(f"wrote {args.output}")


def cmd_respond(args) -> None:
    body = {"topology": _load_json(args.topology), "quantity": args.quantity,
            "grid": {"delta_f": args.delta_f, "count": args.count},
            "zs_ohm": args.zs, "zl_ohm": args.zl}
    if args.port:
        body["port"] = args.port
    if args.tx:
        body["tx"] = args.tx
    if args.rx:
        body["rx"] = args.rx
    with _client(args.server) as client:
        spec = _check(client.post("/respond", json=body))
    _spectrum_to_csv(spec, args.output)
    print(f"wrote {args.output}")


def cmd_detect(args) -> None:
    stream = _stream_from_csv(args.stream, args.quantity)
    settings = {"model": args.model, "warmup": args.warmup,
                "confirm_steps": args.confirm, "velocity": args.velocity,
                "include_trace": bool(args.trace_output)}
    if args.max_distance is not None:
        settings["max_distance_m"] = args.max_distance
    with _client(args.server) as client:
        report = _check(client.post("/detect", json={"stream": stream,
                                                     "settings": settings}))
    trace = report.pop("trace", None)
    _write_json(args.output, report)
    if args.trace_output and trace:
        with open(args.trace_output, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["distance_m", "magnitude"])
            for d, m in zip(trace["distance_m"], trace["magnitude"]):
                writer.writerow([repr(d), repr(m)])
    state = report["anomaly_class"] if report["detected"] else "no detection"
    print(f"wrote {args.output} ({state})")


def cmd_locate(args) -> None:
    body = {"topology": _load_json(args.topology), "velocity": args.velocity,
            "grid": {"delta_f": args.delta_f, "count": args.count}}
    if args.distances:
        body["mode"] = "multi"
        body["distances"] = {k: float(v) for k, v in
                             (pair.split("=") for pair in
                              args.distances.split(","))}
    else:
        if not args.report or not args.port:
            sys.exit("error: single-sensor mode needs --report and --port")
        body["mode"] = "single"
        body["report"] = _load_json(args.report)
        body["port"] = args.port
    with _client(args.server) as client:
        result = _check(client.post("/locate", json=body))
    _write_json(args.output, result)
    print(f"wrote {args.output} (target {result['target_id']})")


def cmd_experiment(args) -> None:
    with open(args.config, "r", encoding="utf-8") as fh:
        config_text = fh.read()
    with _client(args.server) as client:
        out = _check(client.post("/experiment",
                                 json={"config_text": config_text,
                                       "workers": args.workers}))
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(out["records_csv"])
    with open(args.summary, "w", encoding="utf-8", newline="") as fh:
        fh.write(out["summary_csv"])
    print(f"wrote {args.output} ({out['n_records']} records) and {args.summary}")


def cmd_serve(args) -> None:
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridsense",
        description="Grid sensing with power line modems: simulate networks, "
                    "inject anomalies, detect and localize them.")
    parser.add_argument("--server", default=None,
                        help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random grid topology -> JSON")
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--avg-length", type=float, default=900.0)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mimo", action="store_true")
    p.add_argument("--mutual-ratio", type=float, default=0.3)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inject", help="apply an anomaly JSON to a topology")
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("-a", "--anomaly", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("respond", help="network response -> spectrum CSV")
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("--quantity", choices=["yin", "rho", "h"], default="yin")
    p.add_argument("--port", default=None)
    p.add_argument("--tx", default=None)
    p.add_argument("--rx", default=None)
    p.add_argument("--delta-f", type=float, default=4.3e3)
    p.add_argument("--count", type=int, default=116)
    p.add_argument("--zs", type=float, default=1.0)
    p.add_argument("--zl", type=float, default=100e3)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser("detect", help="estimate stream CSV -> detection report")
    p.add_argument("--stream", required=True,
                   help="CSV with step,f_hz[,row,col],re,im")
    p.add_argument("--quantity", choices=["yin", "rho", "h"], default="yin")
    p.add_argument("--model", choices=["sup", "chain"], default="sup")
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--confirm", type=int, default=5)
    p.add_argument("--velocity", type=float, default=1.5811388300841898e8)
    p.add_argument("--max-distance", type=float, default=None)
    p.add_argument("--trace-output", default=None,
                   help="also write detected peaks as distance,magnitude CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("locate", help="detection report + topology -> location")
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--port", default=None)
    p.add_argument("--distances", default=None,
                   help="multi-sensor mode: PORT=METERS,PORT=METERS,...")
    p.add_argument("--velocity", type=float, default=1.5811388300841898e8)
    p.add_argument("--delta-f", type=float, default=4.3e3)
    p.add_argument("--count", type=int, default=116)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment config")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", default="records.csv")
    p.add_argument("--summary", default="summary.csv")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
