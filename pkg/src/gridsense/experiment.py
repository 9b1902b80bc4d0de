"""Monte-Carlo evaluation harness.

Two experiment modes:

* ``overlap``: per trial, draw one noisy estimate of the network quantity
  with and without the anomaly and record the detection statistic
  max_n |Delta| (raw and noise-normalized).  Per-cell failure probability is
  the overlap of the two statistic distributions across trials.
* ``pipeline``: per trial, run the full detector stream (warm-up, confirm,
  classify, locate) and record the outcome flags.

Each trial is seeded by hash(master seed, cell index, trial index), so any
cell reproduces independently and results do not depend on worker count or
execution order.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.stats import gaussian_kde

from .detection import (CLASS_DISTRIBUTED, CLASS_IMPEDANCE, CLASS_LOCALIZED,
                        ClassifierConfig, DetectorConfig, ReferenceState,
                        classify, delta, detect_step)
from .locate import LocalizationError, localize_single
from .netgen import ConfigError, LoadDistribution, TopologyConfig, \
    generate_topology
from .network import input_admittance, transfer_function
from .sensing import (DirectQnr, MainsSensing, PhysicalNoise,
                      simulate_measurement)
from .tlcore import (CableSpec, FrequencyGrid, NumericError,
                     reflection_coefficient, solve_stack)
from .topology import (DistributedFault, LoadChange, LocalizedFault,
                       SeriesRLC, inject_anomaly, node_distances)

SEED_ENV_VAR = "GRIDSENSE_SEED"

QUANTITIES = ("yin", "rho", "h")
MODELS = ("sup", "chain")
ANOMALY_KINDS = ("load_change", "localized_fault", "distributed_fault")
_CLASS_OF_KIND = {
    "load_change": CLASS_IMPEDANCE,
    "localized_fault": CLASS_LOCALIZED,
    "distributed_fault": CLASS_DISTRIBUTED,
}
CHANNEL_NAMES = {"1-1": (0, 0), "1-2": (0, 1), "2-1": (1, 0), "2-2": (1, 1)}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "overlap"  # "overlap" | "pipeline"
    quantities: tuple[str, ...] = ("yin",)
    models: tuple[str, ...] = ("sup",)
    channel_mode: str = "siso"  # "siso" | "mimo"
    channels: tuple[str, ...] = ("1-1",)  # recorded entries (mimo)
    anomaly_classes: tuple[str, ...] = ("localized_fault",)
    network_sizes: tuple[int, ...] = (10,)
    qnr_sweep_db: tuple[float, ...] | None = None  # None: physical noise
    trials: int = 200
    master_seed: int = 1
    avg_branch_length_m: float = 900.0
    max_node_degree: int = 4
    mains_averages: int = 1
    tx_dbc: float = -50.0
    rx_dbc: float = -60.0
    network_floor_db: float | None = -30.0
    mutual_ratio: float = 0.3
    fault_r_min_ohm: float = 2.0
    fault_r_max_ohm: float = 500.0
    fault_channels: tuple[int, ...] = (1,)
    degraded_r_scale: float = 1.5
    degraded_c_scale: float = 1.1
    warmup: int = 50
    confirm_steps: int = 5
    margin_steps: int = 10
    grid_delta_f: float = 4.3e3
    grid_count: int = 116

    def check(self):
        if self.mode not in ("overlap", "pipeline"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for q in self.quantities:
            if q not in QUANTITIES:
                raise ConfigError(f"unknown quantity {q!r}")
        for m in self.models:
            if m not in MODELS:
                raise ConfigError(f"unknown model {m!r}")
        for a in self.anomaly_classes:
            if a not in ANOMALY_KINDS:
                raise ConfigError(f"unknown anomaly class {a!r}")
        if not self.quantities or not self.models or not self.network_sizes \
                or not self.anomaly_classes:
            raise ConfigError("sweep lists must be non-empty")
        if self.qnr_sweep_db is not None and not self.qnr_sweep_db:
            raise ConfigError("qnr sweep must be non-empty")
        for c in self.channels:
            if c not in CHANNEL_NAMES:
                raise ConfigError(f"unknown channel tag {c!r}")

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.grid_delta_f, self.grid_count)

    def cable(self) -> CableSpec:
        if self.channel_mode == "mimo":
            return CableSpec(n_channels=2, mutual_ratio=self.mutual_ratio)
        return CableSpec()

    def noise_model(self, qnr_db):
        if qnr_db is not None:
            return DirectQnr(qnr_db)
        return PhysicalNoise(self.tx_dbc, self.rx_dbc, self.network_floor_db)


@dataclass
class TrialRecord:
    cell: int
    trial: int
    network_size: int
    qnr_db: float  # nan for physical-noise cells
    quantity: str
    model: str
    channel: str
    anomaly_kind: str
    anomaly_target: str
    anomaly_offset_m: float
    anomaly_distance_m: float
    true_first_node: str
    realized_qnr_db: float = math.nan
    stat_normal: float = math.nan  # noise-normalized max_n |Delta|
    stat_anomalous: float = math.nan
    stat_normal_raw: float = math.nan  # max_n |Delta| in quantity units
    stat_anomalous_raw: float = math.nan
    stat_normal_rel: float = math.nan  # raw over the network's rms level
    stat_anomalous_rel: float = math.nan
    detected: int = 0
    detect_steps: int = -1
    class_est: str = ""
    class_correct: int = 0
    located_target: str = ""
    branch_hit: int = 0
    first_node_hit: int = 0
    loc_correct: int = 0
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _format_cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def records_to_csv(records: list[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TrialRecord.columns())
    for r in records:
        writer.writerow([_format_cell(getattr(r, c)) for c in TrialRecord.columns()])
    return buf.getvalue()


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if not rows:
        return ""
    cols = list(rows[0].keys())
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_format_cell(row.get(c, "")) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# statistics helpers

def wilson_interval(successes: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (math.nan, math.nan)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def p_failure_overlap(stat_normal, stat_anomalous) -> float:
    """Half the shared mass of the two statistic distributions.

    0 for perfectly separable statistics, 0.5 when the distributions are
    identical (chance).  Density estimates are Gaussian KDEs; degenerate
    constant samples are treated as point masses.
    """
    a = np.asarray(stat_normal, dtype=float)
    b = np.asarray(stat_anomalous, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    a = a[np.isfinite(a)]
    b = b[np.isfinite(b)]
    if a.size == 0 or b.size == 0:
        return 0.0
    const_a = np.ptp(a) == 0.0
    const_b = np.ptp(b) == 0.0
    if const_a and const_b:
        return 0.5 if a[0] == b[0] else 0.0
    if const_a or const_b:
        return 0.0
    ka, kb = gaussian_kde(a), gaussian_kde(b)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    span = hi - lo
    grid = np.linspace(lo - 0.2 * span, hi + 0.2 * span, 2048)
    overlap = 0.5 * np.trapezoid(np.minimum(ka(grid), kb(grid)), grid)
    return float(np.clip(overlap, 0.0, 0.5))


_RATE_FIELDS = ("detected", "class_correct", "branch_hit", "first_node_hit",
                "loc_correct")


def summarize(records: list[TrialRecord], grouping: tuple[str, ...],
              expected_groups: list[tuple] | None = None) -> list[dict]:
    """Per-cell success rates (Wilson 95%) and overlap failure probability."""
    def group_value(v):
        return "nan" if isinstance(v, float) and math.isnan(v) else v

    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        key = tuple(group_value(getattr(r, g)) for g in grouping)
        groups.setdefault(key, []).append(r)
    keys = sorted(groups, key=lambda k: tuple(str(x) for x in k))
    if expected_groups is not None:
        have = set(keys)
        keys = keys + [k for k in expected_groups if tuple(k) not in have]

    rows = []
    for key in keys:
        batch = groups.get(tuple(key), [])
        row = dict(zip(grouping, key))
        row["n"] = len(batch)
        clean = [r for r in batch if not r.error]
        for name in _RATE_FIELDS:
            hits = sum(getattr(r, name) for r in clean)
            n = len(clean)
            rate = hits / n if n else math.nan
            lo, hi = wilson_interval(hits, n)
            row[f"{name}_rate"] = rate
            row[f"{name}_lo"] = lo
            row[f"{name}_hi"] = hi
        row["p_failure"] = _stat_overlap(clean, "stat_normal_rel",
                                         "stat_anomalous_rel")
        row["p_failure_sigma"] = _stat_overlap(clean, "stat_normal",
                                               "stat_anomalous")
        row["p_failure_raw"] = _stat_overlap(clean, "stat_normal_raw",
                                             "stat_anomalous_raw")
        rows.append(row)
    return rows


def _stat_overlap(records, normal_field: str, anomalous_field: str) -> float:
    """Overlap of the two max-statistic ensembles, estimated in log domain.

    The shared mass is invariant under monotone transforms; log10 keeps the
    KDE bandwidth sane for these positive, heavy-tailed maxima."""
    a = np.array([getattr(r, normal_field) for r in records])
    b = np.array([getattr(r, anomalous_field) for r in records])
    a = a[np.isfinite(a)]
    b = b[np.isfinite(b)]
    if a.size == 0 or b.size == 0:
        return math.nan
    top = max(a.max(), b.max())
    if top <= 0.0:
        return 0.5
    floor = top * 1e-12
    return p_failure_overlap(np.log10(np.maximum(a, floor)),
                             np.log10(np.maximum(b, floor)))


# ---------------------------------------------------------------------------
# trial internals

def _topology_config(config: ExperimentConfig, size: int) -> TopologyConfig:
    return TopologyConfig(
        n_nodes=size,
        avg_branch_length_m=config.avg_branch_length_m,
        max_node_degree=config.max_node_degree,
        cable=config.cable(),
        loads=LoadDistribution(band_max_hz=config.grid.f_max),
    )


def _sample_anomaly(topology, rng: np.random.Generator,
                    config: ExperimentConfig, port: str):
    """One anomaly of a random configured class, plus its ground truth."""
    kind = config.anomaly_classes[int(rng.integers(len(config.anomaly_classes)))]
    dist = node_distances(topology, port)

    if kind == "load_change":
        candidates = sorted(n for n in topology.loads if n != port)
        if not candidates:
            candidates = sorted(topology.loads)
        node = candidates[int(rng.integers(len(candidates)))]
        sampler = LoadDistribution(band_max_hz=config.grid.f_max)
        load = sampler.sample(rng)
        while load == topology.loads[node]:  # a no-op swap is not an anomaly
            load = sampler.sample(rng)
        return LoadChange(node, load), kind, node, math.nan, dist[node], ""

    # a fault strikes a uniform point of the cable plant, so branches are
    # drawn weighted by length
    branches = sorted(topology.branches, key=lambda b: b.id)
    lengths = np.array([b.length_m for b in branches])
    br = branches[int(rng.choice(len(branches), p=lengths / lengths.sum()))]
    near = br.a if dist[br.a] <= dist[br.b] else br.b
    if kind == "localized_fault":
        offset_from_a = float(rng.uniform(0.05, 0.95)) * br.length_m
        r_f = math.exp(rng.uniform(math.log(config.fault_r_min_ohm),
                                   math.log(config.fault_r_max_ohm)))
        anomaly = LocalizedFault(br.id, offset_from_a, SeriesRLC(r_ohm=r_f),
                                 channels=config.fault_channels)
        # distance measured from the port side, whichever endpoint is nearer
        d_anom = min(dist[br.a] + offset_from_a,
                     dist[br.b] + br.length_m - offset_from_a)
        return anomaly, kind, br.id, offset_from_a, d_anom, near

    start = float(rng.uniform(0.0, 0.4)) * br.length_m
    length = float(rng.uniform(0.3, 0.55)) * br.length_m
    length = min(length, br.length_m - start)
    cable = br.cable.scaled(r0=config.degraded_r_scale,
                            c=config.degraded_c_scale)
    anomaly = DistributedFault(br.id, start, length, cable)
    d_anom = min(dist[br.a] + start, dist[br.b] + br.length_m - start - length)
    return anomaly, kind, br.id, start, d_anom, near


def _best_rx(topology, port: str, grid: FrequencyGrid) -> str:
    """Far-end modem placement: the farthest termination, so the monitored
    path spans as much of the network as possible."""
    dist = node_distances(topology, port)
    adj = topology.adjacency()
    leaves = sorted(n for n in topology.node_ids
                    if len(adj[n]) == 1 and n != port)
    if not leaves:
        leaves = sorted(n for n in topology.node_ids if n != port)
    return max(leaves, key=lambda n: (dist[n], n))


def _respond(topology, quantity: str, port: str, grid: FrequencyGrid,
             rx: str | None = None):
    if quantity in ("yin", "rho"):
        yin = input_admittance(topology, port, grid)
        if quantity == "yin":
            return yin
        return reflection_coefficient(yin, yin.meta["y0"])
    return transfer_function(topology, port, rx or _best_rx(topology, port, grid),
                             grid)


def _chain_sigma(sigma: np.ndarray, inv_ref: np.ndarray) -> np.ndarray:
    return np.sqrt((sigma ** 2) @ (np.abs(inv_ref) ** 2))


def _stats(est_values, ref_values, sigma, model, entry):
    """(raw, sigma-normalized, scale-relative) max_n |deviation| at an entry."""
    i, j = entry
    n = ref_values.shape[-1]
    if model == "sup":
        dev = (est_values - ref_values)[:, i, j]
        sig = sigma[:, i, j]
        scale = float(np.sqrt(np.mean(np.abs(ref_values[:, i, j]) ** 2)))
    else:
        eye = np.broadcast_to(np.eye(n), ref_values.shape).copy()
        inv_ref = solve_stack(np.swapaxes(ref_values, -1, -2),
                              np.swapaxes(eye, -1, -2), "chain stat")
        inv_ref = np.swapaxes(inv_ref, -1, -2)
        dev = ((est_values - ref_values) @ inv_ref)[:, i, j]
        sig = _chain_sigma(sigma, inv_ref)[:, i, j]
        scale = 1.0  # the chain deviation is already a relative quantity
    mag = np.abs(dev)
    raw = float(mag.max())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mag > 0, mag / np.where(sig > 0, sig, np.nan), 0.0)
    ratio = np.where(np.isnan(ratio) & (mag > 0), np.inf, np.nan_to_num(ratio))
    norm = float(ratio.max())
    rel = raw / scale if scale > 0 else raw
    return raw, norm, rel


def _true_class(kind: str) -> str:
    return _CLASS_OF_KIND[kind]


def run_trial(config: ExperimentConfig, cell: int, size: int, qnr_db,
              trial: int) -> list[TrialRecord]:
    """All records of one (cell, trial); failures land in the record."""
    ss = np.random.SeedSequence(entropy=config.master_seed,
                                spawn_key=(cell, trial))
    s_topo, s_anom, s_noise = ss.spawn(3)
    grid = config.grid
    base = dict(cell=cell, trial=trial, network_size=size,
                qnr_db=math.nan if qnr_db is None else qnr_db)

    try:
        topology = generate_topology(_topology_config(config, size), s_topo)
        port = topology.ports[0].node
        anomaly, kind, target, offset, d_anom, first_node = _sample_anomaly(
            topology, np.random.default_rng(s_anom), config, port)
        perturbed = inject_anomaly(topology, anomaly)
    except (ConfigError, NumericError) as exc:
        rec = TrialRecord(**base, quantity=config.quantities[0],
                          model=config.models[0], channel=config.channels[0],
                          anomaly_kind="", anomaly_target="",
                          anomaly_offset_m=math.nan,
                          anomaly_distance_m=math.nan, true_first_node="",
                          error=str(exc))
        return [rec]

    meta = dict(anomaly_kind=kind, anomaly_target=target,
                anomaly_offset_m=offset, anomaly_distance_m=d_anom,
                true_first_node=first_node)
    noise = config.noise_model(qnr_db)
    plan = MainsSensing(averages=config.mains_averages)
    rng_noise = np.random.default_rng(s_noise)

    if config.mode == "overlap":
        return _overlap_records(config, base, meta, topology, perturbed,
                                port, grid, noise, plan, rng_noise)
    return [_pipeline_record(config, base, meta, topology, perturbed, port,
                             grid, noise, plan, rng_noise, kind, target,
                             first_node)]


def _overlap_records(config, base, meta, topology, perturbed, port, grid,
                     noise, plan, rng_noise) -> list[TrialRecord]:
    records = []
    # both draws reuse the same two noise substreams for every quantity
    # (common random numbers), so cross-quantity comparisons are paired
    seed_n, seed_a = rng_noise.bit_generator.seed_seq.spawn(2)
    rx = _best_rx(topology, port, grid) if "h" in config.quantities else None
    for quantity in config.quantities:
        try:
            x0 = _respond(topology, quantity, port, grid, rx)
            x0a = _respond(perturbed, quantity, port, grid, rx)
            est_n = simulate_measurement(x0, noise, plan,
                                         np.random.default_rng(seed_n))
            est_a = simulate_measurement(x0a, noise, plan,
                                         np.random.default_rng(seed_a))
        except NumericError as exc:
            for model, channel in itertools.product(config.models,
                                                    config.channels):
                records.append(TrialRecord(**base, **meta, quantity=quantity,
                                           model=model, channel=channel,
                                           error=str(exc)))
            continue
        for model, channel in itertools.product(config.models,
                                                config.channels):
            entry = CHANNEL_NAMES[channel]
            raw_n, norm_n, rel_n = _stats(est_n.values, x0.values,
                                          est_n.noise_sigma, model, entry)
            raw_a, norm_a, rel_a = _stats(est_a.values, x0.values,
                                          est_a.noise_sigma, model, entry)
            records.append(TrialRecord(
                **base, **meta, quantity=quantity, model=model,
                channel=channel, realized_qnr_db=est_n.realized_qnr_db,
                stat_normal=norm_n, stat_anomalous=norm_a,
                stat_normal_raw=raw_n, stat_anomalous_raw=raw_a,
                stat_normal_rel=rel_n, stat_anomalous_rel=rel_a))
    return records


def _pipeline_record(config, base, meta, topology, perturbed, port, grid,
                     noise, plan, rng_noise, kind, target,
                     first_node) -> TrialRecord:
    quantity = config.quantities[0]
    model = config.models[0]
    channel = config.channels[0]
    rec = TrialRecord(**base, **meta, quantity=quantity, model=model,
                      channel=channel)
    dconf = DetectorConfig(model=model, confirm_steps=config.confirm_steps,
                           warmup=config.warmup)
    try:
        rx = _best_rx(topology, port, grid) if quantity == "h" else None
        x0 = _respond(topology, quantity, port, grid, rx)
        x0a = _respond(perturbed, quantity, port, grid, rx)
    except NumericError as exc:
        rec.error = str(exc)
        return rec

    state = ReferenceState()
    try:
        for _ in range(config.warmup + 3):
            est = simulate_measurement(x0, noise, plan, rng_noise)
            state, flag = detect_step(est, state, dconf)
            if flag:
                rec.error = "false_positive"
                return rec
        est_a = None
        for step in range(config.confirm_steps + config.margin_steps):
            est_a = simulate_measurement(x0a, noise, plan, rng_noise)
            state, flag = detect_step(est_a, state, dconf)
            if flag:
                rec.detected = 1
                rec.detect_steps = step + 1
                break
        rec.realized_qnr_db = est_a.realized_qnr_db if est_a else math.nan
        if not rec.detected:
            return rec

        cable = topology.branches[0].cable
        velocity = cable.velocity
        bin_m = velocity / (2.0 * grid.count * grid.delta_f)
        extent = max(node_distances(topology, port).values())
        cconf = ClassifierConfig(velocity=velocity,
                                 max_distance_m=extent + 2.0 * bin_m)
        before = state.reference_spectrum(quantity, grid, meta=x0.meta)
        dlt = delta(est_a, state, model)
        report = classify(before, est_a.spectrum, dlt, cconf)
        rec.class_est = report.anomaly_class
        rec.class_correct = int(report.anomaly_class == _true_class(kind))

        peaks = report.evidence.get("delta_peaks_m", [])
        loc = localize_single(report, peaks, topology, port, bin_m=bin_m)
        rec.located_target = loc.target_id or ""
        if kind == "load_change":
            rec.loc_correct = int(loc.kind == "node" and loc.target_id == target)
        else:
            rec.branch_hit = int(loc.kind == "branch" and loc.target_id == target)
            if loc.kind == "branch" and loc.first_node == first_node:
                rec.first_node_hit = 1
            rec.loc_correct = rec.branch_hit
    except (NumericError, LocalizationError, ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


# ---------------------------------------------------------------------------
# the runner

def experiment_cells(config: ExperimentConfig) -> list[tuple[int, int, float | None]]:
    qnrs = list(config.qnr_sweep_db) if config.qnr_sweep_db is not None else [None]
    cells = []
    for idx, (size, qnr) in enumerate(itertools.product(config.network_sizes,
                                                        qnrs)):
        cells.append((idx, size, qnr))
    return cells


def _run_task(args) -> list[TrialRecord]:
    config, cell, size, qnr, trial = args
    return run_trial(config, cell, size, qnr, trial)


def run_monte_carlo(config: ExperimentConfig,
                    workers: int = 1) -> list[TrialRecord]:
    """All trial records, in deterministic (cell, trial) order."""
    config.check()
    tasks = [(config, cell, size, qnr, trial)
             for cell, size, qnr in experiment_cells(config)
             for trial in range(config.trials)]
    if workers <= 1:
        batches = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_task, tasks, chunksize=8))
    records = [rec for batch in batches for rec in batch]
    records.sort(key=lambda r: (r.cell, r.trial, r.quantity, r.model,
                                r.channel))
    return records


def default_grouping(config: ExperimentConfig) -> tuple[str, ...]:
    if config.mode == "overlap":
        return ("network_size", "qnr_db", "quantity", "model", "channel")
    return ("network_size", "qnr_db", "anomaly_kind")


def run_experiment(config: ExperimentConfig, workers: int = 1):
    """(records, summary rows) for a config; the CLI/service entry point."""
    records = run_monte_carlo(config, workers)
    summary = summarize(records, default_grouping(config))
    return records, summary


# ---------------------------------------------------------------------------
# flat key=value config files

_TUPLE_FIELDS = {
    "quantities": str, "models": str, "channels": str,
    "anomaly_classes": str, "network_sizes": int, "qnr_sweep_db": float,
    "fault_channels": int,
}
_SCALAR_CASTS = {
    "mode": str, "channel_mode": str, "trials": int, "master_seed": int,
    "avg_branch_length_m": float, "max_node_degree": int,
    "mains_averages": int, "tx_dbc": float, "rx_dbc": float,
    "network_floor_db": float, "mutual_ratio": float,
    "fault_r_min_ohm": float, "fault_r_max_ohm": float,
    "degraded_r_scale": float, "degraded_c_scale": float,
    "warmup": int, "confirm_steps": int, "margin_steps": int,
    "grid_delta_f": float, "grid_count": int,
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse `key = value` lines; '#' starts a comment; lists are
    comma-separated; 'none' clears optional fields."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _TUPLE_FIELDS:
            cast = _TUPLE_FIELDS[key]
            if val.lower() == "none":
                values[key] = None
            else:
                values[key] = tuple(cast(v.strip())
                                    for v in val.split(",") if v.strip())
        elif key in _SCALAR_CASTS:
            if key == "network_floor_db" and val.lower() == "none":
                values[key] = None
            else:
                values[key] = _SCALAR_CASTS[key](val)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    config = ExperimentConfig(**values)
    config.check()
    return config


def apply_env_seed(config: ExperimentConfig) -> ExperimentConfig:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        config = replace(config, master_seed=int(env))
    return config


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read a config file; GRIDSENSE_SEED overrides the master seed."""
    with open(path, "r", encoding="utf-8") as fh:
        config = parse_config_text(fh.read())
    return apply_env_seed(config)
