import numpy as np
import pytest

from gridsense.fixtures import damaged_section_network
from gridsense.netgen import LoadDistribution, TopologyConfig, \
    generate_topology
from gridsense.network import input_admittance
from gridsense.sensing import DirectQnr, MainsSensing, simulate_measurement
from gridsense.detection import (CLASS_DISTRIBUTED, CLASS_IMPEDANCE,
                                 CLASS_LOCALIZED, ClassifierConfig,
                                 DetectorConfig, ReferenceState, classify,
                                 delta, detect_step, find_peaks,
                                 root_music_delays, to_time_domain)
from gridsense.tlcore import FrequencyGrid, NumericError, Spectrum
from gridsense.topology import (ConstantLoad, LoadChange, LocalizedFault,
                                SeriesRLC, inject_anomaly, node_distances)

VEL = 1.5811388300841898e8


def spectrum_of(grid, values):
    return Spectrum("yin", grid, np.asarray(values, dtype=complex))


# ---------------------------------------------------------------------------
# delta traces

def test_delta_trivials(grid):
    ref = spectrum_of(grid, np.full(grid.count, 2.0 + 1.0j))
    same = delta(ref, ref, "sup")
    assert np.allclose(same.values, 0.0)
    ratio = delta(ref, ref, "chain")
    assert np.allclose(ratio.values[:, 0, 0], 1.0)
    assert np.allclose(ratio.deviation(), 0.0)

    doubled = spectrum_of(grid, 2.0 * ref.values[:, 0, 0])
    assert np.allclose(delta(doubled, ref, "chain").values[:, 0, 0], 2.0)
    assert np.allclose(delta(doubled, ref, "sup").values, ref.values)


def test_chain_delta_singular_reference(grid):
    vals = np.ones(grid.count, dtype=complex)
    vals[7] = 0.0
    ref = spectrum_of(grid, vals)
    est = spectrum_of(grid, np.ones(grid.count, dtype=complex))
    with pytest.raises(NumericError) as err:
        delta(est, ref, "chain")
    assert 7 in err.value.tones


# ---------------------------------------------------------------------------
# detector stream

def test_noiseless_stream_never_detects(grid, five_node):
    yin = input_admittance(five_node, "B", grid)
    state = ReferenceState()
    config = DetectorConfig(warmup=20)
    for _ in range(200):
        state, flag = detect_step(yin, state, config)
        assert not flag
    assert np.allclose(state.mean, yin.values)


def test_single_spike_is_absorbed(grid, five_node):
    yin = input_admittance(five_node, "B", grid)
    spike = Spectrum("yin", grid, yin.values * 1.5)
    state = ReferenceState()
    config = DetectorConfig(warmup=10, confirm_steps=5)
    rng = np.random.default_rng(3)
    noisy = lambda: simulate_measurement(yin, DirectQnr(40.0),
                                         MainsSensing(), rng)
    for _ in range(30):
        state, flag = detect_step(noisy(), state, config)
    state, flag = detect_step(spike, state, config)
    assert not flag  # candidate recorded, not confirmed
    for _ in range(30):
        state, flag = detect_step(noisy(), state, config)
        assert not flag


def test_persistent_load_change_detects_within_k_plus_one():
    """Monte-Carlo: QNR 40 dB load changes confirm in <= K+1 steps on >= 95%
    of 200 random 10-node networks."""
    grid = FrequencyGrid()
    config = TopologyConfig(n_nodes=10)
    dconf = DetectorConfig(warmup=30, confirm_steps=5)
    hits = 0
    trials = 200
    for seed in range(trials):
        topo = generate_topology(config, seed)
        port = topo.ports[0].node
        rng = np.random.default_rng(10_000 + seed)
        leaves = sorted(n for n in topo.loads)
        node = leaves[int(rng.integers(len(leaves)))]
        new_load = LoadDistribution().sample(rng)
        while new_load == topo.loads[node]:  # a no-op swap is not an anomaly
            new_load = LoadDistribution().sample(rng)
        perturbed = inject_anomaly(topo, LoadChange(node, new_load))
        y0 = input_admittance(topo, port, grid)
        y1 = input_admittance(perturbed, port, grid)
        state = ReferenceState()
        for _ in range(dconf.warmup + 3):
            est = simulate_measurement(y0, DirectQnr(40.0), MainsSensing(), rng)
            state, flag = detect_step(est, state, dconf)
        detected_in = None
        for step in range(dconf.confirm_steps + 1):
            est = simulate_measurement(y1, DirectQnr(40.0), MainsSensing(), rng)
            state, flag = detect_step(est, state, dconf)
            if flag:
                detected_in = step + 1
                break
        if detected_in is not None:
            hits += 1
    assert hits / trials >= 0.95


def test_false_confirmation_rate(grid):
    """3-sigma with K = 5: per-tone exceedances stay within the Gaussian
    bound and no confirmation happens over 1e4 stationary steps."""
    rng = np.random.default_rng(77)
    base = Spectrum("h", grid, np.ones(grid.count, dtype=complex))
    state = ReferenceState()
    dconf = DetectorConfig(warmup=200, confirm_steps=5)
    steps = 10_000
    exceed_tones = 0
    confirmations = 0
    sigma = 10 ** (-30.0 / 20.0)
    for k in range(steps):
        est = simulate_measurement(base, DirectQnr(30.0), MainsSensing(), rng)
        if k >= dconf.warmup and state.var is not None:
            dev = np.abs(est.values - state.mean)
            exceed_tones += int(np.sum(dev > 3.0 * np.sqrt(state.var)))
        state, flag = detect_step(est, state, dconf)
        confirmations += int(flag)
    per_tone_rate = exceed_tones / ((steps - dconf.warmup) * grid.count)
    assert per_tone_rate <= 0.015  # two-sided complex 3-sigma tail
    assert confirmations <= 1


def test_unperturbed_deltas_after_warmup(grid, five_node):
    yin = input_admittance(five_node, "B", grid)
    state = ReferenceState()
    for _ in range(60):
        state, _ = detect_step(yin, state, DetectorConfig(warmup=50))
    assert np.allclose(delta(yin, state, "sup").values, 0.0, atol=1e-15)
    chain = delta(yin, state, "chain").values[:, 0, 0]
    assert np.allclose(chain, 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# time transform and peaks

def test_zero_delta_gives_zero_trace(grid):
    trace = to_time_domain(np.zeros(grid.count, dtype=complex), VEL, grid=grid)
    assert np.all(trace.magnitude == 0.0)
    assert trace.bin_m == pytest.approx(VEL / (2 * grid.count * grid.delta_f))


def test_single_echo_lands_on_its_distance(grid):
    d = 3000.0
    tau = 2.0 * d / VEL
    values = np.exp(-2j * np.pi * grid.tones * tau)
    trace = to_time_domain(values, VEL, grid=grid)
    peaks = find_peaks(trace, 0.5 * trace.magnitude.max())
    assert len(peaks) >= 1
    top = max(peaks, key=lambda p: p.amplitude)
    assert abs(top.position - d) <= trace.bin_m


def test_trace_linearity_bound(grid):
    rng = np.random.default_rng(9)
    x1 = rng.standard_normal(grid.count) + 1j * rng.standard_normal(grid.count)
    x2 = rng.standard_normal(grid.count) + 1j * rng.standard_normal(grid.count)
    a, b = 0.7, -1.3
    t_sum = to_time_domain(a * x1 + b * x2, VEL, grid=grid).magnitude
    t1 = to_time_domain(x1, VEL, grid=grid).magnitude
    t2 = to_time_domain(x2, VEL, grid=grid).magnitude
    assert np.all(t_sum <= abs(a) * t1 + abs(b) * t2 + 1e-12)


def test_find_peaks_impulse_and_flat():
    trace = np.zeros(64)
    trace[10] = 1.0
    peaks = find_peaks(trace, 0.1)
    assert len(peaks) == 1
    assert peaks[0].position == pytest.approx(10.0)
    assert find_peaks(np.ones(64), 0.1) == []


def test_find_peaks_two_echoes(grid):
    d1, d2, a2 = 3000.0, 3600.0, 0.3
    tau1, tau2 = 2 * d1 / VEL, 2 * d2 / VEL
    values = np.exp(-2j * np.pi * grid.tones * tau1) \
        + a2 * np.exp(-2j * np.pi * grid.tones * tau2)
    trace = to_time_domain(values, VEL, grid=grid)
    sep = 2.0 * trace.bin_m / trace.sample_step_m
    peaks = find_peaks(trace, 0.1 * trace.magnitude.max(), sep)
    near = [p for p in peaks if abs(p.position - d1) < trace.bin_m]
    far = [p for p in peaks if abs(p.position - d2) < trace.bin_m]
    assert near and far


def test_end_to_end_mode_axis(grid):
    d = 2400.0
    values = np.exp(-2j * np.pi * grid.tones * (d / VEL))
    trace = to_time_domain(values, VEL, grid=grid, mode="end_to_end")
    top = max(find_peaks(trace, 0.5 * trace.magnitude.max()),
              key=lambda p: p.amplitude)
    assert abs(top.position - d) <= trace.bin_m


# ---------------------------------------------------------------------------
# root-MUSIC

def test_root_music_single_mode_exact(grid):
    tau = 5e-6
    values = np.exp(-2j * np.pi * grid.tones * tau)
    result = root_music_delays(values, 1, VEL, grid=grid)
    assert not result.fallback
    assert len(result.estimates) == 1
    assert result.estimates[0].delay_s == pytest.approx(tau, abs=1e-9)


def test_root_music_exact_for_any_window(grid):
    tau = 12e-6
    values = 0.8 * np.exp(-2j * np.pi * grid.tones * tau)
    for window in (2, 4, 8, 29, 58):
        result = root_music_delays(values, 1, VEL, grid=grid, subarray=window)
        assert result.estimates[0].delay_s == pytest.approx(tau, rel=1e-6)


@pytest.mark.parametrize("gap_us", [1.0, 1.5])
def test_root_music_super_resolution(grid, gap_us):
    """Two delays below the ~2 us Fourier limit resolved at QNR 40 dB."""
    tau1 = 20e-6
    tau2 = tau1 + gap_us * 1e-6
    rng = np.random.default_rng(41)
    values = np.exp(-2j * np.pi * grid.tones * tau1) \
        + np.exp(-2j * np.pi * grid.tones * tau2)
    sigma = np.sqrt(np.mean(np.abs(values) ** 2)) * 10 ** (-40.0 / 20.0)
    noisy = values + sigma * (rng.standard_normal(grid.count)
                              + 1j * rng.standard_normal(grid.count)) / np.sqrt(2)
    result = root_music_delays(noisy, 2, VEL, grid=grid)
    assert not result.fallback
    got = sorted(e.delay_s for e in result.estimates)
    assert got[0] == pytest.approx(tau1, rel=0.05)
    assert got[1] == pytest.approx(tau2, rel=0.05)


def test_root_music_order_zero(grid):
    result = root_music_delays(np.ones(grid.count, dtype=complex), 0, VEL,
                               grid=grid)
    assert result.estimates == []
    assert not result.fallback


def test_root_music_rank_deficient_falls_back(grid):
    result = root_music_delays(np.zeros(grid.count, dtype=complex), 2, VEL,
                               grid=grid)
    assert result.fallback


# ---------------------------------------------------------------------------
# classification on the damaged-section fixture

def fixture_run(anomaly_topo, base_topo, grid):
    v = base_topo.branches[0].cable.velocity
    extent = max(node_distances(base_topo, "N0").values())
    cfg = ClassifierConfig(velocity=v, max_distance_m=extent + 500.0)
    y0 = input_admittance(base_topo, "N0", grid)
    y1 = input_admittance(anomaly_topo, "N0", grid)
    dlt = delta(y1, y0, "sup")
    return classify(y0, y1, dlt, cfg), cfg


def test_classify_distributed_fault(grid):
    for branch in ("B3", "B2"):
        topo, anomaly = damaged_section_network(branch)
        report, _ = fixture_run(inject_anomaly(topo, anomaly), topo, grid)
        assert report.anomaly_class == CLASS_DISTRIBUTED
        assert report.detected


def test_classify_load_change(grid):
    topo, _ = damaged_section_network("B3")
    perturbed = inject_anomaly(topo, LoadChange("N2", SeriesRLC(r_ohm=60.0)))
    report, cfg = fixture_run(perturbed, topo, grid)
    assert report.anomaly_class == CLASS_IMPEDANCE
    bin_m = cfg.velocity / (2 * grid.count * grid.delta_f)
    assert abs(report.d_hat_m - 12_950.0) <= 1.5 * bin_m


def test_classify_localized_fault(grid):
    topo, _ = damaged_section_network("B3")
    perturbed = inject_anomaly(topo,
                               LocalizedFault("B1", 5000.0, ConstantLoad(1 / 20)))
    report, cfg = fixture_run(perturbed, topo, grid)
    assert report.anomaly_class == CLASS_LOCALIZED
    bin_m = cfg.velocity / (2 * grid.count * grid.delta_f)
    assert abs(report.d_hat_m - 5000.0) <= bin_m


def test_classify_empty_delta_is_conservative(grid, five_node):
    yin = input_admittance(five_node, "B", grid)
    dlt = delta(yin, yin, "sup")
    report = classify(yin, yin, dlt, ClassifierConfig())
    assert report.anomaly_class == CLASS_LOCALIZED
    assert report.low_confidence


def test_classify_is_deterministic(grid):
    topo, anomaly = damaged_section_network("B3")
    perturbed = inject_anomaly(topo, anomaly)
    r1, _ = fixture_run(perturbed, topo, grid)
    r2, _ = fixture_run(perturbed, topo, grid)
    assert r1.to_dict() == r2.to_dict()
