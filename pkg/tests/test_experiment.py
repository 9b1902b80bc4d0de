import math

import numpy as np
import pytest
from scipy.stats import norm

from gridsense.experiment import (ExperimentConfig, TrialRecord,
                                  load_experiment_config, p_failure_overlap,
                                  parse_config_text, records_to_csv,
                                  rows_to_csv, run_monte_carlo, summarize,
                                  wilson_interval)
from gridsense.netgen import ConfigError


# ---------------------------------------------------------------------------
# overlap probability

def test_overlap_disjoint_supports():
    rng = np.random.default_rng(1)
    a = rng.normal(0.0, 0.5, 400)
    b = rng.normal(50.0, 0.5, 400)
    assert p_failure_overlap(a, b) < 1e-6


def test_overlap_identical_distributions():
    rng = np.random.default_rng(2)
    a = rng.normal(0.0, 1.0, 2000)
    assert p_failure_overlap(a, a) == pytest.approx(0.5, abs=0.01)


def test_overlap_gaussian_oracle():
    """Closed form: two unit-variance Gaussians 3 sigma apart share
    2 Phi(-1.5) of their mass, so p_failure = Phi(-1.5) ~= 0.0668."""
    rng = np.random.default_rng(3)
    a = rng.normal(0.0, 1.0, 4000)
    b = rng.normal(3.0, 1.0, 4000)
    expected = float(norm.cdf(-1.5))
    assert p_failure_overlap(a, b) == pytest.approx(expected, abs=0.012)


def test_overlap_stays_bounded():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3.0), 200)
        b = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3.0), 200)
        assert 0.0 <= p_failure_overlap(a, b) <= 0.5


def test_overlap_point_masses():
    assert p_failure_overlap([1.0, 1.0], [1.0, 1.0]) == 0.5
    assert p_failure_overlap([1.0, 1.0], [2.0, 2.0]) == 0.0
    assert p_failure_overlap([1.0, 1.0], [1.0, 2.0, 0.5]) == 0.0
    with pytest.raises(ValueError):
        p_failure_overlap([], [1.0])


# ---------------------------------------------------------------------------
# Wilson intervals and summaries

def test_wilson_interval_half():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.404, abs=5e-4)
    assert hi == pytest.approx(0.596, abs=5e-4)


def test_wilson_interval_all_success():
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0
    assert 0.95 < lo < 1.0
    assert wilson_interval(0, 0) == (pytest.approx(math.nan, nan_ok=True),) * 2


def base_records():
    recs = []
    for q in ("yin", "rho", "h"):
        for t in range(4):
            recs.append(TrialRecord(
                cell=0, trial=t, network_size=10, qnr_db=math.nan,
                quantity=q, model="sup", channel="1-1",
                anomaly_kind="localized_fault", anomaly_target="B1",
                anomaly_offset_m=10.0, anomaly_distance_m=100.0,
                true_first_node="N1", detected=1, branch_hit=t % 2,
                first_node_hit=1, loc_correct=t % 2,
                stat_normal=1.0 + 0.01 * t, stat_anomalous=5.0 + 0.01 * t,
                stat_normal_raw=1.0, stat_anomalous_raw=5.0,
                stat_normal_rel=1.0, stat_anomalous_rel=5.0))
    return recs


def test_summarize_grouping_arity():
    rows = summarize(base_records(), ("quantity",))
    assert len(rows) == 3
    assert {r["quantity"] for r in rows} == {"yin", "rho", "h"}
    for r in rows:
        assert r["n"] == 4
        assert r["detected_rate"] == 1.0
        assert r["first_node_hit_rate"] >= r["branch_hit_rate"]


def test_summarize_emits_empty_expected_cells():
    rows = summarize(base_records(), ("quantity",),
                     expected_groups=[("yin",), ("nope",)])
    missing = [r for r in rows if r["quantity"] == "nope"]
    assert len(missing) == 1
    assert missing[0]["n"] == 0
    assert math.isnan(missing[0]["detected_rate"])


def test_records_csv_shape():
    text = records_to_csv(base_records())
    lines = text.split("\n")
    assert lines[0].split(",")[:4] == ["cell", "trial", "network_size",
                                       "qnr_db"]
    assert len([l for l in lines if l]) == 13  # header + 12 records
    assert "\r" not in text
    assert rows_to_csv([]) == ""


# ---------------------------------------------------------------------------
# the Monte-Carlo runner

def tiny_config(**kw):
    base = dict(mode="pipeline", quantities=("yin",), models=("sup",),
                network_sizes=(6,), qnr_sweep_db=(40.0,),
                anomaly_classes=("localized_fault",), trials=4,
                master_seed=5, warmup=20)
    base.update(kw)
    return ExperimentConfig(**base)


def test_single_noiseless_load_change_trial():
    config = tiny_config(anomaly_classes=("load_change",), trials=1,
                         qnr_sweep_db=(math.inf,), master_seed=3)
    records = run_monte_carlo(config)
    assert len(records) == 1
    rec = records[0]
    assert rec.error == ""
    assert rec.detected == 1
    assert rec.class_est == "impedance_variation"
    assert rec.loc_correct == 1


def test_runner_is_deterministic():
    config = tiny_config()
    a = records_to_csv(run_monte_carlo(config))
    b = records_to_csv(run_monte_carlo(config))
    assert a == b


def test_runner_worker_count_invariance():
    config = tiny_config(trials=6)
    seq = records_to_csv(run_monte_carlo(config, workers=1))
    par = records_to_csv(run_monte_carlo(config, workers=2))
    assert seq == par


def test_first_node_contains_branch_hits():
    config = tiny_config(trials=10, network_sizes=(8,))
    records = run_monte_carlo(config)
    for rec in records:
        assert rec.first_node_hit >= rec.branch_hit


def test_overlap_mode_records_statistics():
    config = tiny_config(mode="overlap", trials=5,
                         quantities=("yin", "rho"), models=("sup", "chain"))
    records = run_monte_carlo(config)
    assert len(records) == 5 * 2 * 2
    for rec in records:
        assert math.isfinite(rec.stat_normal)
        assert math.isfinite(rec.stat_anomalous)
        assert rec.stat_anomalous >= 0.0
    rows = summarize(records, ("quantity", "model"))
    assert len(rows) == 4
    for row in rows:
        assert 0.0 <= row["p_failure_sigma"] <= 0.5


# ---------------------------------------------------------------------------
# config files

CONFIG_TEXT = """
# sweep setup
mode = pipeline
quantities = yin
models = sup
network_sizes = 5, 10
qnr_sweep_db = 60, 40
anomaly_classes = localized_fault
trials = 2
master_seed = 11
"""


def test_parse_config_text():
    config = parse_config_text(CONFIG_TEXT)
    assert config.network_sizes == (5, 10)
    assert config.qnr_sweep_db == (60.0, 40.0)
    assert config.trials == 2
    assert config.master_seed == 11


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config_text("bogus = 1")
    with pytest.raises(ConfigError):
        parse_config_text("mode")


def test_env_var_overrides_master_seed(tmp_path, monkeypatch):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT)
    monkeypatch.setenv("GRIDSENSE_SEED", "777")
    config = load_experiment_config(str(path))
    assert config.master_seed == 777
    monkeypatch.delenv("GRIDSENSE_SEED")
    assert load_experiment_config(str(path)).master_seed == 11


def test_invalid_config_values():
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0).check()
    with pytest.raises(ConfigError):
        ExperimentConfig(quantities=("volts",)).check()
    with pytest.raises(ConfigError):
        ExperimentConfig(qnr_sweep_db=()).check()
