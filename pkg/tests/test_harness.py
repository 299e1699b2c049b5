import dataclasses
import logging
import math

import numpy as np
import pytest

from chanpred import (ExperimentConfig, FilterConfig, SystemConfig,
                      TrainConfig, aggregate, nmse_db, nmse_energy_db,
                      parse_config, read_results, report_text, run_experiment,
                      write_results)
from chanpred.harness import ResultRow


def small_config(**overrides):
    base = dict(
        system=SystemConfig(),
        n_slots=600,
        methods=("outdated", "kf"),
        tx_powers_dbm=(0.0, 10.0),
        seeds=(0,),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


FAST_TRAIN = TrainConfig(epochs=2, batch_size=64, hidden=(8, 8))
FAST_FILTER = FilterConfig(n_samples=100)


# ---- error metric ----

def test_nmse_perfect_prediction_hits_the_floor():
    truth = np.random.default_rng(0).standard_normal((50, 4))
    assert nmse_db(truth.copy(), truth) == -100.0


def test_nmse_zero_prediction_is_zero_db():
    truth = np.random.default_rng(1).standard_normal((50, 4))
    assert nmse_db(np.zeros_like(truth), truth) == pytest.approx(0.0, abs=1e-12)


def test_nmse_single_slot_hand_value():
    truth = np.array([[1.0, 0.0]])
    pred = np.array([[0.9, 0.0]])
    assert nmse_db(pred, truth) == pytest.approx(-20.0, abs=1e-9)


def test_nmse_excludes_zero_energy_slots(caplog):
    truth = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    pred = np.array([[0.9, 0.0], [5.0, 5.0], [0.0, 1.8]])
    with caplog.at_level(logging.WARNING):
        val = nmse_db(pred, truth)
    assert val == pytest.approx(-20.0, abs=1e-9)
    assert any("zero-energy" in rec.message for rec in caplog.records)


def test_nmse_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        nmse_db(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        nmse_db(np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        nmse_db(np.zeros(3), np.zeros(3))


def test_energy_nmse_weighs_slots_by_energy():
    truth = np.array([[2.0, 0.0], [0.0, 1.0]])
    pred = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert nmse_energy_db(pred, truth) == pytest.approx(10 * math.log10(0.2),
                                                        abs=1e-9)
    with pytest.raises(ValueError):
        nmse_energy_db(pred, np.zeros_like(truth))


# ---- experiment runner ----

@pytest.fixture(scope="module")
def quick_result():
    return run_experiment(small_config())


def test_run_produces_one_row_per_cell(quick_result):
    assert quick_result.ok
    assert len(quick_result.rows) == 2 * 2  # methods x powers
    keys = {(r.method, r.tx_power_dbm, r.seed) for r in quick_result.rows}
    assert keys == {(m, p, 0) for m in ("outdated", "kf") for p in (0.0, 10.0)}
    for row in quick_result.rows:
        assert row.speed_kmh == 5.0
        assert math.isfinite(row.nmse_db)
        assert row.runtime_s >= 0.0


def test_rerun_is_deterministic_up_to_runtime(quick_result):
    again = run_experiment(small_config())
    for a, b in zip(quick_result.rows, again.rows):
        assert dataclasses.replace(a, runtime_s=0.0) == \
            dataclasses.replace(b, runtime_s=0.0)


def test_parallel_run_matches_serial(quick_result):
    par = run_experiment(small_config(seeds=(0, 1), n_jobs=2))
    ser = run_experiment(small_config(seeds=(0, 1), n_jobs=1))
    strip = lambda rows: [dataclasses.replace(r, runtime_s=0.0) for r in rows]
    assert strip(par.rows) == strip(ser.rows)
    sub = [dataclasses.replace(r, runtime_s=0.0) for r in par.rows if r.seed == 0]
    assert sub == strip(quick_result.rows)


def test_training_is_shared_between_raw_and_filtered_variants():
    common = dict(n_slots=600, tx_powers_dbm=(10.0,), seeds=(3,),
                  train=FAST_TRAIN, filter=FAST_FILTER)
    solo = run_experiment(small_config(methods=("mlp",), **common))
    pair = run_experiment(small_config(methods=("mlp", "dcbf_mlp"), **common))
    assert solo.ok and pair.ok
    mlp_solo = [r for r in solo.rows if r.method == "mlp"][0]
    mlp_pair = [r for r in pair.rows if r.method == "mlp"][0]
    assert mlp_solo.nmse_db == mlp_pair.nmse_db


def test_seed_level_failures_are_captured_not_raised():
    result = run_experiment(small_config(n_slots=5, seeds=(0, 1)))
    assert result.rows == []
    assert len(result.failures) == 2
    for failure in result.failures:
        assert failure.tx_power_dbm is None and failure.method is None
        assert "n_slots" in failure.message or "slots" in failure.message
    assert {f.seed for f in result.failures} == {0, 1}
    assert not result.ok


def test_method_level_failure_spares_other_methods(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("injected kalman failure")

    monkeypatch.setattr("chanpred.harness.kf_run", boom)
    result = run_experiment(small_config(tx_powers_dbm=(10.0,)))
    assert [r.method for r in result.rows] == ["outdated"]
    assert len(result.failures) == 1
    failure = result.failures[0]
    assert failure.method == "kf"
    assert failure.tx_power_dbm == 10.0
    assert "injected kalman failure" in failure.message


# ---- results files and reporting ----

def test_results_round_trip_is_exact(tmp_path, quick_result):
    path = tmp_path / "rows.csv"
    write_results(quick_result.rows, path)
    back = read_results(path)
    strip = lambda rows: [dataclasses.replace(r, runtime_s=0.0) for r in rows]
    assert strip(back) == strip(quick_result.rows)


def test_read_results_rejects_malformed_files(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("speed,power\n")
    with pytest.raises(ValueError, match="header"):
        read_results(bad_header)
    short_row = tmp_path / "b.csv"
    short_row.write_text(
        "speed_kmh,tx_power_dbm,method,seed,nmse_db,runtime_s\n5.0,0.0,kf\n")
    with pytest.raises(ValueError, match="malformed"):
        read_results(short_row)
    with pytest.raises(FileNotFoundError):
        read_results(tmp_path / "missing.csv")


def test_aggregate_matches_manual_statistics():
    rows = [ResultRow(5.0, 0.0, "kf", s, v, 0.1)
            for s, v in [(0, -10.0), (1, -12.0), (2, -11.0)]]
    rows.append(ResultRow(5.0, 0.0, "outdated", 0, -3.0, 0.1))
    agg = aggregate(rows)
    mean, std, n = agg[(5.0, 0.0, "kf")]
    assert mean == pytest.approx(-11.0)
    assert std == pytest.approx(np.std([-10, -12, -11], ddof=1))
    assert n == 3
    assert agg[(5.0, 0.0, "outdated")] == (-3.0, 0.0, 1)


def test_report_means_are_recoverable_to_full_precision(quick_result):
    text = report_text(quick_result.rows)
    agg = aggregate(quick_result.rows)
    for (speed, power, method), (mean, _, _) in agg.items():
        assert repr(mean) in text
    header_line = [ln for ln in text.splitlines() if "tx_power_dbm" in ln][0]
    assert "outdated" in header_line and "kf" in header_line
    assert report_text([]) == "no results\n"


# ---- config files ----

FULL_INI = """
[system]
speed_kmh = 5.0
carrier_hz = 2.0e9
pathloss_db = 120.0

[experiment]
n_slots = 600
methods = outdated, kf
tx_powers_dbm = -10, 0
seeds = 0 1
n_jobs = 2
bounds = global

[train]
epochs = 3
hidden = 16, 8

[filter]
n_samples = 128

[levels]
taus = 0.1, 0.5, 0.9
"""


def test_parse_config_reads_every_section(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(FULL_INI)
    cfg = parse_config(path)
    assert cfg.system.speed_kmh == 5.0
    assert cfg.system.pathloss_db == 120.0
    assert cfg.n_slots == 600
    assert cfg.methods == ("outdated", "kf")
    assert cfg.tx_powers_dbm == (-10.0, 0.0)
    assert cfg.seeds == (0, 1)
    assert cfg.n_jobs == 2
    assert cfg.bounds_mode == "global"
    assert cfg.train.epochs == 3
    assert cfg.train.hidden == (16, 8)
    assert cfg.filter.n_samples == 128
    assert np.allclose(cfg.levels.taus, [0.1, 0.5, 0.9])


def test_parse_config_defaults_missing_sections(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\nn_slots = 700\n")
    cfg = parse_config(path)
    assert cfg.n_slots == 700
    assert cfg.train.epochs == TrainConfig().epochs
    assert cfg.bounds_mode == "per_link"


def test_parse_config_rejects_unknown_names(tmp_path):
    bad_section = tmp_path / "a.ini"
    bad_section.write_text("[mystery]\nx = 1\n")
    with pytest.raises(ValueError, match="unknown config section"):
        parse_config(bad_section)
    bad_key = tmp_path / "b.ini"
    bad_key.write_text("[experiment]\nwarp = 9\n")
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config(bad_key)
    bad_value = tmp_path / "c.ini"
    bad_value.write_text("[experiment]\nn_slots = many\n")
    with pytest.raises(ValueError, match="bad value"):
        parse_config(bad_value)
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "nope.ini")


def test_experiment_config_validation():
    with pytest.raises(ValueError, match="unknown method"):
        ExperimentConfig(methods=("psychic",))
    with pytest.raises(ValueError, match="duplicate"):
        ExperimentConfig(methods=("kf", "kf"))
    with pytest.raises(ValueError, match="seed"):
        ExperimentConfig(seeds=())
    with pytest.raises(ValueError, match="n_jobs"):
        ExperimentConfig(n_jobs=0)
    with pytest.raises(ValueError, match="bounds_mode"):
        ExperimentConfig(bounds_mode="vibes")
    with pytest.raises(ValueError, match="transmit power"):
        ExperimentConfig(tx_powers_dbm=())
