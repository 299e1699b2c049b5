import math

import numpy as np
import pytest
from dataclasses import replace

from chanpred import (SystemConfig, generate_trace, link_budget, observe,
                      observe_sequence, read_trace, split_dataset, windows,
                      write_trace)

from oracles import bessel_j0


def test_j0_oracle_matches_reference_values():
    # table values, independently cross-checked against the integral form
    assert bessel_j0(0.0) == 1.0
    assert abs(bessel_j0(1.0) - 0.7651976865579666) < 1e-14
    assert abs(bessel_j0(2.404825557695773)) < 1e-14  # first zero
    assert abs(bessel_j0(4.0) - (-0.3971498098638473)) < 1e-13


def test_doppler_frequency_from_speed_and_carrier(system):
    # 5 km/h at 3.59 GHz
    assert abs(system.doppler_hz - 16.631876413352302) < 1e-9


def test_noise_variance_from_psd_and_bandwidth(system):
    # -174 dBm/Hz over 10 MHz -> -104 dBm -> 10^-13.4 W
    assert abs(system.noise_var - 3.9810717055349693e-14) < 1e-26


def test_zero_speed_freezes_the_channel():
    cfg = SystemConfig(speed_kmh=0.0)
    trace = generate_trace(cfg, 50, seed=3)
    assert np.all(trace.h == trace.h[0])


def test_trace_deterministic_given_seed(system):
    a = generate_trace(system, 200, seed=9)
    b = generate_trace(system, 200, seed=9)
    c = generate_trace(system, 200, seed=10)
    assert np.array_equal(a.h, b.h)
    assert not np.array_equal(a.h, c.h)


def test_trace_rejects_too_few_slots(system):
    with pytest.raises(ValueError):
        generate_trace(system, 3, seed=0)
    with pytest.raises(ValueError):
        generate_trace(system, 100, seed=0, n_sinusoids=4)


def test_trace_stationarity_and_unit_power(trace10k):
    h = trace10k.h
    assert np.all(np.abs(h.mean(axis=0)) < 0.05)
    n_cplx = trace10k.config.n_links
    power = h[:, :n_cplx] ** 2 + h[:, n_cplx:] ** 2
    assert np.all(np.abs(power.mean(axis=0) - 1.0) < 0.05)


def test_autocorrelation_tracks_bessel_envelope(trace10k):
    h = trace10k.h
    fd = trace10k.doppler_hz
    dt = trace10k.config.slot_s
    var = (h * h).mean(axis=0)
    worst = 0.0
    for lag in range(21):
        emp = (h[: h.shape[0] - lag] * h[lag:]).mean(axis=0) / var
        ref = bessel_j0(2.0 * math.pi * fd * lag * dt)
        worst = max(worst, float(np.max(np.abs(emp - ref))))
    assert worst <= 0.05


def test_observe_noiseless_scaling(system):
    h = np.array([0.5, -0.25, 0.1, 0.0, 1.0, -1.0, 0.3, 0.7])
    silent = replace(system, noise_psd_dbm_hz=-math.inf, pathloss_db=0.0)
    # rho = 1: tx power 30 dBm against zero pathloss
    r = observe(h, silent, 30.0, np.random.default_rng(0))
    assert np.allclose(r, h, atol=0.0)
    # rho = 4
    r = observe(h, silent, 30.0 + 10.0 * math.log10(4.0), np.random.default_rng(0))
    assert np.allclose(r, 2.0 * h, atol=1e-12)
    assert r[0] == pytest.approx(1.0, abs=1e-12)


def test_observe_seed_pair_noise_variance(system):
    trace = generate_trace(system, 5000, seed=4)
    _, noise_var = link_budget(system, 10.0)
    r1 = observe_sequence(trace.h, system, 10.0, np.random.default_rng(1))
    r2 = observe_sequence(trace.h, system, 10.0, np.random.default_rng(2))
    diff = r1 - r2
    # independent noise pairs: per real component var(r1 - r2) = noise_var
    assert np.var(diff) == pytest.approx(noise_var, rel=0.05)


def test_split_sizes_follow_7111_ratio():
    s = split_dataset(10000, 3)
    assert (len(s.train), len(s.val), len(s.cal), len(s.test)) == (6997, 1000, 1000, 1000)
    tiny = split_dataset(13, 3)  # exactly 10 windows
    assert (len(tiny.train), len(tiny.val), len(tiny.cal), len(tiny.test)) == (7, 1, 1, 1)


def test_split_is_a_partition_in_temporal_order():
    s = split_dataset(500, 3)
    parts = [s.train, s.val, s.cal, s.test]
    joined = np.concatenate(parts)
    assert np.array_equal(joined, np.arange(500 - 3))
    assert s.train[-1] < s.val[0] < s.cal[0] < s.test[0]


def test_split_rejects_short_traces():
    with pytest.raises(ValueError):
        split_dataset(12, 3)


def test_windows_alignment():
    h = np.arange(40.0).reshape(10, 4)
    x, y = windows(h, np.array([0, 5]), history_len=3)
    assert x.shape == (2, 12)
    assert np.array_equal(x[0], h[0:3].ravel())
    assert np.array_equal(y[0], h[3])
    assert np.array_equal(x[1], h[5:8].ravel())
    assert np.array_equal(y[1], h[8])
    with pytest.raises(ValueError):
        windows(h, np.array([8]), history_len=3)


def test_trace_file_round_trip_is_bitwise(tmp_path, system):
    trace = generate_trace(system, 64, seed=11)
    path = tmp_path / "trace.txt"
    write_trace(trace, path)
    back = read_trace(path)
    assert np.array_equal(back.h, trace.h)
    assert back.seed == trace.seed
    assert back.config.speed_kmh == system.speed_kmh
    assert back.config.carrier_hz == system.carrier_hz


def test_read_trace_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("M=2 N=2 speed_kmh=5.0\n0.0 0.0\n")
    with pytest.raises(ValueError):
        read_trace(path)
    with pytest.raises(FileNotFoundError):
        read_trace(tmp_path / "missing.txt")
