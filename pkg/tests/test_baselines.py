import math

import numpy as np
import pytest

from chanpred import (ARFitError, ARModel, fit_ar, kf_init, kf_run, kf_step,
                      outdated_predict)

from oracles import bessel_j0, riccati_prediction_var


def simulate_ar1(a, innov_std, n, n_links=2, seed=0):
    rng = np.random.default_rng(seed)
    h = np.zeros((n, n_links))
    scale = innov_std / math.sqrt(max(1.0 - a * a, 1e-12))
    h[0] = rng.normal(0.0, scale, n_links)
    for t in range(1, n):
        h[t] = a * h[t - 1] + rng.normal(0.0, innov_std, n_links)
    return h


def test_outdated_is_the_scaled_last_observation():
    r = np.array([[1.0, -2.0], [0.4, 0.0]])
    pred = outdated_predict(r, 4.0)
    assert np.allclose(pred, r / 2.0)
    assert pred[0, 0] == pytest.approx(0.5)


def test_outdated_static_channel_no_noise_is_exact():
    h = np.tile([0.3, -0.7], (10, 1))
    preds = outdated_predict(math.sqrt(9.0) * h[:-1], 9.0)
    assert np.allclose(preds, h[1:], atol=1e-15)


def test_outdated_error_on_fading_channel_matches_correlation_decay(trace10k):
    h = trace10k.h
    preds = h[:-1]  # noiseless outdated estimate is the previous slot
    err = preds - h[1:]
    ratio = float(np.sum(err * err) / np.sum(h[1:] * h[1:]))
    fd, dt = trace10k.doppler_hz, trace10k.config.slot_s
    expected = 2.0 * (1.0 - bessel_j0(2.0 * math.pi * fd * dt))
    assert abs(ratio - expected) <= 0.2 * expected


def test_fit_ar_recovers_ar1_coefficient():
    h = simulate_ar1(0.9, 0.1, 7000, seed=1)
    model = fit_ar(h, order=1)
    assert np.all(model.coeffs[:, 0] >= 0.88)
    assert np.all(model.coeffs[:, 0] <= 0.92)
    assert np.all(model.stationary)


def test_fit_ar_white_noise_gives_near_zero_coefficients():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((7000, 2))
    model = fit_ar(h, order=3)
    assert np.max(np.abs(model.coeffs)) < 0.05


def test_fit_ar_flags_constant_input_as_boundary():
    rng = np.random.default_rng(3)
    h = 1.0 + rng.normal(0.0, 1e-6, (7000, 1))
    model = fit_ar(h, order=1)
    assert model.coeffs[0, 0] == pytest.approx(1.0, abs=1e-3)
    assert not model.stationary[0]


def test_fit_ar_invariant_to_sign_flip():
    h = simulate_ar1(0.8, 0.2, 3000, seed=4)
    a = fit_ar(h, order=3)
    b = fit_ar(-h, order=3)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert np.array_equal(a.innovation_var, b.innovation_var)


def test_fit_ar_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        fit_ar(np.zeros((10, 2)), order=0)
    with pytest.raises(ValueError):
        fit_ar(np.zeros((3, 2)), order=3)
    with pytest.raises(ARFitError):
        fit_ar(np.zeros((100, 1)), order=2)


def test_kf_tracks_exactly_in_the_noiseless_limit():
    h = simulate_ar1(0.85, 0.3, 200, n_links=1, seed=5)
    model = ARModel(coeffs=np.array([[0.5, 0.3]]), innovation_var=np.array([0.1]),
                    stationary=np.array([True]))
    obs = 2.0 * h  # rho = 4, no noise
    preds = kf_run(model, obs, rho=4.0, noise_var=1e-18)
    for i in range(5, 100):
        assert preds[i, 0] == pytest.approx(0.5 * h[i, 0] + 0.3 * h[i - 1, 0],
                                            abs=1e-6)


def test_kf_white_channel_predicts_zero():
    model = ARModel(coeffs=np.array([[0.0]]), innovation_var=np.array([1.0]),
                    stationary=np.array([True]))
    obs = np.random.default_rng(6).standard_normal((50, 1))
    preds = kf_run(model, obs, rho=1.0, noise_var=0.5)
    assert np.all(preds == 0.0)


def test_kf_reaches_the_riccati_fixed_point():
    a, innov_std, rho, noise_var = 0.9, math.sqrt(0.19), 1.0, 0.5
    h = simulate_ar1(a, innov_std, 10000, seed=7)
    rng = np.random.default_rng(8)
    obs = math.sqrt(rho) * h + rng.normal(0.0, math.sqrt(noise_var / 2.0), h.shape)
    model = fit_ar(h, order=1)
    preds = kf_run(model, obs, rho, noise_var)
    err = preds[100:-1] - h[101:]
    mse = float(np.mean(err * err))
    target = riccati_prediction_var(a, innov_std**2, rho, noise_var / 2.0)
    assert abs(mse - target) <= 0.05 * target


def test_kf_covariance_stays_symmetric_psd():
    rng = np.random.default_rng(9)
    # random stable AR(3): roots drawn inside the unit disk
    coeffs = np.empty((2, 3))
    for link in range(2):
        radii = rng.uniform(0.2, 0.9, 3)
        angles = rng.uniform(0, np.pi, 3)
        roots = [radii[0], radii[1] * np.exp(1j * angles[1]),
                 radii[1] * np.exp(-1j * angles[1])]
        poly = np.real(np.poly(roots))
        coeffs[link] = -poly[1:]
    model = ARModel(coeffs=coeffs, innovation_var=np.array([0.1, 0.2]),
                    stationary=np.array([True, True]))
    state = kf_init(model)
    for step in range(10000):
        r_t = rng.standard_normal(2)
        state, _ = kf_step(state, r_t, rho=1.0, noise_var=0.3)
        if step % 500 == 0:
            for link in range(2):
                cov = state.cov[link]
                assert np.array_equal(cov, cov.T)
                assert np.min(np.linalg.eigvalsh(cov)) > -1e-10


def test_kf_beats_outdated_on_a_linear_gaussian_channel():
    a, innov_std, rho, noise_var = 0.9, math.sqrt(0.19), 1.0, 0.5
    for seed in range(5):
        h = simulate_ar1(a, innov_std, 4000, seed=100 + seed)
        rng = np.random.default_rng(200 + seed)
        obs = math.sqrt(rho) * h + rng.normal(0.0, math.sqrt(noise_var / 2.0), h.shape)
        model = fit_ar(h[:2000], order=1)
        kf_err = kf_run(model, obs, rho, noise_var)[50:-1] - h[51:]
        out_err = outdated_predict(obs[50:-1], rho) - h[51:]
        assert np.mean(kf_err**2) < np.mean(out_err**2)
