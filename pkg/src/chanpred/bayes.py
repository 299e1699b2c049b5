"""Importance-sampling refinement and the recursive prediction filter.

Each slot, the calibrated quantile surface for the next channel vector
acts as a piecewise-uniform prior.  Its mean is the point prediction;
once the noisy pilot observation of that slot arrives, prior samples
are reweighted by the observation likelihood and the posterior mean
replaces the raw estimate in the rolling history, closing the loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import posterior_mean_links
from .channel import ChannelTrace, link_budget, observe_sequence
from .conformal import Calibration, PiecewiseUniformPrior, build_prior, calibrate
from .predictor import PredictorParams, forward

logger = logging.getLogger(__name__)


class DegenerateLikelihoodError(ValueError):
    """Raised when the observation noise variance is not positive."""


def likelihood(r, h, rho, noise_var):
    """Observation density N(r; sqrt(rho)*h, noise_var/2) per component."""
    if noise_var <= 0.0:
        raise DegenerateLikelihoodError("noise_var must be positive")
    resid = np.asarray(r, dtype=np.float64) - np.sqrt(rho) * np.asarray(h, dtype=np.float64)
    return np.exp(-(resid * resid) / noise_var) / np.sqrt(np.pi * noise_var)


def importance_weights(samples, r: float, rho: float, noise_var: float) -> np.ndarray:
    """Self-normalized likelihood weights for prior samples of one component.

    Formed in log space with the maximum subtracted before
    exponentiation.  If every weight still underflows to zero, all mass
    is placed on the sample closest to the maximum-likelihood value
    r/sqrt(rho) and a warning is logged.
    """
    if noise_var <= 0.0:
        raise DegenerateLikelihoodError("noise_var must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("samples must be a nonempty 1-d array")
    resid = r - np.sqrt(rho) * samples
    loglik = -(resid * resid) / noise_var
    w = np.exp(loglik - loglik.max())
    total = w.sum()
    if not (total > 0.0 and np.isfinite(total)):
        logger.warning("importance weights underflowed; falling back to nearest sample")
        w = np.zeros_like(samples)
        w[np.argmin(np.abs(samples - r / np.sqrt(rho)))] = 1.0
        return w
    return w / total


def posterior_mean(prior: PiecewiseUniformPrior, link: int, r: float, rho: float,
                   noise_var: float, n_samples: int, rng) -> float:
    """Importance-sampled posterior mean of one component given r.

    In the noiseless limit (noise_var == 0) returns the exact value
    r/sqrt(rho).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if noise_var == 0.0:
        return float(r / np.sqrt(rho))
    rng = np.random.default_rng(rng)
    u = rng.random((1, n_samples))
    means, n_fallback = posterior_mean_links(
        prior.breakpoints[link:link + 1], prior.cum, u,
        np.array([r], dtype=np.float64), np.sqrt(rho), noise_var,
    )
    if n_fallback:
        logger.warning("importance weights underflowed; used nearest-sample fallback")
    return float(means[0])


@dataclass(frozen=True)
class FilterConfig:
    """Settings of the recursive filter."""

    n_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


@dataclass
class FilterRun:
    """Output of one filtering pass.

    ``predictions[i]`` is the one-slot-ahead prediction for trace slot
    ``slots[i]``, formed before that slot's observation is seen.
    """

    slots: np.ndarray
    predictions: np.ndarray
    tx_power_dbm: float
    rho: float
    noise_var: float
    refined_history: bool
    n_fallback: int


def dcbf_run(params: PredictorParams, calib: Calibration, trace: ChannelTrace,
             filter_config: FilterConfig, tx_power_dbm: float, *,
             start: int = 0, stop: int | None = None, observations=None,
             refine_history: bool = True) -> FilterRun:
    """Run the filter over trace slots [start, stop).

    The first ``p`` slots of the segment seed the history with raw
    maximum-likelihood estimates r/sqrt(rho); every later slot t gets a
    prediction from the calibrated prior built on the current history,
    then its observation is folded back in.  With
    ``refine_history=False`` the posterior step is skipped and raw
    estimates roll through the history instead (the calibrated
    predictor alone, no Bayesian update).

    ``observations`` may supply a precomputed (stop-start, L) matrix of
    pilot observations so several methods can share one noise
    realization; otherwise observations are drawn from a stream derived
    from filter_config.seed.
    """
    cfg = trace.config
    if params.dim != cfg.dim:
        raise ValueError("predictor dimension does not match the trace")
    if calib.offsets.shape[0] != cfg.dim:
        raise ValueError("calibration dimension does not match the trace")
    stop = trace.n_slots if stop is None else stop
    p = params.history_len
    if not 0 <= start < stop <= trace.n_slots:
        raise ValueError("invalid slot range")
    if stop - start <= p:
        raise ValueError(f"segment must be longer than the history window ({p})")

    rho, noise_var = link_budget(cfg, tx_power_dbm)
    sqrt_rho = np.sqrt(rho)
    obs_seq, sample_seq = np.random.SeedSequence(filter_config.seed).spawn(2)
    if observations is None:
        observations = observe_sequence(trace.h[start:stop], cfg, tx_power_dbm,
                                        np.random.default_rng(obs_seq))
    else:
        observations = np.asarray(observations, dtype=np.float64)
        if observations.shape != (stop - start, cfg.dim):
            raise ValueError("observations must cover the whole segment")
    rng = np.random.default_rng(sample_seq)

    hist = observations[:p] / sqrt_rho
    n_pred = stop - start - p
    preds = np.empty((n_pred, cfg.dim))
    n_fallback = 0
    for i in range(n_pred):
        surface = forward(params, hist.ravel())
        prior = build_prior(calibrate(surface, calib.offsets, calib.bounds), calib.levels)
        preds[i] = prior.mean()
        r_t = observations[p + i]
        if refine_history and noise_var > 0.0:
            u = rng.random((cfg.dim, filter_config.n_samples))
            refined, nf = posterior_mean_links(prior.breakpoints, prior.cum, u,
                                               r_t, sqrt_rho, noise_var)
            n_fallback += nf
        else:
            refined = r_t / sqrt_rho
        hist = np.vstack([hist[1:], refined[None, :]])
    if n_fallback:
        logger.warning("%d importance-weight underflow fallbacks during filtering",
                       n_fallback)
    return FilterRun(
        slots=np.arange(start + p, stop),
        predictions=preds,
        tx_power_dbm=tx_power_dbm,
        rho=rho,
        noise_var=noise_var,
        refined_history=bool(refine_history),
        n_fallback=n_fallback,
    )
