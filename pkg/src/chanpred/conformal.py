"""Split-conformal calibration of quantile surfaces.

A held-out calibration block yields per-(component, level) additive
offsets: the empirical tau-quantile of the conformity scores
(target - predicted quantile).  Offset surfaces are then monotonized
and extended with data-driven boundary columns, giving a valid
piecewise-uniform predictive distribution per channel component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import textio
from ._kernels import piecewise_sample
from .predictor import PredictorParams, QuantileLevels, forward_batch


def conformity_scores(params: PredictorParams, inputs, targets) -> np.ndarray:
    """Signed residuals target - q_hat, shape (n, L, G)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if inputs.shape[0] == 0:
        raise ValueError("calibration set is empty")
    if targets.shape != (inputs.shape[0], params.dim):
        raise ValueError("targets must have shape (n, dim)")
    return targets[:, :, None] - forward_batch(params, inputs)


def empirical_quantile(values, tau: float) -> float:
    """Finite-sample tau-quantile: the k-th smallest with k = ceil((n+1)*tau).

    k is clamped to [1, n], so extreme tau return the sample min or max.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a nonempty 1-d array")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    n = values.size
    k = int(np.ceil((n + 1) * tau))
    k = min(max(k, 1), n)
    return float(np.partition(values, k - 1)[k - 1])


def calibration_offsets(scores, levels: QuantileLevels) -> np.ndarray:
    """Per-(component, level) offsets from a score block of shape (n, L, G)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 3:
        raise ValueError("scores must have shape (n, L, G)")
    if scores.shape[2] != levels.g:
        raise ValueError("scores level axis does not match levels")
    n, n_dim, n_lev = scores.shape
    out = np.empty((n_dim, n_lev))
    for j, tau in enumerate(levels.taus):
        k = min(max(int(np.ceil((n + 1) * tau)), 1), n)
        out[:, j] = np.partition(scores[:, :, j], k - 1, axis=0)[k - 1]
    return out


def training_bounds(targets, mode: str = "per_link") -> np.ndarray:
    """Support bounds from the training targets, shape (L, 2).

    mode "per_link" takes min/max per component (tighter priors);
    "global" shares the overall min/max across every component.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[0] == 0:
        raise ValueError("targets are empty")
    if mode == "per_link":
        return np.stack([targets.min(axis=0), targets.max(axis=0)], axis=1)
    if mode == "global":
        return np.tile([targets.min(), targets.max()], (targets.shape[1], 1))
    raise ValueError(f"unknown bounds mode {mode!r}; choose per_link or global")


def calibrate(surface, offsets, bounds) -> np.ndarray:
    """Calibrated breakpoint matrix (L, G+2) for one quantile surface.

    Adds the conformal offsets, sorts each row (isotonization of any
    quantile crossings), and attaches boundary columns that extend the
    training range far enough to bracket the interior grid.
    """
    surface = np.asarray(surface, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    bounds = np.asarray(bounds, dtype=np.float64)
    if surface.shape != offsets.shape:
        raise ValueError("surface and offsets shapes differ")
    interior = np.sort(surface + offsets, axis=1)
    lo = np.minimum(bounds[:, 0], interior[:, 0])
    hi = np.maximum(bounds[:, 1], interior[:, -1])
    return np.concatenate([lo[:, None], interior, hi[:, None]], axis=1)


def coverage(params: PredictorParams, offsets, inputs, targets,
             levels: QuantileLevels) -> np.ndarray:
    """Empirical P(target <= q_hat + offset) per (component, level).

    Computed on the raw offset surfaces, before any monotonization.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if inputs.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    adjusted = forward_batch(params, inputs) + np.asarray(offsets, dtype=np.float64)
    return (targets[:, :, None] <= adjusted).mean(axis=0)


@dataclass
class Calibration:
    """Everything needed to turn a raw surface into a predictive prior."""

    offsets: np.ndarray
    bounds: np.ndarray
    levels: QuantileLevels

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        if self.offsets.ndim != 2 or self.offsets.shape[1] != self.levels.g:
            raise ValueError("offsets must have shape (L, G)")
        if self.bounds.shape != (self.offsets.shape[0], 2):
            raise ValueError("bounds must have shape (L, 2)")


def save_calibration(calib: Calibration, path) -> None:
    header = {
        "dim": calib.offsets.shape[0],
        "n_levels": calib.levels.g,
        "taus": ",".join(repr(float(t)) for t in calib.levels.taus),
    }
    textio.write_arrays(path, header, {"offsets": calib.offsets, "bounds": calib.bounds})


def load_calibration(path) -> Calibration:
    header, arrays = textio.read_arrays(path)
    try:
        taus = np.array([float(t) for t in header["taus"].split(",")])
        levels = QuantileLevels(taus)
        calib = Calibration(arrays["offsets"], arrays["bounds"], levels)
        if calib.offsets.shape[0] != int(header["dim"]):
            raise ValueError("offsets do not match declared dim")
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad calibration file {path}: {exc}") from exc
    return calib


@dataclass
class PiecewiseUniformPrior:
    """Per-component piecewise-uniform distribution on a shared CDF grid.

    ``breakpoints`` has shape (L, G+2) with nondecreasing rows;
    ``cum`` holds the G+2 CDF values 0, tau_1, .., tau_G, 1.  Cells of
    zero width carry their mass as an atom at the shared breakpoint.
    """

    breakpoints: np.ndarray
    cum: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=np.float64)
        self.cum = np.asarray(self.cum, dtype=np.float64)
        if self.breakpoints.ndim != 2 or self.breakpoints.shape[1] != self.cum.size:
            raise ValueError("breakpoints must be (L, len(cum))")
        if not np.all(np.isfinite(self.breakpoints)):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(self.breakpoints, axis=1) < 0.0):
            raise ValueError("breakpoint rows must be nondecreasing")
        if self.cum[0] != 0.0 or self.cum[-1] != 1.0 or np.any(np.diff(self.cum) < 0.0):
            raise ValueError("cum must rise from 0 to 1")

    @property
    def n_components(self) -> int:
        return self.breakpoints.shape[0]

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.cum)

    def cdf(self, link: int, x):
        """Right-continuous CDF of component ``link`` evaluated at x."""
        b = self.breakpoints[link]
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        g = np.searchsorted(b, x, side="right")
        out = np.empty(x.shape)
        out[g == 0] = 0.0
        out[g == b.size] = 1.0
        inner = (g > 0) & (g < b.size)
        gi = g[inner]
        lo = b[gi - 1]
        width = b[gi] - lo
        frac = np.divide(x[inner] - lo, width, out=np.zeros_like(width), where=width > 0)
        out[inner] = self.cum[gi - 1] + frac * (self.cum[gi] - self.cum[gi - 1])
        return float(out[0]) if scalar else out

    def mean(self) -> np.ndarray:
        """Exact per-component means: sum of mass * cell midpoint."""
        mid = 0.5 * (self.breakpoints[:, :-1] + self.breakpoints[:, 1:])
        return mid @ self.masses

    def sample(self, link: int, n: int, rng) -> np.ndarray:
        """n inverse-CDF draws from component ``link``."""
        rng = np.random.default_rng(rng)
        return piecewise_sample(self.breakpoints[link], self.cum, rng.random(n))


def build_prior(phi, levels: QuantileLevels) -> PiecewiseUniformPrior:
    """Wrap a calibrated breakpoint matrix as a sampling-ready prior."""
    return PiecewiseUniformPrior(breakpoints=np.asarray(phi, dtype=np.float64),
                                 cum=levels.padded)
