"""Reference predictors: outdated estimates, AR fits, Kalman tracking.

The Kalman baseline fits one scalar AR model per real channel component
on clean training data, then tracks each component through its noisy
pilot observations in companion form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class ARFitError(RuntimeError):
    """Raised when the Yule-Walker normal equations cannot be solved."""


def outdated_predict(r, rho: float):
    """Maximum-likelihood estimate r/sqrt(rho) of the observed slot.

    Used as a prediction for the following slot, hence 'outdated'.
    """
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    return np.asarray(r, dtype=np.float64) / np.sqrt(rho)


@dataclass
class ARModel:
    """Per-component AR(q) coefficients and innovation variances."""

    coeffs: np.ndarray
    innovation_var: np.ndarray
    stationary: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_components(self) -> int:
        return self.coeffs.shape[0]

    def companion(self, link: int) -> np.ndarray:
        """Companion transition matrix of one component's AR recursion."""
        q = self.order
        f = np.zeros((q, q))
        f[0] = self.coeffs[link]
        if q > 1:
            f[1:, :-1] = np.eye(q - 1)
        return f


def fit_ar(h, order: int = 3) -> ARModel:
    """Yule-Walker AR fit per column of a clean channel segment.

    Uses biased (divide by T) autocovariances of the raw samples; the
    fading components are zero-mean by construction, so no demeaning is
    applied.  Components whose fitted recursion has characteristic
    roots on or within 1e-3 of the unit circle are flagged
    non-stationary and a warning is logged; the margin catches
    degenerate fits (a constant input yields radius 1 - 1/T under the
    biased estimator) whose stationary covariance would be useless.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError("h must be 2-d (slots, components)")
    n, n_comp = h.shape
    if order < 1:
        raise ValueError("order must be positive")
    if n <= order:
        raise ValueError(f"need more than {order} slots to fit AR({order})")
    coeffs = np.empty((n_comp, order))
    innov = np.empty(n_comp)
    stationary = np.empty(n_comp, dtype=bool)
    for link in range(n_comp):
        x = h[:, link]
        r = np.array([x[: n - k] @ x[k:] for k in range(order + 1)]) / n
        # Toeplitz normal equations R a = r[1:]
        gram = np.empty((order, order))
        for i in range(order):
            for j in range(order):
                gram[i, j] = r[abs(i - j)]
        try:
            a = np.linalg.solve(gram, r[1:])
        except np.linalg.LinAlgError as exc:
            raise ARFitError(f"singular normal equations for component {link}") from exc
        coeffs[link] = a
        innov[link] = max(r[0] - a @ r[1:], 0.0)
        roots = np.roots(np.concatenate(([1.0], -a)))
        stationary[link] = bool(np.all(np.abs(roots) < 1.0 - 1e-3))
    if not stationary.all():
        bad = np.flatnonzero(~stationary)
        logger.warning("AR fit non-stationary for components %s", bad.tolist())
    return ARModel(coeffs=coeffs, innovation_var=innov, stationary=stationary)


@dataclass
class KalmanState:
    """Companion-form filter state for every component."""

    x: np.ndarray
    cov: np.ndarray
    model: ARModel


def _stationary_cov(f, q_mat):
    # vec(P) = (I - F kron F)^-1 vec(Q)
    q = f.shape[0]
    lhs = np.eye(q * q) - np.kron(f, f)
    return np.linalg.solve(lhs, q_mat.ravel()).reshape(q, q)


def kf_init(model: ARModel) -> KalmanState:
    """Zero state with the stationary covariance of each AR recursion.

    Non-stationary components fall back to a diffuse diagonal init.
    """
    q = model.order
    n = model.n_components
    x = np.zeros((n, q))
    cov = np.empty((n, q, q))
    for link in range(n):
        f = model.companion(link)
        q_mat = np.zeros((q, q))
        q_mat[0, 0] = model.innovation_var[link]
        if model.stationary[link]:
            try:
                p0 = _stationary_cov(f, q_mat)
            except np.linalg.LinAlgError:
                p0 = 10.0 * np.eye(q)
        else:
            p0 = 10.0 * np.eye(q)
        cov[link] = 0.5 * (p0 + p0.T)
    return KalmanState(x=x, cov=cov, model=model)


def kf_step(state: KalmanState, r_t, rho: float, noise_var: float):
    """One predict/update cycle on observation r_t for every component.

    The measurement of component l is r = sqrt(rho)*h + w with w of
    variance noise_var/2.  Covariances use the Joseph update and are
    re-symmetrized.  Returns (state, prediction for the next slot).
    """
    r_t = np.asarray(r_t, dtype=np.float64)
    model = state.model
    q = model.order
    sqrt_rho = np.sqrt(rho)
    r_var = noise_var / 2.0
    pred = np.empty(model.n_components)
    eye = np.eye(q)
    for link in range(model.n_components):
        f = model.companion(link)
        x_pr = f @ state.x[link]
        p_pr = f @ state.cov[link] @ f.T
        p_pr[0, 0] += model.innovation_var[link]
        s = rho * p_pr[0, 0] + r_var
        if s > 0.0:
            gain = sqrt_rho * p_pr[:, 0] / s
            x_up = x_pr + gain * (r_t[link] - sqrt_rho * x_pr[0])
            a_mat = eye - np.outer(gain, np.concatenate(([sqrt_rho], np.zeros(q - 1))))
            p_up = a_mat @ p_pr @ a_mat.T + r_var * np.outer(gain, gain)
        else:
            # degenerate: no information in the observation
            x_up = x_pr
            p_up = p_pr
        state.x[link] = x_up
        state.cov[link] = 0.5 * (p_up + p_up.T)
        pred[link] = model.coeffs[link] @ x_up
    return state, pred


def kf_run(model: ARModel, observations, rho: float, noise_var: float) -> np.ndarray:
    """Filter a whole observation block.

    observations has shape (n, L); row i is the pilot observation of
    segment slot i.  Returns (n, L) where row i predicts slot i+1.
    """
    observations = np.asarray(observations, dtype=np.float64)
    if observations.ndim != 2 or observations.shape[1] != model.n_components:
        raise ValueError("observations must have shape (n, n_components)")
    state = kf_init(model)
    preds = np.empty_like(observations)
    for i in range(observations.shape[0]):
        state, preds[i] = kf_step(state, observations[i], rho, noise_var)
    return preds
