"""NumPy reference implementations of the numerical kernels.

Same call signatures as the compiled module so either backend can be
swapped in at import time.  Kept deliberately vectorized; the compiled
versions exist because the filtering loop calls these once per slot.
"""

import numpy as np

IMPL = "pure"


def sos_mix(omega, phase, amp, n_slots, dt):
    """Sum-of-sinusoids synthesis: sum_k amp_k*cos(omega_k*t_i + phase_k).

    Parameters
    ----------
    omega : (K,) angular frequencies in rad/s.
    phase : (K,) phase offsets in rad.
    amp : (K,) per-sinusoid amplitudes.
    n_slots : number of time samples.
    dt : sample spacing in seconds.

    Returns
    -------
    (n_slots,) float64 array.
    """
    t = np.arange(n_slots) * dt
    return np.cos(np.outer(t, omega) + phase) @ amp


def piecewise_sample(edges, cum_mass, u):
    """Inverse-CDF draws from a piecewise-uniform distribution.

    ``edges`` are the G+2 nondecreasing breakpoints of one link,
    ``cum_mass`` the matching nondecreasing CDF values with
    cum_mass[0] = 0 and cum_mass[-1] = 1.  ``u`` holds uniform(0,1)
    variates.  Zero-width cells act as atoms: every u landing in their
    mass lump maps onto the shared breakpoint.
    """
    edges = np.asarray(edges, dtype=np.float64)
    cum_mass = np.asarray(cum_mass, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    # searchsorted('right') picks cell g with cum_mass[g-1] <= u < cum_mass[g]
    g = np.searchsorted(cum_mass, u, side="right")
    g = np.clip(g, 1, len(cum_mass) - 1)
    lo = edges[g - 1]
    hi = edges[g]
    m = cum_mass[g] - cum_mass[g - 1]
    width = hi - lo
    frac = np.zeros_like(u)
    nz = m > 0.0
    frac[nz] = (u[nz] - cum_mass[g - 1][nz]) / m[nz]
    return lo + frac * width


def posterior_mean_links(edges, cum_mass, u, obs, sqrt_rho, noise_var):
    """Importance-sampled posterior means for all links of one slot.

    Draws samples from each link's piecewise-uniform prior (via
    ``piecewise_sample`` on the matching row of ``u``), weights them by
    a Gaussian likelihood centered on sqrt_rho*h with variance
    noise_var/2, and returns the self-normalized weighted means.

    Weights are formed in log space with the max subtracted.  If the
    normalizer still underflows to zero the mass collapses onto the
    sample nearest obs/sqrt_rho and the event is counted.

    Returns
    -------
    means : (L,) posterior means.
    n_fallback : number of links that hit the underflow fallback.
    """
    edges = np.asarray(edges, dtype=np.float64)
    cum_mass = np.asarray(cum_mass, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    n_links = edges.shape[0]
    means = np.empty(n_links)
    n_fallback = 0
    for link in range(n_links):
        s = piecewise_sample(edges[link], cum_mass, u[link])
        resid = obs[link] - sqrt_rho * s
        loglik = -(resid * resid) / noise_var
        w = np.exp(loglik - loglik.max())
        total = w.sum()
        if total > 0.0 and np.isfinite(total):
            means[link] = (w @ s) / total
        else:
            means[link] = s[np.argmin(np.abs(s - obs[link] / sqrt_rho))]
            n_fallback += 1
    return means, n_fallback
