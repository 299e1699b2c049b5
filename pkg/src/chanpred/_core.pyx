"""Compiled numerical kernels.

Mirrors chanpred._kernels.pure; see that module for the documented
contracts.  The filtering loop calls these once per slot, so the inner
loops are written out explicitly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, isfinite

cnp.import_array()

IMPL = "compiled"


def sos_mix(omega, phase, amp, Py_ssize_t n_slots, double dt):
    cdef double[::1] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(phase, dtype=np.float64)
    cdef double[::1] am = np.ascontiguousarray(amp, dtype=np.float64)
    cdef Py_ssize_t n_sin = om.shape[0]
    out_arr = np.empty(n_slots, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double t, acc
    for i in range(n_slots):
        t = i * dt
        acc = 0.0
        for k in range(n_sin):
            acc += am[k] * cos(om[k] * t + ph[k])
        out[i] = acc
    return out_arr


cdef inline double _inv_cdf(const double[::1] edges, const double[::1] cum,
                            Py_ssize_t n_edges, double u) nogil:
    cdef Py_ssize_t g = 1
    cdef double m
    while g < n_edges - 1 and cum[g] < u:
        g += 1
    m = cum[g] - cum[g - 1]
    if m <= 0.0:
        return edges[g]
    return edges[g - 1] + (u - cum[g - 1]) / m * (edges[g] - edges[g - 1])


def piecewise_sample(edges, cum_mass, u):
    cdef double[::1] e = np.ascontiguousarray(edges, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(cum_mass, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef Py_ssize_t n_edges = e.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _inv_cdf(e, c, n_edges, uu[i])
    return out_arr


def posterior_mean_links(edges, cum_mass, u, obs, double sqrt_rho,
                         double noise_var):
    cdef double[:, ::1] e = np.ascontiguousarray(edges, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(cum_mass, dtype=np.float64)
    cdef double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] r = np.ascontiguousarray(obs, dtype=np.float64)
    cdef Py_ssize_t n_links = e.shape[0]
    cdef Py_ssize_t n_edges = e.shape[1]
    cdef Py_ssize_t n_samp = uu.shape[1]
    means_arr = np.empty(n_links, dtype=np.float64)
    cdef double[::1] means = means_arr
    samp_arr = np.empty(n_samp, dtype=np.float64)
    loglik_arr = np.empty(n_samp, dtype=np.float64)
    cdef double[::1] samp = samp_arr
    cdef double[::1] loglik = loglik_arr
    cdef Py_ssize_t link, i, best
    cdef int n_fallback = 0
    cdef double resid, peak, w, total, acc, target, best_dist, dist
    for link in range(n_links):
        peak = -1e308
        for i in range(n_samp):
            samp[i] = _inv_cdf(e[link], c, n_edges, uu[link, i])
            resid = r[link] - sqrt_rho * samp[i]
            loglik[i] = -(resid * resid) / noise_var
            if loglik[i] > peak:
                peak = loglik[i]
        total = 0.0
        acc = 0.0
        for i in range(n_samp):
            w = exp(loglik[i] - peak)
            total += w
            acc += w * samp[i]
        if total > 0.0 and isfinite(total):
            means[link] = acc / total
        else:
            target = r[link] / sqrt_rho
            best = 0
            best_dist = fabs(samp[0] - target)
            for i in range(1, n_samp):
                dist = fabs(samp[i] - target)
                if dist < best_dist:
                    best_dist = dist
                    best = i
            means[link] = samp[best]
            n_fallback += 1
    return means_arr, n_fallback
