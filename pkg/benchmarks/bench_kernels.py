"""Timing comparison of the compiled and pure NumPy kernel backends.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from chanpred._kernels import pure

try:
    from chanpred import _core as compiled
except ImportError:
    compiled = None


def bench(fn, *args, repeat=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)

    n_sin, n_slots = 64, 10_000
    omega = rng.uniform(0.0, 200.0, n_sin)
    phase = rng.uniform(0.0, 2.0 * np.pi, n_sin)
    amp = rng.uniform(0.05, 0.2, n_sin)

    n_links, n_cells, n_samp = 8, 11, 2000
    edges = np.sort(rng.normal(0.0, 1.0, (n_links, n_cells)), axis=1)
    cum = np.linspace(0.0, 1.0, n_cells)
    u = rng.random((n_links, n_samp))
    obs = rng.normal(0.0, 1.0, n_links)

    cases = [
        ("sos_mix (64 sin x 10k slots)",
         lambda mod: bench(mod.sos_mix, omega, phase, amp, n_slots, 2e-3)),
        ("piecewise_sample (2000 draws)",
         lambda mod: bench(mod.piecewise_sample, edges[0], cum, u[0])),
        ("posterior_mean_links (8 x 2000)",
         lambda mod: bench(mod.posterior_mean_links, edges, cum, u, obs, 1e-6, 4e-14)),
    ]

    print(f"{'kernel':36s} {'pure':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, runner in cases:
        t_pure = runner(pure)
        if compiled is not None:
            t_comp = runner(compiled)
            print(f"{name:36s} {t_pure * 1e3:10.3f}ms {t_comp * 1e3:10.3f}ms "
                  f"{t_pure / t_comp:8.1f}x")
        else:
            print(f"{name:36s} {t_pure * 1e3:10.3f}ms {'n/a':>12s} {'':>9s}")
    if compiled is None:
        print("compiled backend unavailable; install with the extension built")


if __name__ == "__main__":
    main()
