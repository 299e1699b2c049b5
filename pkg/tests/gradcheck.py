"""Central finite-difference gradient verification helper.

Shared by the unit and acceptance suites.  Batches are redrawn until
every (target, predicted quantile) pair sits clear of the pinball kink,
so the two-sided difference never straddles the nondifferentiable
point.
"""

import numpy as np

from chanpred import QuantileLevels, backward, forward_batch, init_params, total_loss


def fd_max_relative_error(arch: str, seed: int, eps: float = 1e-5,
                          hidden=(8, 7), n_samples: int = 5, dim: int = 4,
                          history_len: int = 3, kink_margin: float = 1e-3) -> float:
    levels = QuantileLevels(np.array([0.2, 0.5, 0.8]))
    for attempt in range(200):
        rng = np.random.default_rng([seed, attempt])
        params = init_params(arch, history_len, dim, levels.g, hidden,
                             seed=int(rng.integers(2**31)))
        x = rng.standard_normal((n_samples, history_len * dim))
        y = rng.standard_normal((n_samples, dim))
        q = forward_batch(params, x)
        if np.min(np.abs(y[:, :, None] - q)) > kink_margin:
            break
    else:
        raise AssertionError("no kink-free batch found")

    _, grads = backward(params, x, y, levels)
    worst = 0.0
    for name, grad in grads.items():
        flat = params.arrays[name].ravel()
        gflat = np.asarray(grad).ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = total_loss(params, x, y, levels)
            flat[idx] = orig - eps
            down = total_loss(params, x, y, levels)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(numeric) + abs(gflat[idx]), 1e-6)
            worst = max(worst, abs(numeric - gflat[idx]) / denom)
    return worst
