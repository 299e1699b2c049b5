"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting
CHANPRED_PURE_PYTHON=1 forces the NumPy reference implementations.
Results agree between backends to floating-point roundoff, and runs are
bit-reproducible within a backend.
"""

import os

from . import pure

if os.environ.get("CHANPRED_PURE_PYTHON", "") == "1":
    backend = pure
else:
    try:
        from chanpred import _core as backend
    except ImportError:
        backend = pure

IMPL = backend.IMPL
sos_mix = backend.sos_mix
piecewise_sample = backend.piecewise_sample
posterior_mean_links = backend.posterior_mean_links

__all__ = ["IMPL", "sos_mix", "piecewise_sample", "posterior_mean_links", "pure", "backend"]
