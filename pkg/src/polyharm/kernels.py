"""Backend dispatch for the hot quadrature kernels.

The compiled Cython extension is preferred; the vectorized NumPy fallback is
selected when it is missing or when ``POLYHARM_KERNELS=numpy`` is set. Both
backends implement identical contracts and agree to roundoff (covered by
tests and by ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("POLYHARM_KERNELS", "").lower() in ("numpy", "py", "python"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND

dbar_cauchy_transform = _impl.dbar_cauchy_transform
radial_cutoff = _impl.radial_cutoff


def gauss_panels(a: float, b: float, n_panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
