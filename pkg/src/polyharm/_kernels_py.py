"""Pure NumPy fallback for the hot quadrature kernels.

Same contracts as the compiled module ``polyharm._kernels``; selected at
import time by :mod:`polyharm.kernels` when the extension is unavailable or
disabled.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.maximum(1.0 - u, 1e-300)), 0.0)
    return a / (a + b)


def radial_cutoff(r: np.ndarray, r1: float, r2: float) -> np.ndarray:
    """1 for r <= r1, 0 for r >= r2, C-infinity monotone in between."""
    return _smoothstep((r2 - np.asarray(r, dtype=float)) / (r2 - r1))


def dbar_cauchy_transform(
    points: np.ndarray,
    mu1: np.ndarray,
    mu2: np.ndarray,
    r1: float,
    r2: float,
    rho_nodes: np.ndarray,
    rho_weights: np.ndarray,
    n_theta: int,
    chunk: int = 128,
) -> np.ndarray:
    """Polar-desingularized Cauchy transform of the radial cutoff over the
    (mu1, mu2) plane:

        a(x) = (1/2pi) int int chi(|x - y1 mu1 - y2 mu2|) / (y1 + i y2) dy1 dy2
             = (1/2pi) int_0^inf int_0^2pi exp(-i theta)
                       chi(|x - rho(cos mu1 + sin mu2)|) dtheta drho
    """
    points = np.ascontiguousarray(points, dtype=float)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.cos(theta)[:, None] * mu1[None, :] + np.sin(theta)[:, None] * mu2[None, :]
    offsets = rho_nodes[:, None, None] * dirs[None, :, :]  # (R, T, 3)
    offsets = offsets.reshape(-1, 3)
    w = (rho_weights[:, None] * np.exp(-1j * theta)[None, :] / n_theta).reshape(-1)
    out = np.empty(points.shape[0], dtype=np.complex128)
    for lo in range(0, points.shape[0], chunk):
        pts = points[lo : lo + chunk]
        diff = pts[:, None, :] - offsets[None, :, :]
        rr = np.sqrt(np.sum(diff * diff, axis=-1))
        out[lo : lo + chunk] = radial_cutoff(rr, r1, r2) @ w
    return out
