"""Uniform cube grids and complex-valued sampled fields.

The computational domain is the cube [-L, L]^3 sampled on N nodes per axis.
Smooth compactly supported bump profiles (with analytic first and second
derivatives) serve as coefficient presets; all finite-difference helpers
here are second-order centered stencils with one-sided fallback at faces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "Grid",
    "make_grid",
    "ComplexScalarField",
    "ComplexVectorField",
    "DirectionPair",
    "bump_scalar",
    "bump_gradient",
    "bump_laplacian",
    "bump_hessian",
    "interior_cutoff",
    "gradient_fd",
    "divergence_fd",
    "laplacian_fd",
    "curl_fd",
    "directional_derivative_fd",
    "dump_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-L, L]^3 with N nodes per axis."""

    N: int
    L: float = 1.0

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.N - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.N)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ax = self.axis()
        return np.meshgrid(ax, ax, ax, indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an (N^3, 3) array, x-index fastest."""
        x, y, z = self.meshgrid()
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)

    def depth(self) -> np.ndarray:
        """Per-node shell index: 0 on faces, increasing inward."""
        idx = np.arange(self.N)
        d1 = np.minimum(idx, self.N - 1 - idx)
        return np.minimum.reduce(np.meshgrid(d1, d1, d1, indexing="ij"))


def make_grid(N: int, L: float = 1.0) -> Grid:
    if N < 8:
        raise InvalidParameterError(f"need at least 8 nodes per axis, got {N}")
    if L <= 0:
        raise InvalidParameterError(f"half-width must be positive, got {L}")
    return Grid(int(N), float(L))


def _check_values(values: np.ndarray, shape: tuple, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    if values.shape != shape:
        raise InvalidParameterError(f"{what}: expected shape {shape}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidParameterError(f"{what}: non-finite entries")
    return values


class ComplexScalarField:
    """A complex value per grid node, stored as an (N, N, N) array."""

    def __init__(self, grid: Grid, values: np.ndarray):
        self.grid = grid
        self.values = _check_values(values, (grid.N,) * 3, "scalar field")

    @classmethod
    def zeros(cls, grid: Grid) -> "ComplexScalarField":
        return cls(grid, np.zeros((grid.N,) * 3, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ComplexScalarField":
        x, y, z = grid.meshgrid()
        return cls(grid, np.asarray(fn(x, y, z), dtype=np.complex128))

    def copy(self) -> "ComplexScalarField":
        return ComplexScalarField(self.grid, self.values.copy())

    def l2(self) -> float:
        """Trapezoidal L^2 norm over the cube."""
        w = _trapez_weights(self.grid)
        return float(np.sqrt(np.sum(w * np.abs(self.values) ** 2) * self.grid.dx**3))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


class ComplexVectorField:
    """A complex 3-vector per grid node, stored as a (3, N, N, N) array."""

    def __init__(self, grid: Grid, values: np.ndarray):
        self.grid = grid
        self.values = _check_values(values, (3,) + (grid.N,) * 3, "vector field")

    @classmethod
    def zeros(cls, grid: Grid) -> "ComplexVectorField":
        return cls(grid, np.zeros((3,) + (grid.N,) * 3, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ComplexVectorField":
        x, y, z = grid.meshgrid()
        return cls(grid, np.stack(fn(x, y, z)).astype(np.complex128))

    def copy(self) -> "ComplexVectorField":
        return ComplexVectorField(self.grid, self.values.copy())

    def l2(self) -> float:
        w = _trapez_weights(self.grid)
        return float(np.sqrt(np.sum(w * np.sum(np.abs(self.values) ** 2, axis=0)) * self.grid.dx**3))

    def sup(self) -> float:
        return float(np.max(np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))))


def _trapez_weights(grid: Grid) -> np.ndarray:
    w1 = np.ones(grid.N)
    w1[0] = w1[-1] = 0.5
    return w1[:, None, None] * w1[None, :, None] * w1[None, None, :]


@dataclass(frozen=True)
class DirectionPair:
    """Orthonormal real pair (mu1, mu2); the complex transport direction is mu1 + i mu2."""

    mu1: np.ndarray
    mu2: np.ndarray

    def __post_init__(self):
        m1 = np.asarray(self.mu1, dtype=float)
        m2 = np.asarray(self.mu2, dtype=float)
        object.__setattr__(self, "mu1", m1)
        object.__setattr__(self, "mu2", m2)
        if m1.shape != (3,) or m2.shape != (3,):
            raise InvalidParameterError("direction pair entries must be 3-vectors")
        if abs(np.linalg.norm(m1) - 1.0) > 1e-12 or abs(np.linalg.norm(m2) - 1.0) > 1e-12:
            raise InvalidParameterError("direction pair entries must be unit vectors")
        if abs(float(m1 @ m2)) > 1e-12:
            raise InvalidParameterError("direction pair entries must be orthogonal")

    def flipped(self) -> "DirectionPair":
        """The pair (mu1, -mu2); probes the conjugate transport direction."""
        return DirectionPair(self.mu1, -self.mu2)


# ---------------------------------------------------------------------------
# bump presets: B(x) = scale * exp(1 - 1/(1 - r^2)), r = |x - center| / rho0


def _bump_profile(points: np.ndarray, center: np.ndarray, rho0: float):
    """Return (B, g, t) with t = r^2/rho0^2 and g = 1/(1-t) on the support."""
    diff = points - center
    t = np.sum(diff * diff, axis=-1) / rho0**2
    inside = t < 1.0
    g = np.zeros_like(t)
    g[inside] = 1.0 / (1.0 - t[inside])
    B = np.zeros_like(t)
    B[inside] = np.exp(1.0 - g[inside])
    return B, g, t, inside, diff


def _check_bump_support(grid: Grid, center, rho0: float) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    if rho0 <= 0:
        raise InvalidParameterError("bump radius must be positive")
    if np.max(np.abs(center)) + rho0 >= grid.L:
        raise InvalidParameterError(
            f"bump support |x - c| < {rho0} reaches the cube boundary (|c|_inf = {np.max(np.abs(center)):g}, L = {grid.L:g})"
        )
    return center


def bump_scalar(grid: Grid, center, rho0: float, scale: complex = 1.0) -> ComplexScalarField:
    """Smooth compactly supported bump, identically zero outside |x - center| < rho0."""
    center = _check_bump_support(grid, center, rho0)
    B, _, _, _, _ = _bump_profile(grid.points(), center, rho0)
    return ComplexScalarField(grid, (scale * B).reshape((grid.N,) * 3))


def bump_values(points: np.ndarray, center, rho0: float, scale: complex = 1.0) -> np.ndarray:
    """Bump evaluated at arbitrary points (no support check)."""
    B, _, _, _, _ = _bump_profile(np.asarray(points, dtype=float), np.asarray(center, dtype=float), rho0)
    return scale * B


def bump_gradient(grid: Grid, center, rho0: float, scale: complex = 1.0) -> ComplexVectorField:
    """Analytic gradient of ``bump_scalar``: dB_j = -2 g^2 B (x-c)_j / rho0^2."""
    center = _check_bump_support(grid, center, rho0)
    B, g, _, _, diff = _bump_profile(grid.points(), center, rho0)
    grad = (-2.0 / rho0**2) * (g**2 * B)[:, None] * diff
    return ComplexVectorField(grid, (scale * grad.T).reshape((3,) + (grid.N,) * 3))


def bump_laplacian(grid: Grid, center, rho0: float, scale: complex = 1.0) -> ComplexScalarField:
    """Analytic Laplacian of ``bump_scalar``."""
    center = _check_bump_support(grid, center, rho0)
    B, g, t, _, _ = _bump_profile(grid.points(), center, rho0)
    lap = (4.0 * t * (g**4 - 2.0 * g**3) - 6.0 * g**2) * B / rho0**2
    return ComplexScalarField(grid, (scale * lap).reshape((grid.N,) * 3))


def bump_hessian(grid: Grid, center, rho0: float, scale: complex = 1.0) -> np.ndarray:
    """Analytic Hessian of ``bump_scalar`` as a (3, 3, N, N, N) array."""
    center = _check_bump_support(grid, center, rho0)
    B, g, _, _, diff = _bump_profile(grid.points(), center, rho0)
    shape = (grid.N,) * 3
    coeff = ((g**4 - 2.0 * g**3) * B * 4.0 / rho0**4)
    hess = coeff[:, None, None] * diff[:, :, None] * diff[:, None, :]
    hess -= (2.0 / rho0**2) * (g**2 * B)[:, None, None] * np.eye(3)
    return (scale * np.moveaxis(hess, 0, -1)).reshape((3, 3) + shape)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.maximum(1.0 - u, 1e-300)), 0.0)
    return a / (a + b)


def interior_cutoff(grid: Grid, margin_layers: int = 3, plateau: float = 0.7) -> ComplexScalarField:
    """Smooth plateau cutoff: 1 on the inner box, exactly 0 on the outermost
    ``margin_layers`` shells. Used before measuring semiclassical norms of
    fields that are only supported up to boundary layers."""
    b = grid.L - margin_layers * grid.dx
    if b <= 0:
        raise InvalidParameterError("cutoff margin swallows the whole cube")
    a = plateau * b
    ax = np.abs(grid.axis())
    prof = _smoothstep((b - ax) / (b - a))
    prof[ax >= b] = 0.0
    vals = prof[:, None, None] * prof[None, :, None] * prof[None, None, :]
    return ComplexScalarField(grid, vals.astype(np.complex128))


# ---------------------------------------------------------------------------
# centered finite differences (one-sided second-order at faces)


def _diff_axis(values: np.ndarray, axis: int, dx: float) -> np.ndarray:
    out = np.gradient(values, dx, axis=axis, edge_order=2)
    return out


def gradient_fd(field: ComplexScalarField) -> ComplexVectorField:
    g = [_diff_axis(field.values, ax, field.grid.dx) for ax in range(3)]
    return ComplexVectorField(field.grid, np.stack(g))


def divergence_fd(field: ComplexVectorField) -> ComplexScalarField:
    d = sum(_diff_axis(field.values[ax], ax, field.grid.dx) for ax in range(3))
    return ComplexScalarField(field.grid, d)


def laplacian_fd(field: ComplexScalarField) -> ComplexScalarField:
    """7-point discrete Laplacian; one-sided (copied) at faces, second order inside."""
    v = field.values
    dx2 = field.grid.dx**2
    out = np.zeros_like(v)
    for ax in range(3):
        sl_c = [slice(1, -1) if a == ax else slice(None) for a in range(3)]
        sl_m = [slice(0, -2) if a == ax else slice(None) for a in range(3)]
        sl_p = [slice(2, None) if a == ax else slice(None) for a in range(3)]
        out[tuple(sl_c)] += (v[tuple(sl_p)] - 2 * v[tuple(sl_c)] + v[tuple(sl_m)]) / dx2
    return ComplexScalarField(field.grid, out)


def curl_fd(field: ComplexVectorField) -> ComplexVectorField:
    """Centered curl (d_j A_k - d_k A_j); components ordered (curl_1, curl_2, curl_3)."""
    v = field.values
    dx = field.grid.dx
    c1 = _diff_axis(v[2], 1, dx) - _diff_axis(v[1], 2, dx)
    c2 = _diff_axis(v[0], 2, dx) - _diff_axis(v[2], 0, dx)
    c3 = _diff_axis(v[1], 0, dx) - _diff_axis(v[0], 1, dx)
    return ComplexVectorField(field.grid, np.stack([c1, c2, c3]))


def directional_derivative_fd(field: ComplexScalarField, direction: np.ndarray) -> ComplexScalarField:
    """zeta . grad for a (possibly complex) constant direction."""
    direction = np.asarray(direction, dtype=np.complex128)
    g = sum(direction[ax] * _diff_axis(field.values, ax, field.grid.dx) for ax in range(3))
    return ComplexScalarField(field.grid, g)


# ---------------------------------------------------------------------------
# binary field dumps: little-endian (re, im) float64 pairs, x-index fastest


def dump_field(field, path) -> None:
    path = Path(path)
    if isinstance(field, ComplexScalarField):
        comps, data = 1, field.values[None]
    elif isinstance(field, ComplexVectorField):
        comps, data = 3, field.values
    else:
        raise InvalidParameterError(f"cannot dump {type(field).__name__}")
    blocks = [np.ascontiguousarray(c.transpose(2, 1, 0)).astype("<c16") for c in data]
    path.write_bytes(b"".join(b.tobytes() for b in blocks))
    header = {
        "N": field.grid.N,
        "L": field.grid.L,
        "components": comps,
        "dtype": "little-endian float64 (re, im) pairs",
        "order": "x-fastest",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, sort_keys=True, indent=1))


def load_field(path):
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = make_grid(header["N"], header["L"])
    raw = np.frombuffer(path.read_bytes(), dtype="<c16")
    comps = header["components"]
    data = raw.reshape((comps, grid.N, grid.N, grid.N)).transpose(0, 3, 2, 1)
    if comps == 1:
        return ComplexScalarField(grid, data[0])
    return ComplexVectorField(grid, data)
