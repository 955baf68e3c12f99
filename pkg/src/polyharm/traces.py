"""Discrete Cauchy data, the DtN map, and the boundary Green functional.

Cauchy data is represented as node layers: the Dirichlet part occupies the
shells of depth -(m-1)..0 (ghost planes plus the face layer), the Neumann
part the first m interior shells. With this representation the discrete
Green defect

    (L_h u, v) - (u, L_h^H v)   over cube-interior nodes, weight dx^3

is exact transposition algebra: it depends only on the 2m outer layers of u
and of v, and vanishes to roundoff when the outer layers of u are zero.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, UnsupportedError
from .fields import Grid
from .operator import ExtendedField, GridIndexing, PerturbedOperator, indexing_for

__all__ = [
    "DirichletLayers",
    "NeumannLayers",
    "LayerTrace",
    "DtNProbe",
    "apply_dtn",
    "trace_convert",
    "green_defect",
    "green_defect_scale",
    "dtn_difference_functional",
    "dump_trace_csv",
]


class _LayerValues:
    """Values supported on a contiguous band of node shells."""

    DEPTH_RANGE: tuple[int, int] = (0, 0)

    def __init__(self, indexing: GridIndexing, values: np.ndarray):
        self.indexing = indexing
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (indexing.ext_N,) * 3:
            raise InvalidParameterError("layer values must live on the extended lattice")
        lo, hi = self._depth_range()
        mask = (indexing.depth >= lo) & (indexing.depth <= hi)
        self.values = np.where(mask, values, 0.0)
        self._mask = mask

    def _depth_range(self) -> tuple[int, int]:
        raise NotImplementedError

    @classmethod
    def zeros(cls, grid: Grid, m: int):
        idxg = indexing_for(grid, m)
        return cls(idxg, np.zeros((idxg.ext_N,) * 3, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, m: int, fn):
        idxg = indexing_for(grid, m)
        x, y, z = idxg.ext_meshgrid()
        return cls(idxg, np.asarray(fn(x, y, z), dtype=np.complex128))

    @classmethod
    def from_extended(cls, field: ExtendedField):
        return cls(field.indexing, field.values)

    @property
    def m(self) -> int:
        return self.indexing.m

    def layer(self, depth: int) -> np.ndarray:
        lo, hi = self._depth_range()
        if not lo <= depth <= hi:
            raise InvalidParameterError(f"layer {depth} outside the stored band [{lo}, {hi}]")
        return self.values.ravel()[self.indexing.depth.ravel() == depth]

    def flat(self) -> np.ndarray:
        return self.values.ravel()[self._mask.ravel()]

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.flat()).tobytes()).hexdigest()

    def scaled(self, factor: complex):
        return type(self)(self.indexing, factor * self.values)

    def __add__(self, other):
        return type(self)(self.indexing, self.values + other.values)

    def __sub__(self, other):
        return type(self)(self.indexing, self.values - other.values)


class DirichletLayers(_LayerValues):
    """Dirichlet data: shells -(m-1)..0 (ghost planes and the face layer)."""

    def _depth_range(self):
        return (-(self.m - 1), 0)


class NeumannLayers(_LayerValues):
    """Neumann data: the first m interior shells (depth 1..m)."""

    def _depth_range(self):
        return (1, self.m)


@dataclass(frozen=True)
class LayerTrace:
    """Full discrete Cauchy data: 2m node layers."""

    dirichlet: DirichletLayers
    neumann: NeumannLayers


class DtNProbe:
    """Black-box Dirichlet-to-Neumann evaluations against one operator.

    Results are cached by a fingerprint of the boundary data; entries are
    reproducible by re-solving, so concurrent idempotent inserts are safe.
    """

    def __init__(self, op: PerturbedOperator, cache_size: int = 256):
        self.op = op
        self._cache: dict[str, NeumannLayers] = {}
        self._cache_size = cache_size

    def __call__(self, f: DirichletLayers) -> NeumannLayers:
        key = f.fingerprint()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        u = self.op.solve_dirichlet(_data_vector(self.op, f))
        out = NeumannLayers.from_extended(u)
        if len(self._cache) < self._cache_size:
            self._cache[key] = out
        return out


def _data_vector(op: PerturbedOperator, f: DirichletLayers) -> np.ndarray:
    if f.indexing.grid != op.grid or f.m != op.m:
        raise InvalidParameterError("boundary data grid/order does not match the operator")
    return f.values.ravel()[op.indexing.data_flat]


def apply_dtn(probe: DtNProbe, f: DirichletLayers) -> NeumannLayers:
    """The discrete DtN map: solve the Dirichlet problem, keep layers 1..m."""
    return probe(f)


# ---------------------------------------------------------------------------
# layer values <-> normal-derivative traces (per face)

_FACES = [(axis, side) for axis in range(3) for side in (0, 1)]


def _taylor_matrix(m: int, dx: float) -> np.ndarray:
    layers = np.arange(-(m - 1), m + 1)  # depth indices of the 2m layers
    tau = -layers * dx  # signed outward distance
    powers = np.arange(2 * m)
    V = tau[:, None] ** powers[None, :]
    from math import factorial

    V /= np.array([factorial(p) for p in powers])[None, :]
    return V


def _face_line_values(values_ext: np.ndarray, indexing: GridIndexing, axis: int, side: int) -> np.ndarray:
    """Stack of the 2m layers along the outward normal of one face, shaped
    (2m, N, N) over the face's in-plane indices."""
    N, g, m = indexing.grid.N, indexing.ghost, indexing.m
    layers = np.arange(-(m - 1), m + 1)
    out = []
    for ell in layers:
        phys = ell if side == 0 else N - 1 - ell
        sl = [slice(g, g + N)] * 3
        sl[axis] = g + phys
        out.append(values_ext[tuple(sl)])
    return np.stack(out)


def trace_convert(trace, direction: str, grid: Grid | None = None, m: int | None = None):
    """Convert between layer values and normal-derivative traces per face.

    ``direction="to_derivatives"`` takes a :class:`LayerTrace` and returns
    ``{face_id: array(2m, N, N)}`` with rows (u, d_nu u, ..., d_nu^{2m-1} u).
    ``direction="to_layers"`` inverts it. The square Taylor system is solved
    exactly, so the round trip is the identity to roundoff. Supported for
    m <= 3.
    """
    if direction == "to_derivatives":
        indexing = trace.dirichlet.indexing
        if indexing.m > 3:
            raise UnsupportedError("trace conversion implemented for m <= 3")
        V = _taylor_matrix(indexing.m, indexing.grid.dx)
        Vinv = np.linalg.inv(V)
        combined = trace.dirichlet.values + trace.neumann.values
        out = {}
        for fid, (axis, side) in enumerate(_FACES):
            lines = _face_line_values(combined, indexing, axis, side)
            out[fid] = np.einsum("pl,lij->pij", Vinv, lines)
        return out
    if direction == "to_layers":
        if grid is None or m is None:
            raise InvalidParameterError("to_layers needs the grid and operator order")
        if m > 3:
            raise UnsupportedError("trace conversion implemented for m <= 3")
        indexing = indexing_for(grid, m)
        V = _taylor_matrix(m, grid.dx)
        N, g = grid.N, indexing.ghost
        ext = np.zeros((indexing.ext_N,) * 3, dtype=np.complex128)
        layers = np.arange(-(m - 1), m + 1)
        for fid, (axis, side) in enumerate(_FACES):
            lines = np.einsum("lp,pij->lij", V, np.asarray(trace[fid], dtype=np.complex128))
            for ell, plane in zip(layers, lines):
                phys = ell if side == 0 else N - 1 - ell
                sl = [slice(g, g + N)] * 3
                sl[axis] = g + phys
                ext[tuple(sl)] = plane
        return (
            DirichletLayers(indexing, ext),
            NeumannLayers(indexing, ext),
        )
    raise InvalidParameterError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# Green functionals


def green_defect(op: PerturbedOperator, u: ExtendedField, v: ExtendedField) -> complex:
    """dx^3 * [ (L_h u, v)_interior - (u, L_h^H v)_interior ].

    By matrix transposition this depends only on the 2m outer layers of u and
    of v; it vanishes to roundoff whenever those layers of u are all zero.
    """
    su = op.apply_full(u)
    tv = op.adjoint().apply_full(v)
    vi = v.interior_vector()
    ui = u.interior_vector()
    return complex(op.grid.dx**3 * (np.vdot(vi, su) - np.vdot(tv, ui)))


def green_defect_scale(op: PerturbedOperator, u: ExtendedField, v: ExtendedField) -> float:
    """Natural magnitude of the two Green terms, for relative defect checks."""
    su = op.apply_full(u)
    tv = op.adjoint().apply_full(v)
    return float(
        op.grid.dx**3
        * (
            np.linalg.norm(su) * np.linalg.norm(v.interior_vector())
            + np.linalg.norm(u.interior_vector()) * np.linalg.norm(tv)
        )
    )


def dtn_difference_functional(
    probe1: DtNProbe,
    probe2: DtNProbe,
    f: DirichletLayers,
    v: ExtendedField,
) -> complex:
    """Boundary-only evaluation of the interior pairing between the operator
    difference and an adjoint solution.

    Equals dx^3 * sum over interior nodes of
    ((A2 - A1).D u2 + (q2 - q1) u2) conj(v) up to solver tolerance, where u2
    solves operator 2 with data f, yet uses operator 1's solution only through
    its Neumann layers. Requires v to solve adjoint(op1) v = 0 discretely.
    """
    n1 = probe1(f)
    n2 = probe2(f)
    diff = ExtendedField(probe1.op.indexing, (n1 - n2).values)
    return green_defect(probe1.op, diff, v)


def dump_trace_csv(trace: LayerTrace, path) -> None:
    """CSV dump: face id, layer index, in-plane i, j, re, im."""
    indexing = trace.dirichlet.indexing
    m = indexing.m
    combined = trace.dirichlet.values + trace.neumann.values
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["face", "layer", "i", "j", "re", "im"])
        for fid, (axis, side) in enumerate(_FACES):
            lines = _face_line_values(combined, indexing, axis, side)
            for ell, plane in zip(range(-(m - 1), m + 1), lines):
                for i in range(plane.shape[0]):
                    for j in range(plane.shape[1]):
                        writer.writerow([fid, ell, i, j, f"{plane[i, j].real:.17g}", f"{plane[i, j].imag:.17g}"])
