"""Discretization of (-Laplace)^m + A.D + q with ghost-layer Dirichlet structure.

The computational lattice is the N^3 cube grid extended by m-1 ghost planes
outside each face. Unknowns live on the strict interior of the cube (shell
depth >= 1); boundary data occupies the face shell and the ghost shells
(depth <= 0). The m-th power of the 7-point Laplacian is formed by exact
sparse composition, so identities that are algebra in the continuum stay
algebra on the grid.

The first-order term can be assembled in two forms:

* ``standard``:    sum_j A_j(x) (D_j u)(x)
* ``divergence``:  sum_j D_j(A_j u)(x)

with D = (1/i) grad, both by centered differences. The interior matrix of a
``divergence``-form assembly with conjugated coefficients is exactly the
conjugate transpose of the ``standard``-form interior matrix, which makes the
discrete Green identity in :mod:`polyharm.traces` exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssumptionAViolationError, InvalidParameterError, NumericError
from .fields import (
    ComplexScalarField,
    ComplexVectorField,
    Grid,
    divergence_fd,
    gradient_fd,
    laplacian_fd,
)

__all__ = [
    "GridIndexing",
    "indexing_for",
    "ExtendedField",
    "PerturbedOperator",
    "assemble",
    "gauge_transform",
    "singularity_check",
    "ConditionReport",
]

_SOLVE_TOL = 1e-10


@lru_cache(maxsize=None)
def _indexing(N: int, m: int):
    g = m - 1
    ext_N = N + 2 * g
    idx = np.arange(ext_N) - g
    d1 = np.minimum(idx, N - 1 - idx)
    depth = np.minimum.reduce(np.meshgrid(d1, d1, d1, indexing="ij"))
    interior = np.flatnonzero(depth.ravel() >= 1)
    data = np.flatnonzero(depth.ravel() <= 0)
    int_rank = np.full(ext_N**3, -1, dtype=np.int64)
    int_rank[interior] = np.arange(interior.size)
    data_rank = np.full(ext_N**3, -1, dtype=np.int64)
    data_rank[data] = np.arange(data.size)
    return ext_N, depth, interior, data, int_rank, data_rank


@dataclass(frozen=True)
class GridIndexing:
    """Index bookkeeping of the extended (ghost-augmented) lattice."""

    grid: Grid
    m: int

    @property
    def ghost(self) -> int:
        return self.m - 1

    @property
    def ext_N(self) -> int:
        return _indexing(self.grid.N, self.m)[0]

    @property
    def depth(self) -> np.ndarray:
        """Physical shell depth per extended node (ghost shells negative)."""
        return _indexing(self.grid.N, self.m)[1]

    @property
    def interior_flat(self) -> np.ndarray:
        return _indexing(self.grid.N, self.m)[2]

    @property
    def data_flat(self) -> np.ndarray:
        return _indexing(self.grid.N, self.m)[3]

    def ext_axis(self) -> np.ndarray:
        g = self.ghost
        return -self.grid.L + (np.arange(self.ext_N) - g) * self.grid.dx

    def ext_meshgrid(self):
        ax = self.ext_axis()
        return np.meshgrid(ax, ax, ax, indexing="ij")


def indexing_for(grid: Grid, m: int) -> GridIndexing:
    return GridIndexing(grid, m)


class ExtendedField:
    """Complex values on the extended lattice (cube nodes plus ghost shells)."""

    def __init__(self, indexing: GridIndexing, values: np.ndarray):
        self.indexing = indexing
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (indexing.ext_N,) * 3:
            raise InvalidParameterError(
                f"extended field: expected shape {(indexing.ext_N,) * 3}, got {values.shape}"
            )
        self.values = values

    @classmethod
    def zeros(cls, indexing: GridIndexing) -> "ExtendedField":
        return cls(indexing, np.zeros((indexing.ext_N,) * 3, dtype=np.complex128))

    @classmethod
    def from_function(cls, indexing: GridIndexing, fn) -> "ExtendedField":
        x, y, z = indexing.ext_meshgrid()
        return cls(indexing, np.asarray(fn(x, y, z), dtype=np.complex128))

    @classmethod
    def from_scalar_field(cls, field: ComplexScalarField, m: int) -> "ExtendedField":
        """Zero-pad a cube field into the ghost shells."""
        idxg = indexing_for(field.grid, m)
        out = cls.zeros(idxg)
        g = idxg.ghost
        sl = slice(g, g + field.grid.N) if g else slice(None)
        out.values[sl, sl, sl] = field.values
        return out

    def copy(self) -> "ExtendedField":
        return ExtendedField(self.indexing, self.values.copy())

    def interior_vector(self) -> np.ndarray:
        return self.values.ravel()[self.indexing.interior_flat]

    def data_vector(self) -> np.ndarray:
        return self.values.ravel()[self.indexing.data_flat]

    def shell(self, depth: int) -> np.ndarray:
        return self.values.ravel()[self.indexing.depth.ravel() == depth]

    def set_shell(self, depth: int, values) -> None:
        flat = self.values.ravel()
        flat[self.indexing.depth.ravel() == depth] = values
        self.values = flat.reshape(self.values.shape)

    def crop(self) -> ComplexScalarField:
        g = self.indexing.ghost
        sl = slice(g, g + self.indexing.grid.N) if g else slice(None)
        return ComplexScalarField(self.indexing.grid, self.values[sl, sl, sl].copy())


def _laplacian_1x(ext_N: int, dx: float) -> sp.csr_matrix:
    """One application of the negative 7-point Laplacian on the extended
    lattice; rows on the lattice hull are zero (never used by compositions)."""
    main = np.full(ext_N, 2.0)
    off = np.full(ext_N - 1, -1.0)
    T = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    T[0, :] = 0.0
    T[-1, :] = 0.0
    T = (T / dx**2).tocsr()
    Ident = sp.identity(ext_N, format="csr")
    return (
        sp.kron(sp.kron(T, Ident), Ident)
        + sp.kron(sp.kron(Ident, T), Ident)
        + sp.kron(sp.kron(Ident, Ident), T)
    ).tocsr()


@lru_cache(maxsize=8)
def _principal_part(N: int, m: int, dx: float) -> sp.csr_matrix:
    ext_N = _indexing(N, m)[0]
    lap = _laplacian_1x(ext_N, dx)
    P = lap
    for _ in range(m - 1):
        P = P @ lap
    return P.tocsr()


def _axis_strides(ext_N: int) -> tuple[int, int, int]:
    return ext_N * ext_N, ext_N, 1


def _pad_field(values: np.ndarray, g: int) -> np.ndarray:
    if g == 0:
        return values
    return np.pad(values, g)


def _first_order_matrix(indexing: GridIndexing, A: np.ndarray, form: str) -> sp.csr_matrix:
    """Rows at cube-interior nodes; columns over the full extended lattice."""
    ext_N = indexing.ext_N
    rows_flat = indexing.interior_flat
    n_int = rows_flat.size
    strides = _axis_strides(ext_N)
    A_ext = np.stack([_pad_field(A[j], indexing.ghost) for j in range(3)])
    coef = 1.0 / (2.0 * indexing.grid.dx * 1j)
    data, rows, cols = [], [], []
    ranks = np.arange(n_int)
    for j in range(3):
        for sign in (+1, -1):
            nb = rows_flat + sign * strides[j]
            if form == "standard":
                c = A_ext[j].ravel()[rows_flat]
            else:
                c = A_ext[j].ravel()[nb]
            data.append(sign * coef * c)
            rows.append(ranks)
            cols.append(nb)
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_int, ext_N**3),
        dtype=np.complex128,
    ).tocsr()


def _support_violation(values: np.ndarray, depth: np.ndarray, min_depth: int) -> bool:
    mask = depth < min_depth
    return bool(np.any(np.abs(values[..., mask]) > 0))


class PerturbedOperator:
    """Assembled discrete operator (-Laplace_h)^m + A.D_h + q on the cube.

    Holds the full stencil ``S`` (interior rows, extended columns), its
    interior block ``M`` and boundary coupling ``B``, and a lazily cached
    sparse LU factorization. Instances are immutable after assembly; the
    factorization cache is idempotent, so concurrent solves are safe.
    """

    def __init__(self, grid: Grid, m: int, A, q, first_order_form: str = "standard", validate_support: bool = True):
        if m < 1:
            raise InvalidParameterError("operator order m must be at least 1")
        if first_order_form not in ("standard", "divergence"):
            raise InvalidParameterError(f"unknown first-order form {first_order_form!r}")
        self.grid = grid
        self.m = int(m)
        self.indexing = indexing_for(grid, self.m)
        self.first_order_form = first_order_form
        self.A = A if A is not None else ComplexVectorField.zeros(grid)
        self.q = q if q is not None else ComplexScalarField.zeros(grid)
        if validate_support:
            depth = grid.depth()
            if _support_violation(self.A.values, depth, self.m + 1) or _support_violation(
                self.q.values, depth, self.m + 1
            ):
                raise InvalidParameterError(
                    f"A and q must vanish on the outermost {self.m + 1} node shells"
                )
        self._assemble()
        self._lu = None
        self._adjoint = None

    def _assemble(self) -> None:
        idxg = self.indexing
        S = _principal_part(self.grid.N, self.m, self.grid.dx)[idxg.interior_flat, :].tocsr()
        S = S.astype(np.complex128)
        if np.any(self.A.values):
            S = S + _first_order_matrix(idxg, self.A.values, self.first_order_form)
        if np.any(self.q.values):
            q_ext = _pad_field(self.q.values, idxg.ghost).ravel()[idxg.interior_flat]
            n_int = idxg.interior_flat.size
            S = S + sp.coo_matrix(
                (q_ext, (np.arange(n_int), idxg.interior_flat)),
                shape=S.shape,
                dtype=np.complex128,
            ).tocsr()
        self.S = S.tocsr()
        self.M = self.S[:, idxg.interior_flat].tocsc()
        self.B = self.S[:, idxg.data_flat].tocsr()

    # -- linear algebra -----------------------------------------------------

    def apply_full(self, u: ExtendedField) -> np.ndarray:
        """Full stencil application: operator values at cube-interior nodes."""
        return self.S @ u.values.ravel()

    def factorization(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.M)
            except RuntimeError as exc:
                raise AssumptionAViolationError(f"singular interior system: {exc}") from exc
        return self._lu

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Direct solve with iterative refinement to the package tolerance."""
        lu = self.factorization()
        x = lu.solve(rhs)
        scale = float(np.linalg.norm(rhs))
        if scale == 0.0:
            return np.zeros_like(rhs)
        for _ in range(3):
            r = rhs - self.M @ x
            if np.linalg.norm(r) <= _SOLVE_TOL * scale:
                return x
            x = x + lu.solve(r)
        rel = float(np.linalg.norm(rhs - self.M @ x) / scale)
        if rel > _SOLVE_TOL:
            raise AssumptionAViolationError(
                f"solve stalled at relative residual {rel:.2e}; the system is singular or nearly so"
            )
        return x

    def solve_dirichlet(self, data) -> ExtendedField:
        """Solve the Dirichlet problem with the given boundary layers.

        ``data`` supplies values on the shells of depth <= 0 (face layer plus
        ghost planes); anything it carries on interior nodes is ignored.
        """
        idxg = self.indexing
        vec = data.values.ravel()[idxg.data_flat] if hasattr(data, "values") else np.asarray(data)
        if vec.shape != (idxg.data_flat.size,):
            raise InvalidParameterError("boundary data does not match the grid layer layout")
        rhs = -(self.B @ vec)
        x = self.solve_interior(rhs)
        out = ExtendedField.zeros(idxg)
        flat = out.values.ravel()
        flat[idxg.data_flat] = vec
        flat[idxg.interior_flat] = x
        out.values = flat.reshape(out.values.shape)
        return out

    # -- adjoint ------------------------------------------------------------

    def adjoint(self) -> "PerturbedOperator":
        """Formal adjoint: conjugated coefficients with the first-order form
        swapped. Its interior matrix equals M^H exactly; applying it twice
        returns an operator identical to this one."""
        if self._adjoint is None:
            form = "divergence" if self.first_order_form == "standard" else "standard"
            self._adjoint = PerturbedOperator(
                self.grid,
                self.m,
                ComplexVectorField(self.grid, np.conj(self.A.values)),
                ComplexScalarField(self.grid, np.conj(self.q.values)),
                first_order_form=form,
                validate_support=False,
            )
            self._adjoint._adjoint = self
        return self._adjoint

    def continuum_adjoint(self) -> "PerturbedOperator":
        """Standard-form assembly of the continuum adjoint coefficients
        (conj A, (1/i) div conj A + conj q); agrees with :meth:`adjoint` rows
        to second order for smooth A. Cross-check only."""
        Abar = ComplexVectorField(self.grid, np.conj(self.A.values))
        div_term = divergence_fd(Abar).values / 1j
        qbar = np.conj(self.q.values) + div_term
        return PerturbedOperator(
            self.grid,
            self.m,
            Abar,
            ComplexScalarField(self.grid, qbar),
            first_order_form="standard",
            validate_support=False,
        )


def assemble(grid: Grid, m: int, A=None, q=None, first_order_form: str = "standard", validate_support: bool = True) -> PerturbedOperator:
    return PerturbedOperator(grid, m, A, q, first_order_form, validate_support)


def gauge_transform(A: ComplexVectorField, q: ComplexScalarField, psi: ComplexScalarField):
    """Gauge companion coefficients: (A + 2 grad psi, q + A.grad psi
    + (grad psi).(grad psi) - i Laplace psi), with centered differences.

    For complex psi the square is the unconjugated dot product, which is what
    the conjugation identity produces; composing with -psi restores (A, q)
    exactly at the discrete level.
    """
    grid = psi.grid
    margin = 4
    depth = grid.depth()
    if _support_violation(psi.values, depth, margin):
        raise InvalidParameterError(
            f"gauge function must vanish on the outermost {margin} node shells"
        )
    gpsi = gradient_fd(psi).values
    lpsi = laplacian_fd(psi).values
    A_new = ComplexVectorField(grid, A.values + 2.0 * gpsi)
    q_new = ComplexScalarField(
        grid,
        q.values
        + np.sum(A.values * gpsi, axis=0)
        + np.sum(gpsi * gpsi, axis=0)
        - 1j * lpsi,
    )
    return A_new, q_new


@dataclass(frozen=True)
class ConditionReport:
    sigma_min: float
    matrix_scale: float
    iterations: int
    near_singular: bool


def singularity_check(op: PerturbedOperator, max_iterations: int = 50, flag_ratio: float = 1e-8, seed: int = 0) -> ConditionReport:
    """Estimate the smallest singular value of the interior matrix by inverse
    power iteration on M^H M and flag near-singularity relative to the matrix
    scale (largest row 1-norm)."""
    try:
        lu = op.factorization()
    except AssumptionAViolationError:
        scale = float(np.max(np.abs(op.M).sum(axis=1)))
        return ConditionReport(0.0, scale, 0, True)
    rng = np.random.default_rng(seed)
    n = op.M.shape[0]
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    growth = 0.0
    it = 0
    for it in range(1, max_iterations + 1):
        y = lu.solve(lu.solve(x, trans="N"), trans="H")
        new_growth = float(np.linalg.norm(y))
        if new_growth == 0.0:
            raise NumericError("inverse iteration collapsed")
        x = y / new_growth
        if it > 3 and abs(new_growth - growth) <= 1e-6 * new_growth:
            growth = new_growth
            break
        growth = new_growth
    sigma_min = 1.0 / np.sqrt(growth)
    scale = float(np.max(np.abs(op.M).sum(axis=1)))
    return ConditionReport(float(sigma_min), scale, it, bool(sigma_min < flag_ratio * scale))
