"""Green hyperbolic operators on lattice spacetimes.

Every discrete operator is a sparse matrix acting on flattened sections of
shape ``(n_t, n_x, fiber_dim)`` in time-major order. Retarded and advanced
Green operators are exact discrete inverses obtained by marching the
operator level by level: with half time-bandwidth ``s`` the equation of row
level ``n`` is solved for level ``n + s`` (retarded) or ``n - s`` (advanced).
Continuum fidelity is certified separately by convergence studies.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .spacetime import (CauchySlice, SpacetimeLattice, SupportMask, causal_cone,
                        classify_support, volume_weights)

__all__ = [
    "Section",
    "NormallyHyperbolicForm",
    "Factorization",
    "GradientSplit",
    "OperatorHandle",
    "LevelMarcher",
    "Observable",
    "observables_batch",
    "SupportClassError",
    "CFLError",
    "stencil_matrix",
    "pair",
    "solve_cauchy",
    "green_apply",
    "green_apply_batch",
    "causal_propagator",
    "split_solve",
    "partition",
    "symbol_probe",
    "adjoint_residual",
    "observable_equal",
    "time_slice_project",
    "interior_residual",
    "write_section_csv",
    "read_section_csv",
]

SUPPORT_RTOL = 1e-14
EQUALITY_RTOL = 1e-8


class SupportClassError(ValueError):
    """A source violates the support class a Green operator requires."""


class CFLError(ValueError):
    """The time step exceeds the local light-crossing time of a cell."""


@dataclass(frozen=True, eq=False)
class Section:
    """Fiber-valued grid function on a lattice.

    Attributes
    ----------
    lattice : SpacetimeLattice
    values : ndarray, shape (n_t, n_x, fiber_dim)
    kind : {"real", "complex"}
    dual : bool
        Marks cospinor (row) sections for the dual pairing.
    """

    lattice: SpacetimeLattice
    values: np.ndarray
    kind: str = "real"
    dual: bool = False

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[..., None]
        if v.shape[:2] != self.lattice.shape:
            raise ValueError(f"values shape {v.shape} does not match lattice {self.lattice.shape}")
        if v.shape[2] not in (1, 2, 4):
            raise ValueError("fiber dimension must be 1, 2 or 4")
        if self.kind == "real":
            if np.iscomplexobj(v):
                if np.any(v.imag != 0):
                    raise ValueError("real section with non-zero imaginary part")
                v = v.real
            v = v.astype(float)
        elif self.kind == "complex":
            v = v.astype(complex)
        else:
            raise ValueError("kind must be 'real' or 'complex'")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, lat: SpacetimeLattice, fiber_dim: int = 1, kind: str = "real",
              dual: bool = False) -> "Section":
        dtype = float if kind == "real" else complex
        return cls(lat, np.zeros(lat.shape + (fiber_dim,), dtype=dtype), kind, dual)

    def like(self, values) -> "Section":
        """New section with the same lattice, kind and dual flag."""
        v = np.asarray(values).reshape(self.values.shape)
        kind = self.kind
        if kind == "real" and np.iscomplexobj(v) and np.any(v.imag != 0):
            kind = "complex"
        return type(self)._rebuild(self, v, kind)

    @staticmethod
    def _rebuild(proto, values, kind):
        return Section(proto.lattice, values, kind, proto.dual)

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[2]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def point_mask(self) -> np.ndarray:
        """Lattice points where the section is above ``1e-14 max|values|``."""
        amp = np.max(np.abs(self.values), axis=2)
        peak = amp.max()
        if peak == 0:
            return np.zeros(self.lattice.shape, dtype=bool)
        return amp > SUPPORT_RTOL * peak

    @property
    def support(self) -> SupportMask:
        m = self.point_mask
        return SupportMask(m, classify_support(m))

    def __add__(self, other: "Section") -> "Section":
        return self.like(self.values + other.values)

    def __sub__(self, other: "Section") -> "Section":
        return self.like(self.values - other.values)

    def __neg__(self) -> "Section":
        return self.like(-self.values)

    def __mul__(self, c) -> "Section":
        return self.like(self.values * c)

    __rmul__ = __mul__

    def slice_values(self, t_index: int) -> np.ndarray:
        return self.values[t_index]


def stencil_matrix(shape: tuple[int, int], fiber_dim: int,
                   terms: Iterable[tuple[int, int, np.ndarray]]) -> sps.csr_matrix:
    """Assemble a sparse operator from offset stencils.

    Parameters
    ----------
    shape : (n_t, n_x)
    fiber_dim : int
    terms : iterable of (dn, dj, coeff)
        ``coeff`` broadcasts to ``(n_t, n_x, d, d)``; entry ``[n, j, a, b]``
        multiplies component ``b`` at ``(n + dn, j + dj)`` in the equation for
        component ``a`` at ``(n, j)``. Offsets leaving the time range are
        dropped; x is periodic. Exact zero coefficients are not stored.

    Returns
    -------
    scipy.sparse.csr_matrix
    """
    n_t, n_x = shape
    d = fiber_dim
    nn, jj = np.meshgrid(np.arange(n_t), np.arange(n_x), indexing="ij")
    rows, cols, vals = [], [], []
    for dn, dj, coeff in terms:
        c = np.broadcast_to(np.asarray(coeff), (n_t, n_x, d, d))
        valid = (nn + dn >= 0) & (nn + dn < n_t)
        base_r = (nn * n_x + jj) * d
        base_c = ((nn + dn) * n_x + (jj + dj) % n_x) * d
        for a in range(d):
            for b in range(d):
                cab = c[..., a, b]
                keep = valid & (cab != 0)
                if not keep.any():
                    continue
                rows.append((base_r + a)[keep])
                cols.append((base_c + b)[keep])
                vals.append(cab[keep])
    size = n_t * n_x * d
    if not rows:
        return sps.csr_matrix((size, size))
    data = np.concatenate(vals)
    mat = sps.coo_matrix((data, (np.concatenate(rows), np.concatenate(cols))),
                         shape=(size, size)).tocsr()
    mat.eliminate_zeros()
    return mat


@dataclass(frozen=True, eq=False)
class NormallyHyperbolicForm:
    """Coefficients of ``g^{mn} d_m d_n + B^t d_t + B^x d_x + C``.

    The principal part is read off the lattice metric: ``g^tt = 1/beta`` and
    ``g^xx = -1/h``.

    Attributes
    ----------
    lattice : SpacetimeLattice
    fiber_dim : int
    first_order_t, first_order_x, zeroth_order : ndarray, shape (n_t, n_x, d, d)
    """

    lattice: SpacetimeLattice
    fiber_dim: int
    first_order_t: np.ndarray
    first_order_x: np.ndarray
    zeroth_order: np.ndarray

    def __post_init__(self):
        d = self.fiber_dim
        shape = self.lattice.shape + (d, d)
        for name in ("first_order_t", "first_order_x", "zeroth_order"):
            arr = np.broadcast_to(np.asarray(getattr(self, name)), shape)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @property
    def inverse_metric(self) -> tuple[np.ndarray, np.ndarray]:
        return 1.0 / self.lattice.lapse, -1.0 / self.lattice.spatial_metric

    def discretize(self) -> sps.csr_matrix:
        """Collocated second-order centered discretization."""
        lat, d = self.lattice, self.fiber_dim
        gtt, gxx = self.inverse_metric
        eye = np.eye(d)
        dt2, dx2 = lat.delta_t ** 2, lat.delta_x ** 2
        ptt = gtt[..., None, None] * eye / dt2
        pxx = gxx[..., None, None] * eye / dx2
        bt = self.first_order_t / (2 * lat.delta_t)
        bx = self.first_order_x / (2 * lat.delta_x)
        terms = [
            (1, 0, ptt + bt), (-1, 0, ptt - bt),
            (0, 1, pxx + bx), (0, -1, pxx - bx),
            (0, 0, -2 * ptt - 2 * pxx + self.zeroth_order),
        ]
        return stencil_matrix(lat.shape, d, terms)

    @cached_property
    def matrix(self) -> sps.csr_matrix:
        return self.discretize()

    def apply(self, section: Section) -> Section:
        return section.like(self.matrix @ section.flat)


@dataclass(frozen=True, eq=False)
class GradientSplit:
    """Green operator term ``coefficient * gradient @ scalar^{-1} @ divergence``.

    Used when ``left = 1 + coefficient * gradient @ divergence`` and
    ``gradient @ scalar = companion @ gradient``. Then
    ``left @ companion^{-1} = companion^{-1} + coefficient * gradient @
    scalar^{-1} @ divergence`` and neither large intermediate ``left f`` nor
    ``left`` applied to a solution is ever formed.
    """

    gradient: sps.csr_matrix
    divergence: sps.csr_matrix
    scalar: sps.csr_matrix
    coefficient: float
    level_size: int
    n_t: int

    @cached_property
    def marcher(self) -> "LevelMarcher":
        return LevelMarcher(self.scalar, self.n_t, self.level_size)


@dataclass(frozen=True, eq=False)
class Factorization:
    """Green operators of the form ``left @ (companion)^{-1}``.

    When ``left`` commutes with ``companion`` the same operator can be
    evaluated as ``companion^{-1} @ left`` (``apply_left_first=True``).
    With ``split`` set the operator is evaluated through
    :class:`GradientSplit` instead, which is the best conditioned route.
    """

    left: sps.csr_matrix
    companion: sps.csr_matrix
    apply_left_first: bool = False
    split: GradientSplit | None = None


def half_bandwidth(matrix: sps.spmatrix, level_size: int) -> tuple[int, int]:
    """Largest backward and forward time-level offsets coupled by ``matrix``."""
    coo = matrix.tocoo()
    if coo.nnz == 0:
        return 0, 0
    off = coo.col // level_size - coo.row // level_size
    return int(max(0, -off.min())), int(max(0, off.max()))


class _BlockSolver:
    def __init__(self, block: sps.csr_matrix):
        block = block.tocsr()
        block.sort_indices()
        m = block.shape[0]
        diag = block.diagonal()
        if block.nnz == np.count_nonzero(diag) == m:
            self.inv_diag = 1.0 / diag
            self.lu = None
        else:
            self.inv_diag = None
            self.lu = splu(block.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.lu is None:
            return self.inv_diag[:, None] * rhs
        return self.lu.solve(rhs)


class LevelMarcher:
    """Exact level-by-level inversion of a time-banded sparse operator.

    Parameters
    ----------
    matrix : scipy.sparse matrix
        Square operator on ``n_t`` levels of ``level_size`` unknowns each.
    n_t : int
    level_size : int

    Notes
    -----
    Rows of the first and last ``s`` levels are boundary rows: they cannot
    be enforced and are excluded from every residual check.
    """

    def __init__(self, matrix: sps.spmatrix, n_t: int, level_size: int):
        self.matrix = sps.csr_matrix(matrix)
        self.n_t, self.m = n_t, level_size
        lo, hi = half_bandwidth(self.matrix, level_size)
        self.s = max(lo, hi, 1)
        if n_t <= 4 * self.s:
            raise ValueError("lattice too short for the operator stencil")
        self._slabs: dict[int, sps.csr_matrix] = {}
        self._solvers: dict[tuple, _BlockSolver] = {}

    def _slab(self, n: int) -> sps.csr_matrix:
        slab = self._slabs.get(n)
        if slab is None:
            s, m = self.s, self.m
            slab = self.matrix[n * m:(n + 1) * m, (n - s) * m:(n + s + 1) * m].tocsc()
            self._slabs[n] = slab
        return slab

    def _solver(self, block: sps.csr_matrix) -> _BlockSolver:
        block = block.tocsr()
        block.sort_indices()
        key = (block.data.tobytes(), block.indices.tobytes(), block.indptr.tobytes())
        solver = self._solvers.get(key)
        if solver is None:
            try:
                solver = _BlockSolver(block)
            except RuntimeError as exc:
                raise np.linalg.LinAlgError("singular marching block") from exc
            self._solvers[key] = solver
        return solver

    def march(self, rhs: np.ndarray, which: str = "retarded",
              initial: np.ndarray | None = None, rows: Sequence[int] | None = None
              ) -> np.ndarray:
        """Solve ``L u = rhs`` by marching.

        Parameters
        ----------
        rhs : ndarray, shape (n_t, level_size, k)
        which : {"retarded", "advanced"}
        initial : ndarray, optional
            Prefilled solution array (e.g. Cauchy data); zero by default.
        rows : sequence of int, optional
            Row levels to march through, in marching order. By default all
            interior rows ``s .. n_t - 1 - s``.

        Returns
        -------
        ndarray, shape (n_t, level_size, k)
        """
        s, m, n_t = self.s, self.m, self.n_t
        dtype = np.result_type(rhs.dtype, self.matrix.dtype)
        U = np.zeros(rhs.shape, dtype=dtype) if initial is None else initial.astype(dtype)
        k = rhs.shape[2]
        if rows is None:
            rows = range(s, n_t - s) if which == "retarded" else range(n_t - 1 - s, s - 1, -1)
        for n in rows:
            slab = self._slab(n)
            if which == "retarded":
                known = slab[:, : 2 * s * m] @ U[n - s:n + s].reshape(2 * s * m, k)
                block = slab[:, 2 * s * m:]
                target = n + s
            elif which == "advanced":
                known = slab[:, m:] @ U[n - s + 1:n + s + 1].reshape(2 * s * m, k)
                block = slab[:, :m]
                target = n - s
            else:
                raise ValueError("which must be 'retarded' or 'advanced'")
            r = rhs[n] - known
            if not r.any():
                continue
            U[target] = self._solver(block).solve(r)
        return U


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """A discrete differential operator with the data Green operators need.

    Attributes
    ----------
    lattice : SpacetimeLattice
    fiber_dim : int
    matrix : scipy.sparse.csr_matrix
        The discrete operator ``L``.
    pairing : scipy.sparse matrix
        Gram matrix ``G`` of the natural pairing, ``pair(a, b) = a^H G b``
        (no conjugation for bilinear kinds).
    pairing_kind : {"bilinear", "sesquilinear", "dual"}
    scalar_kind : {"real", "complex"}
    stepping_form : NormallyHyperbolicForm, optional
    factorization : Factorization, optional
        When present, ``E = left @ companion^{-1}``.
    formally_self_adjoint : bool
    dual : bool
        The operator acts on dual (cospinor) sections.
    section_factory : callable, optional
        Wraps raw value arrays into the section type of the model.
    name : str
    """

    lattice: SpacetimeLattice
    fiber_dim: int
    matrix: sps.csr_matrix
    pairing: sps.spmatrix
    pairing_kind: str = "bilinear"
    scalar_kind: str = "real"
    stepping_form: NormallyHyperbolicForm | None = None
    factorization: Factorization | None = None
    formally_self_adjoint: bool = True
    dual: bool = False
    section_factory: Callable | None = None
    name: str = "L"

    def __post_init__(self):
        if self.stepping_form is None and self.factorization is None:
            raise ValueError("an operator needs a stepping form or a factorization")

    @property
    def level_size(self) -> int:
        return self.lattice.n_x * self.fiber_dim

    def section(self, values) -> Section:
        values = np.asarray(values).reshape(self.lattice.shape + (self.fiber_dim,))
        if self.section_factory is not None:
            return self.section_factory(values)
        kind = self.scalar_kind
        return Section(self.lattice, values, kind, self.dual)

    def zeros(self) -> Section:
        dtype = float if self.scalar_kind == "real" else complex
        return self.section(np.zeros(self.lattice.shape + (self.fiber_dim,), dtype=dtype))

    def apply(self, f: Section) -> Section:
        return self.section(self.matrix @ f.flat)

    def pair(self, a: Section, b: Section):
        left = np.conj(a.flat) if self.pairing_kind == "sesquilinear" else a.flat
        val = left @ (self.pairing @ b.flat)
        return float(val.real) if self.scalar_kind == "real" and not np.iscomplexobj(val) else val

    @cached_property
    def marcher(self) -> LevelMarcher:
        mat = self.matrix if self.factorization is None else self.factorization.companion
        return LevelMarcher(mat, self.lattice.n_t, self.level_size)

    @cached_property
    def cauchy_marcher(self) -> LevelMarcher:
        if self.factorization is None:
            return self.marcher
        if self.stepping_form is None:
            raise ValueError("operator has no stepping form for the Cauchy problem")
        return LevelMarcher(self.stepping_form.matrix, self.lattice.n_t, self.level_size)

    @property
    def margin(self) -> int:
        """Levels a source must keep from the time boundary (stencil width)."""
        return 2 * self.marcher.s

    @property
    def interior_margin(self) -> int:
        """Boundary rows excluded from residual checks."""
        s = self.marcher.s
        if self.factorization is not None:
            s = max(s, half_bandwidth(self.matrix, self.level_size)[1])
        return s

    def interior_rows(self) -> slice:
        k = self.interior_margin
        return slice(k, self.lattice.n_t - k)


def pair(a: Section, b: Section, weights: np.ndarray | None = None):
    """Volume-weighted fiber pairing of two sections.

    The fiber product is the Euclidean dot product; for complex sections the
    first argument is conjugated, except for the dual pairing of a dual
    (cospinor) section with an ordinary one, which is bilinear.

    Parameters
    ----------
    a, b : Section
    weights : ndarray, optional
        Quadrature weights; the metric volume weights by default.
    """
    if a.fiber_dim != b.fiber_dim:
        raise ValueError(f"incompatible fiber dimensions {a.fiber_dim} and {b.fiber_dim}")
    w = volume_weights(a.lattice) if weights is None else weights
    av = a.values
    if (a.kind == "complex" or b.kind == "complex") and not (a.dual and not b.dual):
        av = np.conj(av)
    val = np.sum(w[..., None] * av * b.values)
    if a.kind == "real" and b.kind == "real":
        return float(val)
    return complex(val)


def _batch(op: OperatorHandle, F: np.ndarray) -> np.ndarray:
    n_t = op.lattice.n_t
    return F.reshape(n_t, op.level_size, -1)


def _check_source(op: OperatorHandle, mask: np.ndarray, which: str) -> None:
    rows = np.flatnonzero(mask.any(axis=tuple(range(1, mask.ndim))))
    if rows.size == 0:
        return
    k = op.margin
    if which in ("retarded", "causal") and rows[0] < k:
        raise SupportClassError(f"source is not past compact: it reaches level {rows[0]} < {k}")
    if which in ("advanced", "causal") and rows[-1] > op.lattice.n_t - 1 - k:
        raise SupportClassError(
            f"source is not future compact: it reaches level {rows[-1]} > {op.lattice.n_t - 1 - k}")


def green_apply_batch(op: OperatorHandle, F: np.ndarray, which: str = "retarded") -> np.ndarray:
    """Apply a Green operator to a batch of sources.

    Parameters
    ----------
    op : OperatorHandle
    F : ndarray, shape (n_t, n_x, d) or (n_t, n_x, d, k)
    which : {"retarded", "advanced", "causal"}

    Returns
    -------
    ndarray with the shape of ``F``
    """
    shape = F.shape
    rhs = _batch(op, F)
    _check_source(op, np.abs(rhs) > 0, which)
    if which == "causal":
        return (green_apply_batch(op, F, "advanced") - green_apply_batch(op, F, "retarded"))
    U = _green_solve(op, rhs, which)
    return np.asarray(U).reshape(shape)


def _green_solve(op: OperatorHandle, rhs: np.ndarray, which: str) -> np.ndarray:
    fac = op.factorization
    if fac is not None and fac.split is not None:
        sp_, k = fac.split, rhs.shape[2]
        U = op.marcher.march(rhs, which)
        g = np.asarray(sp_.divergence @ rhs.reshape(-1, k)).reshape(sp_.n_t, sp_.level_size, k)
        G = sp_.marcher.march(g, which)
        return U + sp_.coefficient * np.asarray(sp_.gradient @ G.reshape(-1, k)).reshape(U.shape)
    if fac is not None and fac.apply_left_first:
        rhs = np.asarray(fac.left @ rhs.reshape(-1, rhs.shape[2])).reshape(rhs.shape)
    U = op.marcher.march(rhs, which)
    if fac is not None and not fac.apply_left_first:
        U = fac.left @ U.reshape(-1, U.shape[2])
    return np.asarray(U).reshape(rhs.shape)


def green_apply(op: OperatorHandle, f: Section, which: str = "retarded") -> Section:
    """Retarded (``E^+``) or advanced (``E^-``) Green operator applied to ``f``.

    The result satisfies ``L E f = f`` on interior rows and ``E L f = f``
    for sources vanishing near the relevant time boundary, up to roundoff.
    """
    if which not in ("retarded", "advanced"):
        raise ValueError("which must be 'retarded' or 'advanced'")
    return op.section(green_apply_batch(op, f.values, which))


def causal_propagator(op: OperatorHandle, f: Section) -> Section:
    """Advanced-minus-retarded operator ``E f = E^- f - E^+ f``."""
    return op.section(green_apply_batch(op, f.values, "causal"))


def interior_residual(op: OperatorHandle, u: Section, f: Section | None = None) -> float:
    """``max |L u - f|`` over interior rows."""
    r = (op.matrix @ u.flat).reshape(u.values.shape)
    if f is not None:
        r = r - f.values
    return float(np.max(np.abs(r[op.interior_rows()]), initial=0.0))


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (u <= 0) to 1 (u >= 1)."""
    u = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1 - u, 1.0)), 0.0)
    return a / (a + b)


def partition(n_t: int, band: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Smooth partition of unity ``(chi_plus, chi_minus)`` over time levels.

    ``chi_plus`` rises from 0 to 1 across the transition band (default: the
    middle third of the levels) and ``chi_minus = 1 - chi_plus``.
    """
    a, b = (n_t // 3, (2 * n_t) // 3) if band is None else band
    if not 0 <= a < b < n_t:
        raise ValueError(f"invalid transition band {(a, b)}")
    plus = _smooth_step((np.arange(n_t) - a) / (b - a))
    return plus, 1.0 - plus


def split_solve(op: OperatorHandle, f: Section, band: tuple[int, int] | None = None) -> Section:
    """A solution of ``L h = f`` built as ``E^+(chi_+ f) + E^-(chi_- f)``."""
    plus, minus = partition(op.lattice.n_t, band)
    fp = f.values * plus[:, None, None]
    fm = f.values * minus[:, None, None]
    h = green_apply_batch(op, fp, "retarded") + green_apply_batch(op, fm, "advanced")
    return op.section(h)


def _as_slice_values(op: OperatorHandle, data) -> np.ndarray:
    if data is None:
        return np.zeros((op.lattice.n_x, op.fiber_dim))
    arr = np.asarray(data)
    return arr.reshape(op.lattice.n_x, op.fiber_dim)


def solve_cauchy(op: OperatorHandle, slc: CauchySlice, u0=None, u1=None,
                 source: Section | None = None, direction: str = "forward") -> Section:
    """Solve the Cauchy problem ``L u = J`` with data on a t-slice.

    Parameters
    ----------
    op : OperatorHandle
        Operator with a stepping form (second order in time).
    slc : CauchySlice
    u0, u1 : array_like, shape (n_x, d) or (n_x,)
        Value and unit-normal derivative ``beta^{-1/2} d_t u`` on the slice.
    source : Section, optional
        Right-hand side ``J``.
    direction : {"forward", "backward", "both"}

    Returns
    -------
    Section
        Solution on the levels reached; other levels are zero.
    """
    if op.stepping_form is None:
        raise ValueError("operator has no stepping form")
    lat = op.lattice
    courant = lat.light_speed.max()
    if courant > 1 + 1e-12:
        raise CFLError(f"time step violates the CFL bound (Courant number {courant:.6g})")
    marcher = op.cauchy_marcher
    if marcher.s != 1:
        raise ValueError("the Cauchy solver needs a three-level scheme")
    n0 = slc.t_index
    if not 1 <= n0 <= lat.n_t - 2:
        raise ValueError("slice must leave one level on each side")
    m = op.level_size
    dtype = complex if op.scalar_kind == "complex" else float
    J = np.zeros((lat.n_t, m, 1), dtype=dtype) if source is None else \
        source.values.reshape(lat.n_t, m, 1).astype(dtype)
    v0 = _as_slice_values(op, u0).reshape(m).astype(dtype)
    v1 = _as_slice_values(op, u1) * np.sqrt(lat.lapse[n0])[:, None]
    v1 = v1.reshape(m).astype(dtype)

    slab = marcher._slab(n0)
    low, mid, top = slab[:, :m], slab[:, m:2 * m], slab[:, 2 * m:]
    U = np.zeros((lat.n_t, m, 1), dtype=dtype)
    U[n0, :, 0] = v0
    two_dt = 2 * lat.delta_t
    if direction in ("forward", "both"):
        # centered derivative: u[n0-1] = u[n0+1] - 2 dt sqrt(beta) u1
        rhs = J[n0, :, 0] - mid @ v0 + two_dt * (low @ v1)
        U[n0 + 1, :, 0] = _BlockSolver(low + top).solve(rhs[:, None])[:, 0]
        U = marcher.march(J, "retarded", initial=U, rows=range(n0 + 1, lat.n_t - 1))
        if direction == "both":
            U[n0 - 1] = U[n0 + 1] - two_dt * v1[:, None]
            U = marcher.march(J, "advanced", initial=U, rows=range(n0 - 1, 0, -1))
    elif direction == "backward":
        rhs = J[n0, :, 0] - mid @ v0 - two_dt * (top @ v1)
        U[n0 - 1, :, 0] = _BlockSolver(low + top).solve(rhs[:, None])[:, 0]
        U = marcher.march(J, "advanced", initial=U, rows=range(n0 - 1, 0, -1))
    else:
        raise ValueError("direction must be 'forward', 'backward' or 'both'")
    return op.section(U.reshape(lat.shape + (op.fiber_dim,)))


def symbol_probe(op, point: tuple[int, int], zeta: Sequence[float],
                 scales: Sequence[float] | None = None, order: int = 2) -> np.ndarray:
    """Estimate the principal symbol of a discrete operator at a point.

    Computes ``(i lam)^{-order} e^{-i lam zeta.x} L e^{i lam zeta.x}`` at
    ``point`` for each scale and extrapolates to ``lam -> oo`` by a least
    squares fit of the lower-order decay ``1/lam, 1/lam^2`` and the lattice
    dispersion ``(lam h)^2, (lam h)^4``.

    Parameters
    ----------
    op : OperatorHandle or NormallyHyperbolicForm
    point : (t_index, x_index)
    zeta : (zeta_t, zeta_x)
    scales : at least five positive numbers, optional
        Defaults to ``(1/64, 1/32, 1/16, 1/8, 1/4) / h`` with ``h`` the
        larger grid step.
    order : int
        Differential order of the operator.

    Returns
    -------
    ndarray, shape (d, d)
    """
    lat = op.lattice
    h = max(lat.delta_t, lat.delta_x)
    if scales is None:
        scales = [2.0 ** -k / h for k in (6, 5, 4, 3, 2)]
    if len(scales) < 5:
        raise ValueError("five probe scales are needed for the extrapolation")
    zeta = np.asarray(zeta, dtype=float)
    if not np.any(zeta):
        raise ValueError("covector must be non-zero")
    mat = op.matrix
    d = op.fiber_dim
    n0, j0 = point
    dt_ = (lat.t - lat.t[n0])[:, None]
    dx_ = lat.x[None, :] - lat.x[j0]
    dx_ = (dx_ + lat.length_x / 2) % lat.length_x - lat.length_x / 2
    samples = []
    for lam in scales:
        phase = np.exp(1j * lam * (zeta[0] * dt_ + zeta[1] * dx_))
        est = np.empty((d, d), dtype=complex)
        for b in range(d):
            v = np.zeros(lat.shape + (d,), dtype=complex)
            v[..., b] = phase
            out = (mat @ v.reshape(-1)).reshape(v.shape)
            est[:, b] = out[n0, j0] / (1j * lam) ** order
        samples.append(est)
    lam = np.asarray(scales, dtype=float)
    basis = np.stack([np.ones_like(lam), 1 / lam, 1 / lam ** 2, (lam * h) ** 2, (lam * h) ** 4],
                     axis=1)
    coef = np.linalg.lstsq(basis, np.stack([s.reshape(-1) for s in samples]), rcond=None)[0]
    return coef[0].reshape(d, d)


def adjoint_residual(op: OperatorHandle, partner: OperatorHandle, f: Section, g: Section,
                     mode: str = "operator", which: str = "retarded",
                     pairing: Callable | None = None) -> float:
    """Residual of formal adjointness or of Green-operator duality.

    In ``operator`` mode returns ``|(L* g, f) - (g, L f)|``; in ``green``
    mode returns ``|(E*^{-+} g, f) - (g, E^{+-} f)|`` where the partner's
    Green operator has the opposite time orientation.
    """
    pr = pairing if pairing is not None else op.pair
    if mode == "operator":
        return float(abs(pr(partner.apply(g), f) - pr(g, op.apply(f))))
    if mode == "green":
        other = "advanced" if which == "retarded" else "retarded"
        return float(abs(pr(green_apply(partner, g, other), f) - pr(g, green_apply(op, f, which))))
    raise ValueError("mode must be 'operator' or 'green'")


@dataclass(frozen=True, eq=False)
class Observable:
    """Equivalence class ``[f]`` of a compact section modulo the image of ``L``."""

    representative: Section
    model: object

    def __post_init__(self):
        op = self.model.operator
        mask = self.representative.point_mask
        _check_source(op, mask[..., None], "causal")

    @property
    def operator(self) -> OperatorHandle:
        return self.model.operator

    @cached_property
    def propagated(self) -> Section:
        """``E f`` for the representative ``f``."""
        return causal_propagator(self.operator, self.representative)


def observables_batch(model, F: np.ndarray) -> list[Observable]:
    """Observables of a model for a stack of sources, propagated in one batched solve.

    Parameters
    ----------
    model
        Any field model with ``operator`` and ``observable``.
    F : ndarray, shape (n_t, n_x, d, k)
    """
    op = model.operator
    E = green_apply_batch(op, F, "causal")
    out = []
    for k in range(F.shape[-1]):
        obs = model.observable(op.section(F[..., k]))
        obs.__dict__["propagated"] = op.section(E[..., k])
        out.append(obs)
    return out


def observable_equal(a: Observable, b: Observable, rtol: float = EQUALITY_RTOL) -> bool:
    """Decide ``[f_a] = [f_b]`` through ``||E(f_a - f_b)|| <= rtol (||f_a|| + ||f_b||)``.

    The norm runs over interior rows, where ``E`` is fully determined.
    """
    if a.model is not b.model:
        raise ValueError("observables belong to different models")
    diff = a.representative - b.representative
    scale = a.representative.norm_inf() + b.representative.norm_inf()
    if scale == 0:
        return True
    ediff = causal_propagator(a.operator, diff).values[a.operator.interior_rows()]
    return float(np.max(np.abs(ediff), initial=0.0)) <= rtol * scale


def time_slice_project(obs: Observable, band: tuple[int, int]) -> Observable:
    """Representative of ``[f]`` supported in the time band ``[start, stop)``.

    Builds ``f' = L(chi E f)`` with a smooth step ``chi`` equal to 1 before
    and 0 after a transition inside the band. The commutator form
    ``L(chi u) - chi L u`` is used so that the support lies in the band
    exactly.
    """
    op = obs.operator
    start, stop = band
    # keep the new support a full source margin inside the band
    s = op.interior_margin
    a, b = start + op.margin + s, stop - 1 - op.margin - s
    if b - a < 2:
        raise ValueError(f"band {band} is too narrow for the projector")
    plus, minus = partition(op.lattice.n_t, (a, b))
    u = obs.propagated
    chi = minus[:, None, None]
    lu = (op.matrix @ u.flat).reshape(u.values.shape)
    lchi = (op.matrix @ (chi * u.values).reshape(-1)).reshape(u.values.shape)
    f_new = lchi - chi * lu
    return Observable(op.section(f_new), obs.model)


def write_section_csv(path, section: Section) -> None:
    """Export ``t_index,x_index,component_index,re,im`` with 17 significant digits."""
    v = section.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_index", "x_index", "component_index", "re", "im"])
        for n, j, c in zip(*np.nonzero(np.ones(v.shape, dtype=bool))):
            z = complex(v[n, j, c])
            w.writerow([n, j, c, f"{z.real:.17g}", f"{z.imag:.17g}"])


def read_section_csv(path, lat: SpacetimeLattice, fiber_dim: int = 1,
                     kind: str | None = None) -> Section:
    """Read a section written by :func:`write_section_csv`.

    Missing entries are zero; the kind is inferred from the imaginary parts
    unless given.
    """
    vals = np.zeros(lat.shape + (fiber_dim,), dtype=complex)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["t_index", "x_index", "component_index", "re", "im"]
        if reader.fieldnames != expected:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            n, j, c = int(row["t_index"]), int(row["x_index"]), int(row["component_index"])
            vals[n, j, c] = complex(float(row["re"]), float(row["im"]))
    if kind is None:
        kind = "complex" if np.any(vals.imag != 0) else "real"
    return Section(lat, vals if kind == "complex" else vals.real, kind)
