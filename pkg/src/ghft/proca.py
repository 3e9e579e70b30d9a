"""The Proca field on lattice 1-forms.

Forms live on a staggered (discrete exterior calculus) complex over the
lattice: 0-forms at nodes ``(n, j)``, the ``dt`` component of a 1-form on
the time edge ``(n, j) -> (n + 1, j)``, the ``dx`` component on the space
edge ``(n, j) -> (n, j + 1)`` and 2-forms on the cell with lower-left corner
``(n, j)``. Values are integrals over the element, so the coboundary ``d``
has coefficients ``+-1`` and ``d d = 0`` is structural.

The Hodge star maps primal ``k``-cochains to dual ``(2 - k)``-cochains by
diagonal metric weights (edge-length ratios with Lorentzian signs), and the
codifferential ``delta = (-1)^k *^{-1} d *`` is the formal adjoint of ``d``
for the pairing ``<a, b> = sum a * b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from . import greenops as go
from .greenops import Observable, OperatorHandle, Section
from .scalar import OffShellError
from .spacetime import CauchySlice, SpacetimeLattice, SupportMask, classify_support

__all__ = [
    "FormField",
    "ProcaModel",
    "form_field",
    "form_weights",
    "exterior_d",
    "dd_exact",
    "codiff_codiff_exact",
    "hodge_star",
    "hodge_star_inverse",
    "codifferential",
    "wedge_pairing",
    "proca_apply",
    "proca_q",
    "proca_green",
    "proca_tau",
    "proca_sigma_slice",
    "closure_mask",
    "sample_one_form",
]

_COMPONENTS = {0: 1, 1: 2, 2: 1}


@dataclass(frozen=True, eq=False)
class FormField(Section):
    """A ``k``-cochain on the staggered complex.

    ``values[..., 0]`` holds the single component of 0- and 2-forms; 1-forms
    carry ``(dt, dx)`` components. ``dual`` marks cochains on the dual
    complex, i.e. outputs of the Hodge star.
    """

    degree: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.degree not in _COMPONENTS:
            raise ValueError("degree must be 0, 1 or 2")
        if self.fiber_dim != _COMPONENTS[self.degree]:
            raise ValueError(f"a {self.degree}-form has {_COMPONENTS[self.degree]} components")

    @staticmethod
    def _rebuild(proto, values, kind):
        return FormField(proto.lattice, values, kind, proto.dual, proto.degree)

    @property
    def point_mask(self) -> np.ndarray:
        """Nodes touched by the closure of the elements carrying the form."""
        return closure_mask(_components_above(self), self.degree)

    @property
    def support(self) -> SupportMask:
        m = self.point_mask
        return SupportMask(m, classify_support(m))


def _components_above(section: Section) -> np.ndarray:
    amp = np.abs(section.values)
    peak = amp.max() if amp.size else 0.0
    if peak == 0:
        return np.zeros(amp.shape, dtype=bool)
    return amp > go.SUPPORT_RTOL * peak



def closure_mask(element_mask: np.ndarray, degree: int) -> np.ndarray:
    """Node mask of the closure of the marked elements.

    ``element_mask`` has shape ``(n_t, n_x, components)``.
    """
    m = np.asarray(element_mask, dtype=bool)
    if m.ndim == 2:
        m = m[..., None]
    out = m.any(axis=2).copy()
    if degree == 0:
        return out
    t_part = m[..., 0]
    x_part = m[..., 1] if degree == 1 else m[..., 0]
    # upper end of time-like elements, right end of space-like elements
    out[1:] |= t_part[:-1]
    out |= np.roll(x_part, 1, axis=1)
    if degree == 2:
        out[1:] |= np.roll(m[:-1, :, 0], 1, axis=1)
    return out


def form_field(lat: SpacetimeLattice, values, degree: int = 1, dual: bool = False) -> FormField:
    v = np.asarray(values)
    if v.ndim == 2:
        v = v[..., None]
    return FormField(lat, v, "real", dual, degree)


def sample_one_form(lat: SpacetimeLattice, func) -> FormField:
    """Cochain of a continuum 1-form ``a_t dt + a_x dx`` by the midpoint rule.

    ``func(t, x)`` returns the pair ``(a_t, a_x)`` of coordinate components;
    each is integrated over its edge as ``a(midpoint) * length``.
    """
    t, x = lat.t[:, None], lat.x[None, :]
    a_t = np.broadcast_to(func(t + lat.delta_t / 2, x)[0], lat.shape) * lat.delta_t
    a_x = np.broadcast_to(func(t, x + lat.delta_x / 2)[1], lat.shape) * lat.delta_x
    return form_field(lat, np.stack([a_t, a_x], axis=-1), 1)


# generic-array calculus (works for float and Fraction object arrays)

def _shift_t(v: np.ndarray) -> np.ndarray:
    """``v[n + 1]`` with zero beyond the last level."""
    out = np.zeros_like(v)
    out[:-1] = v[1:]
    return out


def _shift_t_back(v: np.ndarray) -> np.ndarray:
    """``v[n - 1]`` with zero before the first level."""
    out = np.zeros_like(v)
    out[1:] = v[:-1]
    return out


def _d_values(v: np.ndarray, degree: int) -> np.ndarray:
    if degree == 0:
        f = v[..., 0]
        return np.stack([_shift_t(f) - f, np.roll(f, -1, axis=1) - f], axis=-1)
    if degree == 1:
        a_t, a_x = v[..., 0], v[..., 1]
        return (a_t + _shift_t(a_x) - np.roll(a_t, -1, axis=1) - a_x)[..., None]
    raise ValueError("d of a top-degree form")


def _d_transpose_values(v: np.ndarray, degree: int) -> np.ndarray:
    """Transpose of the coboundary from ``degree - 1`` to ``degree``."""
    if degree == 1:
        a_t, a_x = v[..., 0], v[..., 1]
        return (_shift_t_back(a_t) - a_t + np.roll(a_x, 1, axis=1) - a_x)[..., None]
    if degree == 2:
        c = v[..., 0]
        return np.stack([c - np.roll(c, 1, axis=1), _shift_t_back(c) - c], axis=-1)
    raise ValueError("no coboundary into 0-forms")


def form_weights(lat: SpacetimeLattice) -> dict[int, np.ndarray]:
    """Diagonal Hodge weights ``M_k`` of the staggered complex.

    Nodes get ``sqrt(beta h) dt dx``, time edges ``sqrt(h/beta) dx/dt``,
    space edges ``-sqrt(beta/h) dt/dx`` and cells ``-1/(sqrt(beta h) dt dx)``.
    Metric samples are averaged to element centres; the last time level
    reuses its own samples.
    """
    beta, h = lat.lapse, lat.spatial_metric
    dt, dx = lat.delta_t, lat.delta_x

    def t_avg(f):
        return 0.5 * (f + np.vstack([f[1:], f[-1:]]))

    def x_avg(f):
        return 0.5 * (f + np.roll(f, -1, axis=1))

    bt, ht = t_avg(beta), t_avg(h)
    bx, hx = x_avg(beta), x_avg(h)
    bc, hc = x_avg(bt), x_avg(ht)
    return {
        0: (np.sqrt(beta * h) * dt * dx)[..., None],
        1: np.stack([np.sqrt(ht / bt) * dx / dt, -np.sqrt(bx / hx) * dt / dx], axis=-1),
        2: (-1.0 / (np.sqrt(bc * hc) * dt * dx))[..., None],
    }


def _exact(v):
    return np.vectorize(lambda z: Fraction(z), otypes=[object])(np.asarray(v, dtype=float))


def exterior_d(f: FormField, exact: bool = False):
    """Discrete coboundary of a 0- or 1-form.

    With ``exact=True`` the computation runs on ``Fraction`` object arrays
    and the raw exact array is returned.
    """
    if f.degree >= 2:
        raise ValueError("exterior derivative of a 2-form is zero-dimensional here")
    if exact:
        return _d_values(_exact(f.values), f.degree)
    return FormField(f.lattice, _d_values(f.values, f.degree), f.kind, f.dual, f.degree + 1)


def dd_exact(f: FormField) -> np.ndarray:
    """``d d f`` of a 0-form in exact rational arithmetic."""
    if f.degree != 0:
        raise ValueError("d d is only non-trivial on 0-forms here")
    return _d_values(_d_values(_exact(f.values), 0), 1)


def _star_sign(k: int) -> int:
    # star star = (-1)^{k(2-k)} s with s = -1 for Lorentzian signature
    return -((-1) ** (k * (2 - k)))


def hodge_star(f: FormField) -> FormField:
    """Hodge dual; primal ``k``-forms go to dual ``(2 - k)``-forms and back.

    On dual input the result satisfies ``* * f = (-1)^{k(2-k)} s f`` with
    ``s = -1``, so ``* *`` is the identity on 1-forms.
    """
    w = form_weights(f.lattice)
    if not f.dual:
        return FormField(f.lattice, f.values * w[f.degree], f.kind, True, 2 - f.degree)
    k = 2 - f.degree
    return FormField(f.lattice, _star_sign(k) * f.values / w[k], f.kind, False, k)


def hodge_star_inverse(f: FormField) -> FormField:
    """Inverse of :func:`hodge_star` on primal forms (dual input)."""
    if not f.dual:
        raise ValueError("the inverse star takes a dual cochain")
    k = 2 - f.degree
    return FormField(f.lattice, f.values / form_weights(f.lattice)[k], f.kind, False, k)


def _dual_d(f: FormField) -> FormField:
    """Dual coboundary ``(-1)^k d_{k-1}^T`` on a dual ``(2 - k)``-cochain."""
    k = 2 - f.degree
    v = (-1) ** k * _d_transpose_values(f.values, k)
    return FormField(f.lattice, v, f.kind, True, f.degree + 1)


def codifferential(f: FormField, exact: bool = False):
    """``delta = (-1)^k *^{-1} d *`` on a ``k``-form, ``k >= 1``.

    With ``exact=True`` the composite is evaluated on ``Fraction`` arrays
    (weights converted exactly from their floating samples).
    """
    if f.degree < 1:
        raise ValueError("codifferential of a 0-form")
    k = f.degree
    if exact:
        w = form_weights(f.lattice)
        starred = _exact(f.values) * _exact(w[k])
        out = (-1) ** k * (-1) ** k * _d_transpose_values(starred, k)
        return out / _exact(w[k - 1])
    sign = (-1) ** k
    return FormField(f.lattice, sign * hodge_star_inverse(_dual_d(hodge_star(f))).values,
                     f.kind, False, k - 1)


def codiff_codiff_exact(f: FormField) -> np.ndarray:
    """``delta delta f`` of a 2-form in exact rational arithmetic."""
    if f.degree != 2:
        raise ValueError("delta delta is only non-trivial on 2-forms here")
    w = {k: _exact(v) for k, v in form_weights(f.lattice).items()}
    once = _d_transpose_values(_exact(f.values) * w[2], 2) / w[1]
    return _d_transpose_values(once * w[1], 1) / w[0]


def wedge_pairing(a: FormField, b: FormField) -> float:
    """``int a ^ *b`` as the sum of primal values against starred dual values."""
    if a.degree != b.degree:
        raise ValueError("forms of different degree")
    return float(np.sum(a.values * hodge_star(b).values))


# matrices

def _select(n: int, d: int, c: int) -> sps.csr_matrix:
    """Embedding of a scalar grid as component ``c`` of a ``d``-component one."""
    rows = np.arange(n) * d + c
    return sps.csr_matrix((np.ones(n), (rows, np.arange(n))), shape=(n * d, n))


def _forward(size: int, periodic: bool) -> sps.csr_matrix:
    m = sps.diags([-np.ones(size), np.ones(size - 1)], [0, 1], format="lil")
    if periodic:
        m[size - 1, 0] = 1.0
    return sps.csr_matrix(m)


@dataclass(frozen=True, eq=False)
class ProcaModel:
    """Proca field with ``P = -delta d + m^2`` on 1-forms.

    Green operators use ``E = Q F`` with ``F`` the exact marching inverse of
    ``R = -delta d - d delta + m^2 = P Q``. Because ``d d = 0`` the gradient
    intertwines the 0-form operator ``R_0 = -delta d + m^2`` with ``R``, so
    ``E = F - m^{-2} d F_0 delta`` with ``F_0`` the inverse of ``R_0``. This
    form never builds ``Q f`` (large for rough sources) nor applies ``Q`` to
    a solution, and keeps the residuals near machine precision.
    """

    lattice: SpacetimeLattice
    mass_sq: float = 1.0

    fiber_dim = 2
    kind = "real"

    def __post_init__(self):
        if self.mass_sq == 0 or not np.isfinite(self.mass_sq):
            raise ValueError("the Proca mass term must be a non-zero real number")

    @cached_property
    def weights(self) -> dict[int, np.ndarray]:
        return form_weights(self.lattice)

    @cached_property
    def d_matrices(self) -> tuple[sps.csr_matrix, sps.csr_matrix]:
        """``d_0`` (nodes to edges) and ``d_1`` (edges to cells)."""
        lat = self.lattice
        n = lat.n_t * lat.n_x
        dt = sps.kron(_forward(lat.n_t, False), sps.identity(lat.n_x))
        dx = sps.kron(sps.identity(lat.n_t), _forward(lat.n_x, True))
        st, sx = _select(n, 2, 0), _select(n, 2, 1)
        d0 = st @ dt + sx @ dx
        d1 = -dx @ st.T + dt @ sx.T
        return sps.csr_matrix(d0), sps.csr_matrix(d1)

    def _m(self, k: int, inverse: bool = False) -> sps.dia_matrix:
        w = self.weights[k].reshape(-1)
        return sps.diags(1.0 / w if inverse else w)

    @cached_property
    def codiff_matrices(self) -> tuple[sps.csr_matrix, sps.csr_matrix]:
        """``delta_1 = M_0^{-1} d_0^T M_1`` and ``delta_2 = M_1^{-1} d_1^T M_2``."""
        d0, d1 = self.d_matrices
        delta1 = self._m(0, True) @ d0.T @ self._m(1)
        delta2 = self._m(1, True) @ d1.T @ self._m(2)
        return sps.csr_matrix(delta1), sps.csr_matrix(delta2)

    @cached_property
    def matrices(self) -> dict[str, sps.csr_matrix]:
        d0, d1 = self.d_matrices
        delta1, delta2 = self.codiff_matrices
        one = sps.identity(d0.shape[0], format="csr")
        dd = delta2 @ d1
        dl = d0 @ delta1
        m2 = self.mass_sq
        zero = sps.identity(d0.shape[1], format="csr")
        return {
            "P": sps.csr_matrix(-dd + m2 * one),
            "R0": sps.csr_matrix(-delta1 @ d0 + m2 * zero),
            "Q": sps.csr_matrix(one - dl / m2),
            "R": sps.csr_matrix(-dd - dl + m2 * one),
        }

    @cached_property
    def operator(self) -> OperatorHandle:
        mats = self.matrices
        lat = self.lattice
        return OperatorHandle(
            lattice=lat, fiber_dim=2, matrix=mats["P"], pairing=self._m(1),
            pairing_kind="bilinear", scalar_kind="real",
            factorization=go.Factorization(
                mats["Q"], mats["R"], apply_left_first=True,
                split=go.GradientSplit(self.d_matrices[0], self.codiff_matrices[0], mats["R0"],
                                       -1.0 / self.mass_sq, lat.n_x, lat.n_t)),
            formally_self_adjoint=True,
            section_factory=lambda v: form_field(lat, v.real if np.iscomplexobj(v) else v, 1),
            name="P")

    def section(self, values) -> FormField:
        return self.operator.section(values)

    def observable(self, values) -> Observable:
        return Observable(values if isinstance(values, Section) else self.section(values), self)

    def pair(self, a: Section, b: Section) -> float:
        """``<a, b> = sum a M_1 b``, the discrete ``int a ^ *b``."""
        return float(np.sum(a.values * self.weights[1] * b.values))

    def restrict(self, start: int, stop: int) -> "ProcaModel":
        return ProcaModel(self.lattice.restrict(start, stop), self.mass_sq)

    def gram_form(self, a: Observable, b: Observable) -> float:
        return proca_tau(a, b)

    def on_shell_residual(self, A: Section) -> float:
        op = self.operator
        scale = A.norm_inf() * abs(op.matrix).sum(axis=1).max()
        return 0.0 if scale == 0 else go.interior_residual(op, A) / scale


def proca_apply(model: ProcaModel, A: Section) -> FormField:
    """``P A = -delta d A + m^2 A``."""
    return model.section(model.matrices["P"] @ A.flat)


def proca_q(model: ProcaModel, A: Section) -> FormField:
    """``Q A = -m^{-2} d delta A + A``."""
    return model.section(model.matrices["Q"] @ A.flat)


def proca_green(model: ProcaModel, alpha: Section, which: str = "retarded") -> FormField:
    """``E^pm alpha = Q F^pm alpha``."""
    return go.green_apply(model.operator, alpha, which)


def proca_tau(a: Observable, b: Observable) -> float:
    """``tau([a], [b]) = <a, E b>``."""
    if a.model is not b.model:
        raise ValueError("observables belong to different models")
    return a.model.pair(a.representative, b.propagated)


def proca_sigma_slice(A: Section, B: Section, slc: CauchySlice, model: ProcaModel,
                      rtol: float = 1e-6) -> float:
    """Slice form ``int [g(A, i_n dB) - g(B, i_n dA)] dSigma``.

    On the slice ``t_n`` the integrand is evaluated at space edges with the
    field strength averaged over the two adjacent cells:
    ``sum_j [-A_x (dB) + B_x (dA)] / (sqrt(beta h) dt dx)``.
    """
    for name, f in (("A", A), ("B", B)):
        r = model.on_shell_residual(f)
        if r > rtol:
            raise OffShellError(f"{name} is off shell (relative residual {r:.3e})")
    lat = model.lattice
    n = slc.t_index
    if not 1 <= n <= lat.n_t - 2:
        raise ValueError("slice too close to the time boundary")
    fa = _d_values(A.values, 1)[..., 0]
    fb = _d_values(B.values, 1)[..., 0]
    avg = lambda f: 0.5 * (f[n] + f[n - 1])  # noqa: E731
    beta = 0.5 * (lat.lapse[n] + np.roll(lat.lapse[n], -1))
    h = 0.5 * (lat.spatial_metric[n] + np.roll(lat.spatial_metric[n], -1))
    dens = -A.values[n, :, 1] * avg(fb) + B.values[n, :, 1] * avg(fa)
    return float(np.sum(dens / np.sqrt(beta * h)) / (lat.delta_t * lat.delta_x))
