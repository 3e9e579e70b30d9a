"""The real scalar field ``P = box + m^2 + xi R``.

The d'Alembertian is discretized in conservative form

    box phi = (1/sqrt(beta h)) [d_t(sqrt(h/beta) d_t phi) - d_x(sqrt(beta/h) d_x phi)]

with half-step coefficients averaged from neighbouring samples. Multiplied
by the volume weights the matrix is exactly symmetric, so formal
self-adjointness and Green-operator duality hold to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps
import sympy as sp

from . import greenops as go
from .greenops import Observable, OperatorHandle, Section
from .spacetime import CauchySlice, Family, SpacetimeLattice, positive_root, volume_weights

__all__ = [
    "ScalarModel",
    "Observable",
    "OffShellError",
    "evaluate",
    "observable_equal",
    "symplectic_tau",
    "sigma_on_slice",
    "time_slice_project",
    "manufactured_problem",
]


class OffShellError(ValueError):
    """A section passed as a solution does not satisfy the field equation."""


def _ddt(f, dt):
    return np.gradient(f, dt, axis=0, edge_order=2)


def _ddx(f, dx):
    return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * dx)


@dataclass(frozen=True, eq=False)
class ScalarModel:
    """Klein-Gordon field with mass term ``m^2`` and curvature coupling ``xi``."""

    lattice: SpacetimeLattice
    mass_sq: float = 1.0
    coupling: float = 0.0

    fiber_dim = 1
    kind = "real"

    @cached_property
    def weights(self) -> np.ndarray:
        return volume_weights(self.lattice)

    @cached_property
    def symmetric_matrix(self) -> sps.csr_matrix:
        """``K = W P`` with ``W`` the diagonal volume weights; exactly symmetric."""
        lat = self.lattice
        beta, h = lat.lapse, lat.spatial_metric
        cell = lat.delta_t * lat.delta_x
        q = np.sqrt(h / beta)
        p = np.sqrt(beta / h)
        q_half = 0.5 * (q[:-1] + q[1:])
        # boundary rows reuse the edge sample; they are never enforced
        q_up = np.vstack([q_half, q[-1:]]) * (cell / lat.delta_t ** 2)
        q_down = np.vstack([q[:1] * (cell / lat.delta_t ** 2), q_up[:-1]])
        p_right = 0.5 * (p + np.roll(p, -1, axis=1)) * (cell / lat.delta_x ** 2)
        p_left = np.roll(p_right, 1, axis=1)
        potential = self.weights * (self.mass_sq + self.coupling * lat.scalar_curvature)
        diag = -(q_up + q_down) + (p_right + p_left) + potential
        e = lambda a: a[..., None, None]  # noqa: E731
        terms = [(1, 0, e(q_up)), (-1, 0, e(q_down)),
                 (0, 1, e(-p_right)), (0, -1, e(-p_left)), (0, 0, e(diag))]
        return go.stencil_matrix(lat.shape, 1, terms)

    @cached_property
    def stepping_form(self) -> go.NormallyHyperbolicForm:
        """Collocated normally hyperbolic form of ``P``.

        The first-order coefficients are the metric ones of the curved
        d'Alembertian.
        """
        lat = self.lattice
        beta, h = lat.lapse, lat.spatial_metric
        vol = np.sqrt(beta * h)
        bt = _ddt(np.sqrt(h / beta), lat.delta_t) / vol
        bx = -_ddx(np.sqrt(beta / h), lat.delta_x) / vol
        c = self.mass_sq + self.coupling * lat.scalar_curvature
        return go.NormallyHyperbolicForm(lat, 1, bt[..., None, None], bx[..., None, None],
                                         c[..., None, None])

    @cached_property
    def operator(self) -> OperatorHandle:
        w = self.weights.reshape(-1)
        mat = sps.diags(1.0 / w) @ self.symmetric_matrix
        return OperatorHandle(
            lattice=self.lattice, fiber_dim=1, matrix=sps.csr_matrix(mat),
            pairing=sps.diags(w), pairing_kind="bilinear", scalar_kind="real",
            stepping_form=self.stepping_form, formally_self_adjoint=True, name="P")

    def section(self, values) -> Section:
        return self.operator.section(values)

    def observable(self, values) -> Observable:
        return Observable(values if isinstance(values, Section) else self.section(values), self)

    def pair(self, a: Section, b: Section) -> float:
        return go.pair(a, b, self.weights)

    def restrict(self, start: int, stop: int) -> "ScalarModel":
        return ScalarModel(self.lattice.restrict(start, stop), self.mass_sq, self.coupling)

    def gram_form(self, a: Observable, b: Observable) -> float:
        return symplectic_tau(a, b)

    def on_shell_residual(self, phi: Section) -> float:
        """Relative interior residual ``|P phi| / (|phi| |P|)``."""
        op = self.operator
        scale = phi.norm_inf() * abs(op.matrix).sum(axis=1).max()
        if scale == 0:
            return 0.0
        return go.interior_residual(op, phi) / scale


def evaluate(obs: Observable, phi: Section) -> float:
    """Smeared field ``F_f(phi) = int f phi dvol``."""
    return obs.model.pair(obs.representative, phi)


def observable_equal(a: Observable, b: Observable) -> bool:
    """Equality in the quotient by the image of ``P``."""
    return go.observable_equal(a, b)


def symplectic_tau(a: Observable, b: Observable) -> float:
    """``tau([f], [h]) = int f (E h) dvol``."""
    if a.model is not b.model:
        raise ValueError("observables belong to different models")
    return a.model.pair(a.representative, b.propagated)


def sigma_on_slice(phi: Section, psi: Section, slc: CauchySlice, model: ScalarModel,
                   rtol: float = 1e-6) -> float:
    """Cauchy-surface form ``int (phi d_n psi - psi d_n phi) dSigma``.

    The normal derivative ``beta^{-1/2} d_t`` uses centered differences.

    Raises
    ------
    OffShellError
        If either input violates the field equation beyond ``rtol``.
    """
    for name, f in (("phi", phi), ("psi", psi)):
        r = model.on_shell_residual(f)
        if r > rtol:
            raise OffShellError(f"{name} is off shell (relative residual {r:.3e})")
    lat = model.lattice
    n = slc.t_index
    if not 1 <= n <= lat.n_t - 2:
        raise ValueError("slice too close to the time boundary")
    a, b = phi.values[..., 0], psi.values[..., 0]
    da = (a[n + 1] - a[n - 1]) / (2 * lat.delta_t)
    db = (b[n + 1] - b[n - 1]) / (2 * lat.delta_t)
    integrand = (a[n] * db - b[n] * da) * slc.normal_scale
    return float(np.sum(integrand * slc.induced_volume))


def time_slice_project(obs: Observable, band: tuple[int, int]) -> Observable:
    """Equivalent representative supported in the time band ``[start, stop)``."""
    return go.time_slice_project(obs, band)


def manufactured_problem(model: ScalarModel, phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Samples of a closed-form field, its normal derivative and its source.

    The source ``P phi`` is computed symbolically from the closed-form
    lapse and metric, so it carries no discretization error.

    Parameters
    ----------
    model : ScalarModel
        Model on a lattice built from closed-form profiles (or Minkowski).
    phi : str or sympy expression in ``t`` and ``x``

    Returns
    -------
    values, normal_derivative, source : ndarray, shape (n_t, n_x)
        ``phi``, ``beta^{-1/2} d_t phi`` and ``P phi`` on the lattice.
    """
    lat = model.lattice
    if lat.family != Family.MINKOWSKI and not lat.profiles:
        raise ValueError("manufactured solutions need a closed-form geometry")
    t, x = sp.symbols("t x", real=True)
    expr = sp.sympify(phi, locals={"t": t, "x": x})
    beta = lat.profiles.get("lapse", sp.Integer(1))
    h = lat.profiles.get("metric", sp.Integer(1))
    sb, sh = positive_root(beta), positive_root(h)
    box = (sp.diff(sh / sb * sp.diff(expr, t), t) - sp.diff(sb / sh * sp.diff(expr, x), x)) / (sb * sh)
    tt, xx = np.meshgrid(lat.t, lat.x, indexing="ij")

    def sample(e):
        fn = sp.lambdify((t, x), e, "numpy")
        return np.broadcast_to(np.asarray(fn(tt, xx), dtype=float), lat.shape).copy()

    values = sample(expr)
    normal = sample(sp.diff(expr, t) / sb)
    potential = model.mass_sq + model.coupling * lat.scalar_curvature
    return values, normal, sample(box) + potential * values
