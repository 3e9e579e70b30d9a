"""The Dirac field: exact gamma calculus and reduced (t, x^1) dynamics.

Pointwise algebra (gamma matrices, adjunction, charge conjugations) is done
in exact Gaussian-rational arithmetic. Dynamics are computed for fields that
depend only on ``(t, x^1)`` over spatially homogeneous metrics
``N(t)^2 dt^2 - a(t)^2 dx^2`` (lapse ``beta = N^2``), using the comoving
coframe ``e^0 = N dt``, ``e^i = a dx^i``.

The discrete Dirac operator uses a centered time difference that is skew
with respect to the reduced four-dimensional volume ``N a^3 dt dx``, so
``nabla-slash`` is exactly anti-self-adjoint and ``A P_s = P_c A`` holds
identically. Green operators follow ``E_s = P_s F_s`` with ``F_s`` the exact
inverse of the discrete composite ``P_s P_s``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sps
import sympy as sp

from . import greenops as go
from .exact import ExactMatrix, GaussianRational, gq
from .greenops import Observable, OperatorHandle, Section
from .spacetime import CauchySlice, LatticeError, SpacetimeLattice, positive_root

__all__ = [
    "GammaRep",
    "chiral_gammas",
    "CliffordReport",
    "clifford_check",
    "adjunction",
    "adjunction_inverse",
    "charge_conj_s",
    "charge_conj_c",
    "CoframeData",
    "DiracModel",
    "CospinorModel",
    "spin_covariant_derivative",
    "leibniz_residual",
    "nabla_gamma_algebraic",
    "nabla_gamma_residual",
    "dirac_apply",
    "codirac_apply",
    "slash_apply",
    "dirac_square_form",
    "dirac_green",
    "hermitian_form",
    "cospinor_hermitian_form",
    "hermitian_on_slice",
]

ETA = (1, -1, -1, -1)


@dataclass(frozen=True)
class GammaRep:
    """Four exact gamma matrices for signature (+, -, -, -)."""

    gammas: tuple[ExactMatrix, ExactMatrix, ExactMatrix, ExactMatrix]

    def __getitem__(self, mu: int) -> ExactMatrix:
        return self.gammas[mu]

    @cached_property
    def numeric(self) -> np.ndarray:
        """Complex array of shape (4, 4, 4), first index the frame label."""
        return np.stack([g.to_numpy() for g in self.gammas])


def chiral_gammas() -> GammaRep:
    """Chiral representation with Pauli blocks.

    ``gamma_0 = [[0, 1], [1, 0]]`` and ``gamma_i = [[0, s_i], [-s_i, 0]]``.
    """
    i = gq(0, 1)
    pauli = ([[0, 1], [1, 0]], [[0, -i], [i, 0]], [[1, 0], [0, -1]])
    z2 = [[0, 0], [0, 0]]

    def block(a, b, c, d):
        return ExactMatrix([a[0] + b[0], a[1] + b[1], c[0] + d[0], c[1] + d[1]])

    g0 = block(z2, [[1, 0], [0, 1]], [[1, 0], [0, 1]], z2)
    gs = [block(z2, s, [[-v for v in r] for r in s], z2) for s in pauli]
    return GammaRep((g0, *gs))


GAMMA = chiral_gammas()
_G = GAMMA.numeric
_I4 = np.eye(4)


@dataclass
class CliffordReport:
    """Outcome of :func:`clifford_check`: one entry per identity."""

    entries: list[tuple[str, bool]] = field(default_factory=list)
    runtime: float = 0.0

    def add(self, name: str, ok: bool) -> None:
        self.entries.append((name, bool(ok)))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.entries)

    @property
    def failures(self) -> list[str]:
        return [name for name, ok in self.entries if not ok]

    def count(self, prefix: str) -> int:
        return sum(1 for name, _ in self.entries if name.startswith(prefix))


def _random_exact_spinor(rng: np.random.Generator) -> tuple[GaussianRational, ...]:
    num = rng.integers(-9, 10, size=(4, 2))
    den = rng.integers(1, 7, size=(4, 2))
    return tuple(gq(Fraction(int(a), int(b)), Fraction(int(c), int(d)))
                 for (a, c), (b, d) in zip(num, den))


def exact_adjunction(s: Sequence[GaussianRational], rep: GammaRep = GAMMA):
    """Exact ``s^dagger gamma_0`` as a row vector."""
    return rep[0].rapply([v.conjugate() for v in s])


def exact_charge_conj_s(s, rep: GammaRep = GAMMA):
    """Exact ``conj(gamma_2 s)``."""
    return tuple(v.conjugate() for v in rep[2].apply(s))


def exact_charge_conj_c(w, rep: GammaRep = GAMMA):
    """Exact ``conj(w) gamma_2``."""
    return rep[2].rapply([v.conjugate() for v in w])


def clifford_check(rep: GammaRep = GAMMA, n_spinors: int = 20, n_timelike: int = 10,
                   seed: int = 0) -> CliffordReport:
    """Verify the gamma-matrix identities in exact arithmetic.

    Checks all 16 anticommutators against ``2 eta 1``, the 4 adjoint
    relations, the 4 charge-conjugation relations
    ``conj(gamma_mu) = -gamma_2 gamma_mu gamma_2^{-1}``, the intertwining
    ``A Cs = -Cc A`` on random exact spinors and positivity of
    ``gamma_0 gamma(n)`` for random future timelike ``n`` via leading
    principal minors.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    report = CliffordReport()
    one = ExactMatrix.identity(4)
    for mu in range(4):
        for nu in range(4):
            ac = rep[mu] @ rep[nu] + rep[nu] @ rep[mu]
            expected = one.scale(2 * ETA[mu]) if mu == nu else ExactMatrix.zeros(4)
            report.add(f"anticommutator[{mu},{nu}]", ac == expected)
    for mu in range(4):
        target = rep[mu] if mu == 0 else -rep[mu]
        report.add(f"adjoint[{mu}]", rep[mu].dagger() == target)
    g2inv = rep[2].inverse()
    for mu in range(4):
        report.add(f"conjugation[{mu}]", rep[mu].conj() == -(rep[2] @ rep[mu] @ g2inv))
    for k in range(n_spinors):
        s = _random_exact_spinor(rng)
        lhs = exact_adjunction(exact_charge_conj_s(s, rep), rep)
        rhs = exact_charge_conj_c(exact_adjunction(s, rep), rep)
        report.add(f"intertwining[{k}]", all(a == -b for a, b in zip(lhs, rhs)))
    for k in range(n_timelike):
        n = _random_future_timelike(rng)
        slash = ExactMatrix.zeros(4)
        for mu in range(4):
            slash = slash + rep[mu].scale(n[mu])
        minors = (rep[0] @ slash).leading_minors()
        report.add(f"positivity[{k}]", all(m.im == 0 and m.re > 0 for m in minors))
    report.runtime = time.perf_counter() - start
    return report


def _random_future_timelike(rng):
    while True:
        spatial = [Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 9))) for _ in range(3)]
        n0 = Fraction(int(rng.integers(1, 60)), int(rng.integers(1, 5)))
        if n0 * n0 > sum(v * v for v in spatial):
            return [n0, *spatial]


# pointwise maps on sections

def adjunction(s: Section) -> Section:
    """``A(s) = s^dagger gamma_0`` (a cospinor)."""
    return Section(s.lattice, np.conj(s.values) @ _G[0], "complex", dual=True)


def adjunction_inverse(w: Section) -> Section:
    """``A^{-1}(w) = gamma_0 conj(w)``."""
    return Section(w.lattice, np.conj(w.values) @ _G[0].T, "complex", dual=False)


def charge_conj_s(s: Section) -> Section:
    """``Cs(s) = conj(gamma_2 s)``."""
    return Section(s.lattice, np.conj(s.values @ _G[2].T), "complex", dual=False)


def charge_conj_c(w: Section) -> Section:
    """``Cc(w) = conj(w) gamma_2``."""
    return Section(w.lattice, np.conj(w.values) @ _G[2], "complex", dual=True)


# geometry

_T = sp.Symbol("t", real=True)


@dataclass(frozen=True, eq=False)
class CoframeData:
    """Comoving coframe data of a homogeneous lattice metric.

    Attributes
    ----------
    lapse_n, scale, hubble, lapse_dot : ndarray, shape (n_t,)
        ``N``, ``a``, ``H = a'/(a N)`` and ``N'``.
    curvature : ndarray, shape (n_t,)
        Four-dimensional scalar curvature ``6 (H'/N + 2 H^2)``.
    """

    lattice: SpacetimeLattice
    lapse_n: np.ndarray
    scale: np.ndarray
    hubble: np.ndarray
    lapse_dot: np.ndarray
    curvature: np.ndarray

    @classmethod
    def from_lattice(cls, lat: SpacetimeLattice) -> "CoframeData":
        if not lat.is_homogeneous():
            raise LatticeError("the reduced Dirac model needs an x-independent metric")
        t = lat.t
        prof = lat.profiles
        if prof and not (prof["lapse"].free_symbols | prof["metric"].free_symbols) - {_T}:
            n_expr = positive_root(prof["lapse"])
            a_expr = positive_root(prof["metric"])
            h_expr = sp.diff(a_expr, _T) / (a_expr * n_expr)
            r_expr = 6 * (sp.diff(h_expr, _T) / n_expr + 2 * h_expr ** 2)
            ev = lambda e: np.broadcast_to(  # noqa: E731
                np.asarray(sp.lambdify(_T, e, "numpy")(t), dtype=float), t.shape).copy()
            n, a = ev(n_expr), ev(a_expr)
            hub, ndot, curv = ev(h_expr), ev(sp.diff(n_expr, _T)), ev(r_expr)
        else:
            n = np.sqrt(lat.lapse[:, 0])
            a = np.sqrt(lat.spatial_metric[:, 0])
            d = lambda f: np.gradient(f, lat.delta_t, edge_order=2)  # noqa: E731
            hub = d(a) / (a * n)
            ndot = d(n)
            curv = 6 * (d(hub) / n + 2 * hub ** 2)
        return cls(lat, n, a, hub, ndot, curv)

    @property
    def coframe(self) -> np.ndarray:
        """Coframe components ``e^mu_nu``, shape (n_t, 4, 4), diagonal."""
        out = np.zeros((self.lattice.n_t, 4, 4))
        out[:, 0, 0] = self.lapse_n
        for i in (1, 2, 3):
            out[:, i, i] = self.scale
        return out

    @property
    def christoffel(self) -> np.ndarray:
        """``Gamma^rho_{mu nu} = e^rho(nabla_{eps_mu} eps_nu)``, shape (n_t, 4, 4, 4)."""
        g = np.zeros((self.lattice.n_t, 4, 4, 4))
        for i in (1, 2, 3):
            g[:, 0, i, i] = self.hubble
            g[:, i, i, 0] = self.hubble
        return g

    def metric_residual(self) -> float:
        """``max |eta_{mn} e^m e^n - g|`` against the lattice samples."""
        e = self.coframe
        g = np.einsum("m,tma,tmb->tab", np.array(ETA, float), e, e)
        lat = self.lattice
        return float(max(np.max(np.abs(g[:, 0, 0] - lat.lapse[:, 0])),
                         np.max(np.abs(g[:, 1, 1] + lat.spatial_metric[:, 0]))))

    def metricity_residual(self) -> float:
        """``max |Gamma^s_{mn} eta_{rs} + Gamma^s_{mr} eta_{ns}|``."""
        g = self.christoffel
        eta = np.diag(np.array(ETA, float))
        lowered = np.einsum("tsmn,rs->tmnr", g, eta)
        return float(np.max(np.abs(lowered + np.swapaxes(lowered, 2, 3))))

    def connection(self) -> np.ndarray:
        """Spin connection ``Omega_mu = 1/4 Gamma^r_{mu nu} gamma_r gamma^nu``.

        Shape (n_t, 4, 4, 4): time, frame label, spinor matrix.
        """
        gam = self.christoffel
        g_up = np.stack([_G[nu] * ETA[nu] for nu in range(4)])
        pair = np.einsum("rab,nbc->rnac", _G, g_up)
        return 0.25 * np.einsum("tmrn,rnac->tmac", gam.transpose(0, 2, 1, 3), pair)


def nabla_gamma_algebraic(hubble=GaussianRational(3, 0)) -> bool:
    """Exact check of ``[Omega_mu, gamma_nu] = Gamma^r_{mu nu} gamma_r``.

    The comoving connection is linear in ``H``, so one exact rational value
    covers all of them.
    """
    h = GaussianRational.coerce(hubble)
    g = GAMMA
    omega = [ExactMatrix.zeros(4)] + [(g[0] @ g[i]).scale(-h / 2) for i in (1, 2, 3)]

    def christoffel(r, m, n):
        if r == 0 and m == n and m > 0:
            return h
        if n == 0 and r == m and m > 0:
            return h
        return GaussianRational()

    for mu in range(4):
        for nu in range(4):
            lhs = omega[mu] @ g[nu] - g[nu] @ omega[mu]
            rhs = ExactMatrix.zeros(4)
            for r in range(4):
                c = christoffel(r, mu, nu)
                if c:
                    rhs = rhs + g[r].scale(c)
            if lhs != rhs:
                return False
    return True


@dataclass(frozen=True, eq=False)
class DiracModel:
    """Spinor side of the reduced Dirac field with mass ``m``."""

    lattice: SpacetimeLattice
    mass: float = 1.0

    fiber_dim = 4
    kind = "complex"

    @cached_property
    def coframe(self) -> CoframeData:
        return CoframeData.from_lattice(self.lattice)

    @cached_property
    def weights(self) -> np.ndarray:
        """Reduced four-dimensional volume ``N a^3 dt dx`` per lattice point."""
        cf, lat = self.coframe, self.lattice
        w = cf.lapse_n * cf.scale ** 3 * lat.delta_t * lat.delta_x
        return np.broadcast_to(w[:, None], lat.shape).copy()

    @cached_property
    def _grid_derivatives(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Skew time stencil (up, down) and spatial coefficient.

        ``T s = (1/(2 dt w_n)) [q_{n+1/2} s_{n+1} - q_{n-1/2} s_{n-1}]`` with
        ``q = a^3`` averaged to half steps and ``w = N a^3``.
        """
        cf, lat = self.coframe, self.lattice
        q = cf.scale ** 3
        w = cf.lapse_n * q
        q_half = 0.5 * (q[:-1] + q[1:]) / (2 * lat.delta_t)
        up = np.append(q_half, 0.0) / w
        down = -np.insert(q_half, 0, 0.0) / w
        xc = 1.0 / (2 * lat.delta_x * cf.scale)
        b = lambda v: np.broadcast_to(v[:, None], lat.shape)  # noqa: E731
        return b(up), b(down), b(xc)

    def _slash(self, left: bool) -> sps.csr_matrix:
        up, down, xc = self._grid_derivatives
        g0, g1 = (_G[0].T, _G[1].T) if left else (_G[0], _G[1])
        e = lambda c, m: c[..., None, None] * m  # noqa: E731
        terms = [(1, 0, e(up, g0)), (-1, 0, e(down, g0)),
                 (0, 1, e(-xc, g1)), (0, -1, e(xc, g1))]
        return go.stencil_matrix(self.lattice.shape, 4, terms)

    @cached_property
    def slash_matrix(self) -> sps.csr_matrix:
        """Discrete ``nabla-slash`` on spinors."""
        return self._slash(left=False)

    @cached_property
    def coslash_matrix(self) -> sps.csr_matrix:
        """Discrete ``nabla-slash`` on cospinors (right action of gammas)."""
        return self._slash(left=True)

    @cached_property
    def operator(self) -> OperatorHandle:
        size = self.slash_matrix.shape[0]
        ps = sps.csr_matrix(1j * self.slash_matrix - self.mass * sps.identity(size))
        gram = sps.kron(sps.diags(self.weights.reshape(-1)), sps.csr_matrix(_G[0]))
        return OperatorHandle(
            lattice=self.lattice, fiber_dim=4, matrix=ps, pairing=sps.csr_matrix(gram),
            pairing_kind="sesquilinear", scalar_kind="complex",
            stepping_form=self.square_form,
            factorization=go.Factorization(ps, sps.csr_matrix(ps @ ps)),
            formally_self_adjoint=True, name="P_s")

    @cached_property
    def cospinor(self) -> "CospinorModel":
        return CospinorModel(self)

    @cached_property
    def square_form(self) -> go.NormallyHyperbolicForm:
        return dirac_square_form(self)

    @cached_property
    def dual_pairing(self) -> sps.csr_matrix:
        """Gram matrix of ``<w, s> = int w(s) dvol``."""
        return sps.csr_matrix(sps.kron(sps.diags(self.weights.reshape(-1)), sps.identity(4)))

    def dual_pair(self, w: Section, s: Section) -> complex:
        return complex(w.flat @ (self.dual_pairing @ s.flat))

    def section(self, values) -> Section:
        return self.operator.section(values)

    def observable(self, values) -> Observable:
        return Observable(values if isinstance(values, Section) else self.section(values), self)

    def pair(self, a: Section, b: Section) -> complex:
        """``<s, t>_s = int s^dagger gamma_0 t dvol``."""
        return complex(self.operator.pair(a, b))

    def restrict(self, start: int, stop: int) -> "DiracModel":
        return DiracModel(self.lattice.restrict(start, stop), self.mass)

    def gram_form(self, a: Observable, b: Observable) -> complex:
        return hermitian_form(a, b)

    def on_shell_residual(self, s: Section) -> float:
        op = self.operator
        scale = s.norm_inf() * abs(op.matrix).sum(axis=1).max()
        return 0.0 if scale == 0 else go.interior_residual(op, s) / scale


@dataclass(frozen=True, eq=False)
class CospinorModel:
    """Cospinor side: ``P_c = -i nabla-slash - m`` with ``<w, z>_c = <z, A^{-1} w>``."""

    spinor: DiracModel

    fiber_dim = 4
    kind = "complex"

    @property
    def lattice(self) -> SpacetimeLattice:
        return self.spinor.lattice

    @cached_property
    def operator(self) -> OperatorHandle:
        base = self.spinor
        size = base.coslash_matrix.shape[0]
        pc = sps.csr_matrix(-1j * base.coslash_matrix - base.mass * sps.identity(size))
        gram = sps.kron(sps.diags(base.weights.reshape(-1)), sps.csr_matrix(_G[0].T))
        return OperatorHandle(
            lattice=self.lattice, fiber_dim=4, matrix=pc, pairing=sps.csr_matrix(gram),
            pairing_kind="sesquilinear", scalar_kind="complex",
            factorization=go.Factorization(pc, sps.csr_matrix(pc @ pc)),
            formally_self_adjoint=True, dual=True, name="P_c")

    def section(self, values) -> Section:
        return self.operator.section(values)

    def observable(self, values) -> Observable:
        return Observable(values if isinstance(values, Section) else self.section(values), self)

    def pair(self, a: Section, b: Section) -> complex:
        return complex(self.operator.pair(a, b))

    def restrict(self, start: int, stop: int) -> "CospinorModel":
        return CospinorModel(self.spinor.restrict(start, stop))

    def gram_form(self, a: Observable, b: Observable) -> complex:
        return cospinor_hermitian_form(a, b)


# differential operators

def _ddt(v: np.ndarray, dt: float) -> np.ndarray:
    return np.gradient(v, dt, axis=0, edge_order=2)


def _ddx(v: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * dx)


def _frame_derivative(model: DiracModel, mu: int, v: np.ndarray) -> np.ndarray:
    """Centered-difference ``eps_mu(v)`` for reduced fields."""
    cf, lat = model.coframe, model.lattice
    shape = (-1,) + (1,) * (v.ndim - 1)
    if mu == 0:
        return _ddt(v, lat.delta_t) / cf.lapse_n.reshape(shape)
    if mu == 1:
        return _ddx(v, lat.delta_x) / cf.scale.reshape(shape)
    return np.zeros_like(v)


def _direction(X) -> np.ndarray:
    if isinstance(X, (int, np.integer)):
        out = np.zeros(4)
        out[int(X)] = 1.0
        return out
    out = np.asarray(X, dtype=float)
    if out.shape != (4,):
        raise ValueError("direction must be a frame index or 4 frame components")
    return out


def spin_covariant_derivative(model: DiracModel, X, s: Section) -> Section:
    """Spin covariant derivative along a constant frame direction ``X``.

    Spinors get ``d_X s + Omega_X s``; cospinors get ``d_X w - w Omega_X``,
    the sign fixed by the Leibniz rule.
    """
    comp = _direction(X)
    omega = model.coframe.connection()
    out = np.zeros_like(s.values)
    for mu in range(4):
        if comp[mu] == 0:
            continue
        conn = omega[:, mu][:, None]
        if s.dual:
            term = _frame_derivative(model, mu, s.values) - np.einsum("tja,tab->tjb", s.values, conn[:, 0])
        else:
            term = _frame_derivative(model, mu, s.values) + np.einsum("tab,tjb->tja", conn[:, 0], s.values)
        out = out + comp[mu] * term
    return s.like(out)


def leibniz_residual(model: DiracModel, X, w: Section, s: Section) -> np.ndarray:
    """``X(w(s)) - (nabla_X w)(s) - w(nabla_X s)`` as an (n_t, n_x) array."""
    comp = _direction(X)
    contraction = np.einsum("tja,tja->tj", w.values, s.values)
    d = sum(comp[mu] * _frame_derivative(model, mu, contraction) for mu in range(4))
    dw = spin_covariant_derivative(model, comp, w).values
    ds = spin_covariant_derivative(model, comp, s).values
    return d - np.einsum("tja,tja->tj", dw, s.values) - np.einsum("tja,tja->tj", w.values, ds)


def nabla_gamma_residual(model: DiracModel, mu: int, Y: np.ndarray, s: Section) -> np.ndarray:
    """``nabla_mu(gamma(Y) s) - gamma(nabla_mu Y) s - gamma(Y) nabla_mu s``.

    ``Y`` holds frame components of a vector field, shape (n_t, n_x, 4).
    Vanishes identically in the continuum because ``nabla gamma = 0``.
    """
    cf = model.coframe
    gam = cf.christoffel
    gy = np.einsum("tjn,nab,tjb->tja", Y, _G, s.values)
    lhs = spin_covariant_derivative(model, mu, s.like(gy)).values
    dY = _frame_derivative(model, mu, Y) + np.einsum("trn,tjn->tjr", gam[:, :, mu, :], Y)
    t1 = np.einsum("tjn,nab,tjb->tja", dY, _G, s.values)
    ds = spin_covariant_derivative(model, mu, s).values
    t2 = np.einsum("tjn,nab,tjb->tja", Y, _G, ds)
    return lhs - t1 - t2


def dirac_apply(model: DiracModel, s: Section) -> Section:
    """``P_s s = i nabla-slash s - m s``."""
    return model.operator.apply(s)


def codirac_apply(model: DiracModel, w: Section) -> Section:
    """``P_c w = -i nabla-slash w - m w`` for cospinors."""
    return model.cospinor.operator.apply(w)


def slash_apply(model: DiracModel, s: Section) -> Section:
    """Discrete ``nabla-slash`` on a spinor or cospinor section."""
    mat = model.coslash_matrix if s.dual else model.slash_matrix
    return s.like(mat @ s.flat)


def dirac_square_form(model: DiracModel, mass: float | None = None) -> go.NormallyHyperbolicForm:
    """Normally hyperbolic form of ``-P_s^2 = slash^2 + 2 i m slash - m^2``.

    With ``mass = 0`` this is ``box_nabla + R/4``, i.e. ``slash^2`` itself.

    Coefficients: ``B^t = (3H/N - N'/N^3) + 2 i m gamma_0 / N``,
    ``B^x = (H gamma_0 gamma_1 - 2 i m gamma_1)/a`` and
    ``C = R/4 - 3H^2/4 - m^2 + 3 i m H gamma_0``.
    """
    m = model.mass if mass is None else mass
    cf, lat = model.coframe, model.lattice
    n, a, hub = cf.lapse_n, cf.scale, cf.hubble
    e = lambda v: v[:, None, None, None]  # noqa: E731
    bt = e(3 * hub / n - cf.lapse_dot / n ** 3) * _I4 + e(2j * m / n) * _G[0]
    bx = e(hub / a) * (_G[0] @ _G[1]) + e(-2j * m / a) * _G[1]
    c = e(cf.curvature / 4 - 0.75 * hub ** 2 - m ** 2) * _I4 + e(3j * m * hub) * _G[0]
    shape = lat.shape + (4, 4)
    return go.NormallyHyperbolicForm(lat, 4, np.broadcast_to(bt, shape),
                                     np.broadcast_to(bx, shape), np.broadcast_to(c, shape))


def dirac_green(model, f: Section, which: str = "retarded") -> Section:
    """``E^pm = P F^pm`` for spinors, or the cospinor analogue for dual sections."""
    op = model.cospinor.operator if (f.dual and isinstance(model, DiracModel)) else model.operator
    return go.green_apply(op, f, which)


def hermitian_form(a: Observable, b: Observable) -> complex:
    """``h_s([s], [t]) = -i <s, E_s t>_s``."""
    if a.model is not b.model:
        raise ValueError("observables belong to different models")
    return -1j * a.model.pair(a.representative, b.propagated)


def cospinor_hermitian_form(a: Observable, b: Observable) -> complex:
    """``h_c([w], [z]) = i <w, E_c z>_c``."""
    if a.model is not b.model:
        raise ValueError("observables belong to different models")
    return 1j * a.model.pair(a.representative, b.propagated)


def hermitian_on_slice(phi: Section, psi: Section, slc: CauchySlice, model: DiracModel,
                       rtol: float = 1e-6) -> complex:
    """Slice form ``int (A phi)(n-slash psi) dSigma`` with ``n-slash = gamma_0``.

    ``dSigma`` is the reduced induced volume ``a^3 dx``.
    """
    from .scalar import OffShellError
    for name, f in (("phi", phi), ("psi", psi)):
        r = model.on_shell_residual(f)
        if r > rtol:
            raise OffShellError(f"{name} is off shell (relative residual {r:.3e})")
    n = slc.t_index
    cf, lat = model.coframe, model.lattice
    a, b = phi.values[n], psi.values[n]
    density = np.einsum("ja,ab,bc,jc->j", np.conj(a), _G[0], _G[0], b)
    return complex(np.sum(density) * cf.scale[n] ** 3 * lat.delta_x)
