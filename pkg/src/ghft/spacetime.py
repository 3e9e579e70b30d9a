"""Lattice models of globally hyperbolic spacetimes on a cylinder R x S^1.

The line element is ``ds^2 = beta dt^2 - h dx^2`` with lapse ``beta(t, x)`` and
spatial metric ``h(t, x)`` sampled on a uniform (t, x) grid that is periodic in
x. The module provides the lattice container, builders for the standard
families, causal and chronological cones, volume weights and t-slices.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import sympy as sp

__all__ = [
    "Family",
    "SupportClass",
    "SpacetimeLattice",
    "SupportMask",
    "CauchySlice",
    "ConeWrapWarning",
    "LatticeError",
    "build_spacetime",
    "causal_cone",
    "volume_weights",
    "cauchy_slice",
    "classify_support",
    "write_pgm",
    "read_pgm",
]

Profile = Union[None, float, int, str, Callable]

_T, _X = sp.symbols("t x", real=True)


class Family(str, enum.Enum):
    """Geometry families that :func:`build_spacetime` knows about."""

    MINKOWSKI = "Minkowski"
    ULTRASTATIC = "Ultrastatic"
    FRW = "FRW"
    DESITTER = "DeSitter"
    CUSTOM = "Custom"


class SupportClass(str, enum.Enum):
    COMPACT = "Compact"
    PAST_COMPACT = "PastCompact"
    FUTURE_COMPACT = "FutureCompact"
    TIMELIKE_COMPACT = "TimelikeCompact"
    SPACELIKE_COMPACT = "SpacelikeCompact"
    FULL = "Full"


class LatticeError(ValueError):
    """Raised for invalid geometry data or out-of-range lattice indices."""


class ConeWrapWarning(UserWarning):
    """A causal cone may have wrapped around the spatial circle."""


@dataclass(frozen=True, eq=False)
class SpacetimeLattice:
    """Sampled metric ``beta dt^2 - h dx^2`` on an ``(n_t, n_x)`` grid.

    Attributes
    ----------
    n_t, n_x : int
        Number of time samples and of spatial samples on the circle.
    delta_t, delta_x : float
        Coordinate steps.
    lapse, spatial_metric, scalar_curvature : ndarray, shape (n_t, n_x)
        Samples of ``beta``, ``h`` and the two-dimensional scalar curvature.
    family : Family
        Tag of the geometry family.
    t0 : float
        Coordinate time of the first sample.
    profiles : dict
        Closed-form sympy expressions (keys ``"lapse"``, ``"metric"``) when the
        geometry was built from formulas; empty otherwise.
    """

    n_t: int
    n_x: int
    delta_t: float
    delta_x: float
    lapse: np.ndarray
    spatial_metric: np.ndarray
    scalar_curvature: np.ndarray
    family: Family = Family.CUSTOM
    t0: float = 0.0
    profiles: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.n_t, self.n_x)
        for name in ("lapse", "spatial_metric", "scalar_curvature"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise LatticeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise LatticeError(f"{name} contains non-finite samples")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.lapse <= 0):
            n, j = np.argwhere(self.lapse <= 0)[0]
            raise LatticeError(f"lapse is not positive at (t_index={n}, x_index={j})")
        if np.any(self.spatial_metric <= 0):
            n, j = np.argwhere(self.spatial_metric <= 0)[0]
            raise LatticeError(f"spatial metric is not positive at (t_index={n}, x_index={j})")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_x)

    @property
    def t(self) -> np.ndarray:
        """Coordinate times of the samples."""
        return self.t0 + self.delta_t * np.arange(self.n_t)

    @property
    def x(self) -> np.ndarray:
        """Coordinate positions on the circle."""
        return self.delta_x * np.arange(self.n_x)

    @property
    def length_x(self) -> float:
        return self.n_x * self.delta_x

    @property
    def light_speed(self) -> np.ndarray:
        """Coordinate light speed ``sqrt(beta/h)`` in cells per time step."""
        return np.sqrt(self.lapse / self.spatial_metric) * self.delta_t / self.delta_x

    def is_static(self) -> bool:
        return bool(np.all(self.lapse == self.lapse[:1]) and
                    np.all(self.spatial_metric == self.spatial_metric[:1]))

    def is_homogeneous(self, rtol: float = 1e-13) -> bool:
        """True when ``beta`` and ``h`` do not depend on x."""
        for arr in (self.lapse, self.spatial_metric):
            if np.any(np.abs(arr - arr[:, :1]) > rtol * np.abs(arr[:, :1])):
                return False
        return True

    def restrict(self, start: int, stop: int) -> "SpacetimeLattice":
        """Sub-lattice made of the time levels ``start <= n < stop``."""
        if not 0 <= start < stop <= self.n_t:
            raise LatticeError(f"invalid time band [{start}, {stop})")
        return SpacetimeLattice(
            n_t=stop - start, n_x=self.n_x, delta_t=self.delta_t,
            delta_x=self.delta_x, lapse=self.lapse[start:stop],
            spatial_metric=self.spatial_metric[start:stop],
            scalar_curvature=self.scalar_curvature[start:stop],
            family=self.family, t0=float(self.t[start]), profiles=dict(self.profiles))

    def refine(self, factor: int = 2) -> "SpacetimeLattice":
        """Same geometry and time window sampled ``factor`` times finer.

        Only lattices built from closed-form profiles can be refined.
        """
        if self.family != Family.MINKOWSKI and not self.profiles:
            raise LatticeError("only closed-form geometries can be refined")
        return build_spacetime(
            self.family, n_t=(self.n_t - 1) * factor + 1, n_x=self.n_x * factor,
            delta_t=self.delta_t / factor, delta_x=self.delta_x / factor,
            t0=self.t0, lapse=self.profiles.get("lapse"),
            spatial_metric=self.profiles.get("metric"))


@dataclass(frozen=True, eq=False)
class SupportMask:
    """Boolean mask over lattice points with a support-class hint."""

    mask: np.ndarray
    class_hint: SupportClass = SupportClass.COMPACT

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    def __or__(self, other: "SupportMask") -> "SupportMask":
        return SupportMask(self.mask | other.mask)

    def __and__(self, other: "SupportMask") -> "SupportMask":
        return SupportMask(self.mask & other.mask)

    def issubset(self, other: "SupportMask") -> bool:
        return not np.any(self.mask & ~other.mask)

    def violations(self, other: "SupportMask") -> int:
        """Number of points of ``self`` lying outside ``other``."""
        return int(np.count_nonzero(self.mask & ~other.mask))

    def isdisjoint(self, other: "SupportMask") -> bool:
        return not np.any(self.mask & other.mask)

    def any(self) -> bool:
        return bool(self.mask.any())

    def time_extent(self) -> tuple[int, int] | None:
        rows = np.flatnonzero(self.mask.any(axis=1))
        if rows.size == 0:
            return None
        return int(rows[0]), int(rows[-1])


@dataclass(frozen=True, eq=False)
class CauchySlice:
    """A t-slice with its unit-normal scale and induced volume weights."""

    t_index: int
    normal_scale: np.ndarray
    induced_volume: np.ndarray


def _sympify(profile, allowed):
    expr = sp.sympify(profile, locals={"t": _T, "x": _X})
    extra = expr.free_symbols - set(allowed)
    if extra:
        raise LatticeError(f"profile {profile!r} depends on unexpected symbols {sorted(map(str, extra))}")
    return expr


def _sample(profile: Profile, tt: np.ndarray, xx: np.ndarray, default: float):
    """Return (samples, sympy expression or None) for a profile spec."""
    if profile is None:
        return np.full(tt.shape, float(default)), sp.Float(default)
    if isinstance(profile, (int, float)):
        return np.full(tt.shape, float(profile)), sp.nsimplify(profile)
    if isinstance(profile, (str, sp.Expr)):
        expr = _sympify(profile, {_T, _X})
        fn = sp.lambdify((_T, _X), expr, "numpy")
        return np.broadcast_to(np.asarray(fn(tt, xx), dtype=float), tt.shape).copy(), expr
    if callable(profile):
        return np.broadcast_to(np.asarray(profile(tt, xx), dtype=float), tt.shape).copy(), None
    raise LatticeError(f"unsupported profile {profile!r}")


def positive_root(expr) -> sp.Expr:
    """``sqrt(expr)`` for an expression known to be positive.

    Avoids ``Abs`` factors from perfect squares such as ``a(t)**2``.
    """
    return sp.powdenest(sp.sqrt(expr), force=True)


def curvature_expression(lapse, metric) -> sp.Expr:
    """Closed-form two-dimensional scalar curvature of ``beta dt^2 - h dx^2``.

    The sign convention makes ``R = 2 a''/a`` for ``beta = 1``, ``h = a(t)^2``.
    """
    sb, sh = positive_root(lapse), positive_root(metric)
    return sp.simplify(2 / (sb * sh) * (sp.diff(sp.diff(sh, _T) / sb, _T)
                                        - sp.diff(sp.diff(sb, _X) / sh, _X)))


def _curvature_fd(lapse, metric, dt, dx):
    """Centered-difference version of :func:`curvature_expression`."""
    sb, sh = np.sqrt(lapse), np.sqrt(metric)

    def ddt(f):
        return np.gradient(f, dt, axis=0, edge_order=2)

    def ddx(f):
        return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * dx)

    return 2 / (sb * sh) * (ddt(ddt(sh) / sb) - ddx(ddx(sb) / sh))


def build_spacetime(family: Family | str = Family.MINKOWSKI, *, n_t: int = 64,
                    n_x: int = 64, delta_t: float | None = None,
                    delta_x: float | None = None, t0: float = 0.0,
                    scale_factor: Profile = None, lapse: Profile = None,
                    spatial_metric: Profile = None, radius: float = 1.0
                    ) -> SpacetimeLattice:
    """Build a lattice spacetime of a given family.

    Parameters
    ----------
    family : Family or str
        ``Minkowski``, ``Ultrastatic``, ``FRW``, ``DeSitter`` or ``Custom``.
    n_t, n_x : int
        Grid sizes, at least 8 each.
    delta_t, delta_x : float, optional
        Coordinate steps. ``delta_x`` defaults to ``1/32`` and ``delta_t`` to
        ``delta_x``.
    t0 : float
        Coordinate time of the first level.
    scale_factor : str, number or callable, optional
        ``a(t)`` for FRW (``h = a^2``).
    lapse : str, number or callable, optional
        ``beta(t)`` for FRW and ``beta(t, x)`` for Custom; defaults to 1.
    spatial_metric : str, number or callable, optional
        ``h(x)`` for Ultrastatic, ``h(t, x)`` for Custom.
    radius : float
        de Sitter radius ``R`` in ``a(t) = R cosh(t/R)``.

    Returns
    -------
    SpacetimeLattice

    Notes
    -----
    String profiles are parsed with sympy in the symbols ``t`` and ``x`` and
    give a closed-form curvature; callables give centered-difference
    curvature.
    """
    family = Family(family)
    if n_t < 8 or n_x < 8:
        raise LatticeError("grid sizes must be at least 8")
    delta_x = 1.0 / 32 if delta_x is None else float(delta_x)
    delta_t = delta_x if delta_t is None else float(delta_t)
    if not (delta_t > 0 and delta_x > 0 and math.isfinite(delta_t) and math.isfinite(delta_x)):
        raise LatticeError("steps must be positive and finite")
    tt, xx = np.meshgrid(t0 + delta_t * np.arange(n_t), delta_x * np.arange(n_x), indexing="ij")

    if family == Family.MINKOWSKI:
        lapse, spatial_metric = None, None
    elif family == Family.ULTRASTATIC:
        if lapse is not None:
            raise LatticeError("ultrastatic lattices have unit lapse")
        if isinstance(spatial_metric, (str, sp.Expr)) and _T in _sympify(spatial_metric, {_T, _X}).free_symbols:
            raise LatticeError("ultrastatic spatial metric must not depend on t")
    elif family == Family.FRW:
        if scale_factor is None and spatial_metric is None:
            raise LatticeError("FRW needs a scale factor profile")
        if scale_factor is not None:
            if callable(scale_factor) and not isinstance(scale_factor, sp.Expr):
                a = scale_factor
                spatial_metric = lambda t, x: np.asarray(a(t, x)) ** 2  # noqa: E731
            else:
                spatial_metric = _sympify(scale_factor, {_T}) ** 2
    elif family == Family.DESITTER:
        if spatial_metric is None:
            spatial_metric = (radius * sp.cosh(_T / radius)) ** 2
        lapse = None

    beta, beta_expr = _sample(lapse, tt, xx, 1.0)
    h, h_expr = _sample(spatial_metric, tt, xx, 1.0)
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(h))):
        raise LatticeError("profile samples are not finite")

    profiles = {}
    if family == Family.MINKOWSKI:
        curv = np.zeros((n_t, n_x))
    elif beta_expr is not None and h_expr is not None:
        profiles = {"lapse": beta_expr, "metric": h_expr}
        r_expr = curvature_expression(beta_expr, h_expr)
        fn = sp.lambdify((_T, _X), r_expr, "numpy")
        curv = np.broadcast_to(np.asarray(fn(tt, xx), dtype=float), tt.shape).copy()
    else:
        curv = _curvature_fd(beta, h, delta_t, delta_x)
    return SpacetimeLattice(n_t=n_t, n_x=n_x, delta_t=delta_t, delta_x=delta_x,
                            lapse=beta, spatial_metric=h, scalar_curvature=curv,
                            family=family, t0=float(t0), profiles=profiles)


def volume_weights(lat: SpacetimeLattice) -> np.ndarray:
    """Quadrature weights ``sqrt(beta h) dt dx`` of the metric volume form."""
    return np.sqrt(lat.lapse * lat.spatial_metric) * lat.delta_t * lat.delta_x


def cauchy_slice(lat: SpacetimeLattice, t_index: int) -> CauchySlice:
    """The slice ``t = t[t_index]`` with normal scale ``beta^{-1/2}``."""
    if not 0 <= t_index < lat.n_t:
        raise LatticeError(f"t_index {t_index} outside [0, {lat.n_t})")
    return CauchySlice(t_index=int(t_index),
                       normal_scale=1 / np.sqrt(lat.lapse[t_index]),
                       induced_volume=np.sqrt(lat.spatial_metric[t_index]) * lat.delta_x)


def _as_mask(lat, seed) -> np.ndarray:
    m = seed.mask if isinstance(seed, SupportMask) else np.asarray(seed, dtype=bool)
    if m.shape != lat.shape:
        raise LatticeError(f"mask shape {m.shape} does not match lattice {lat.shape}")
    return m


def causal_cone(lat: SpacetimeLattice, seed, direction: str = "future",
                kind: str = "J", rounding: str = "cumulative",
                tol: float = 1e-9) -> SupportMask:
    """Discrete causal (``J``) or chronological (``I``) future or past of a set.

    A slack field ``s`` is propagated level by level: seed points start at
    zero and each step adds the local light speed ``c`` (in cells) and
    subtracts the spatial distance travelled. A point belongs to ``J`` when
    ``s > -1`` (outward rounding) and to ``I`` when ``s > 0`` (inward
    rounding).

    Parameters
    ----------
    lat : SpacetimeLattice
    seed : SupportMask or bool array
        Non-empty seed set.
    direction : {"future", "past"}
    kind : {"J", "I"}
    rounding : {"cumulative", "per_step"}
        ``cumulative`` accumulates fractional reach along the way.
        ``per_step`` rounds the reach of every single step up to whole cells,
        which is the numerical domain of influence of one-cell stencils.
    tol : float
        Slack tolerance guarding the rounding thresholds.

    Returns
    -------
    SupportMask
    """
    m = _as_mask(lat, seed)
    if not m.any():
        raise LatticeError("seed must be non-empty")
    if direction not in ("future", "past"):
        raise ValueError("direction must be 'future' or 'past'")
    if kind not in ("J", "I"):
        raise ValueError("kind must be 'J' or 'I'")
    speed = lat.light_speed
    if rounding == "per_step":
        speed = np.ceil(speed - tol)
    elif rounding != "cumulative":
        raise ValueError("rounding must be 'cumulative' or 'per_step'")
    if direction == "past":
        m, speed = m[::-1], speed[::-1]

    n_t, n_x = lat.shape
    reach = int(math.ceil(speed.max())) + 1
    slack = np.full((n_t, n_x), -np.inf)
    slack[0] = np.where(m[0], 0.0, -np.inf)
    total_reach = 0.0
    for n in range(1, n_t):
        prev = slack[n - 1]
        step = np.maximum(speed[n - 1], speed[n])
        best = np.full(n_x, -np.inf)
        for k in range(-reach, reach + 1):
            # a move of k cells is allowed with the speed of either endpoint
            c = np.maximum(step, np.roll(step, k))
            best = np.maximum(best, np.roll(prev, k) + c - abs(k))
        slack[n] = np.where(m[n], np.maximum(best, 0.0), best)
        if np.isfinite(prev).any():
            total_reach += float(step.max())

    threshold = -1.0 + tol if kind == "J" else tol
    out = slack > threshold
    cols = np.flatnonzero(m.any(axis=0))
    span = _circular_span(cols, n_x)
    if 2 * total_reach + span >= n_x:
        warnings.warn("causal cone may wrap around the spatial circle", ConeWrapWarning,
                      stacklevel=2)
    if direction == "past":
        out = out[::-1]
    return SupportMask(out, classify_support(out))


def _circular_span(cols: np.ndarray, n: int) -> int:
    if cols.size == 0:
        return 0
    gaps = np.diff(np.concatenate([cols, [cols[0] + n]]))
    return int(n - gaps.max() + 1)


def classify_support(mask, margin: int = 1) -> SupportClass:
    """Support class of a mask on the spatially compact lattice.

    A mask is past (future) compact when it stays at least ``margin`` levels
    away from the first (last) time level. Since the circle is compact,
    timelike compact and compact coincide; both are reported as ``Compact``.
    """
    m = np.asarray(mask.mask if isinstance(mask, SupportMask) else mask, dtype=bool)
    if m.all():
        return SupportClass.FULL
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return SupportClass.COMPACT
    pc = rows[0] >= margin
    fc = rows[-1] <= m.shape[0] - 1 - margin
    if pc and fc:
        return SupportClass.COMPACT
    if pc:
        return SupportClass.PAST_COMPACT
    if fc:
        return SupportClass.FUTURE_COMPACT
    return SupportClass.SPACELIKE_COMPACT


def write_pgm(path, mask) -> None:
    """Write a mask as a binary 8-bit PGM (P5): 0 outside, 255 inside.

    Rows are time levels, columns spatial samples.
    """
    m = np.asarray(mask.mask if isinstance(mask, SupportMask) else mask, dtype=bool)
    height, width = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.where(m, 255, 0).astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 mask written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    width, height = int(parts[1]), int(parts[2])
    pixels = np.frombuffer(parts[4][: width * height], dtype=np.uint8)
    return pixels.reshape(height, width) > 127
