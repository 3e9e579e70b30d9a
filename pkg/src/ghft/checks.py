"""Check suites and convergence studies shared by the command line and the tests.

Every suite returns a :class:`SuiteResult` holding report rows
``(suite, check, measured, threshold, passed)`` together with tables and
masks to be written as artifacts. Randomness comes from the generator the
caller passes in, so a fixed seed reproduces every number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import algebra as al
from . import dirac as dr
from . import greenops as go
from . import proca as pr
from . import scalar as sc
from .sources import bump, bump_profile
from .spacetime import SpacetimeLattice, causal_cone, cauchy_slice, volume_weights

__all__ = [
    "Numerics",
    "ModelParams",
    "Check",
    "SuiteResult",
    "ConvergenceRow",
    "FIELDS",
    "SUITES",
    "make_model",
    "random_sources",
    "disjoint_pairs",
    "green_identity_residuals",
    "causality_measure",
    "symmetry_measure",
    "nondegeneracy_measure",
    "exact_sequence_measures",
    "time_slice_measures",
    "registry_property_failures",
    "smooth_spinors",
    "dirac_square_residual",
    "field_suite",
    "greenops_suite",
    "algebra_suite",
    "run_suite",
    "fit_order",
    "IDENTITIES",
    "convergence_study",
]

FIELDS = ("scalar", "dirac", "proca")
SUITES = ("scalar", "dirac", "proca", "algebra", "greenops")


@dataclass(frozen=True)
class Numerics:
    """Sample sizes, tolerances and the partition band of a scenario."""

    seed: int = 0
    sources: int = 20
    pairs: int = 20
    observables: int = 7
    algebra_samples: int = 50
    algebra_pairs: int = 3
    band: tuple[int, int] | None = None
    cfl: float = 1.0
    levels: int = 3
    green_tol: float = 1e-9
    causality_tol: float = 1e-12
    symmetry_tol: float = 1e-12
    split_tol: float = 1e-10
    equality_tol: float = 1e-8
    symbol_tol: float = 1e-3
    order_min: float = 1.8
    order_band: float = 0.2

    def band_for(self, n_t: int) -> tuple[int, int]:
        return self.band if self.band is not None else (n_t // 3, (2 * n_t) // 3)


@dataclass(frozen=True)
class ModelParams:
    scalar_mass_sq: float = 1.0
    scalar_coupling: float = 0.0
    dirac_mass: float = 1.0
    proca_mass_sq: float = 1.0


@dataclass(frozen=True)
class Check:
    suite: str
    check: str
    measured: float
    threshold: float
    passed: bool


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, list[list]] = field(default_factory=dict)
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    def at_most(self, check: str, measured: float, threshold: float) -> None:
        measured = float(measured)
        self.checks.append(Check(self.name, check, measured, threshold,
                                 bool(measured <= threshold)))

    def at_least(self, check: str, measured: float, threshold: float) -> None:
        measured = float(measured)
        self.checks.append(Check(self.name, check, measured, threshold,
                                 bool(measured >= threshold)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# models and sources

def make_model(name: str, lat: SpacetimeLattice, params: ModelParams = ModelParams()):
    if name == "scalar":
        return sc.ScalarModel(lat, params.scalar_mass_sq, params.scalar_coupling)
    if name == "dirac":
        return dr.DiracModel(lat, params.dirac_mass)
    if name == "proca":
        return pr.ProcaModel(lat, params.proca_mass_sq)
    raise ValueError(f"unknown field {name!r}")


def _fiber(model) -> tuple[int, bool]:
    return model.fiber_dim, model.kind == "complex"


def _direction(model, rng) -> np.ndarray:
    d, cplx = _fiber(model)
    v = rng.standard_normal(d)
    return v + 1j * rng.standard_normal(d) if cplx else v


def _bump_source(model, rng, t_center, x_center, radius_cells) -> np.ndarray:
    lat = model.lattice
    shape = bump(lat, t_center, x_center, radius_cells * lat.delta_t, radius_cells * lat.delta_x)
    return shape[..., None] * _direction(model, rng)


def random_sources(model, rng: np.random.Generator, count: int,
                   t_range: tuple[float, float] = (0.4, 0.6),
                   radius_cells: tuple[int, int] = (4, 8)) -> np.ndarray:
    """Stack of random bump sources, shape ``(n_t, n_x, d, count)``."""
    lat = model.lattice
    span = lat.t[-1] - lat.t[0]
    out = []
    for _ in range(count):
        tc = lat.t[0] + (t_range[0] + (t_range[1] - t_range[0]) * rng.random()) * span
        xc = rng.random() * lat.length_x
        rc = int(rng.integers(radius_cells[0], radius_cells[1] + 1))
        out.append(_bump_source(model, rng, tc, xc, rc))
    return np.stack(out, axis=-1)


def disjoint_pairs(model, rng: np.random.Generator, count: int,
                   radius_cells: tuple[int, int] = (3, 5)) -> np.ndarray:
    """Pairs of sources at antipodal positions of the spatial circle.

    Returns a stack of ``2 count`` sources where entries ``2k`` and ``2k+1``
    are causally disjoint: the second does not meet the discrete causal
    future or past of the first.

    Raises
    ------
    ValueError
        If the spatial circle is too short for the chosen radii.
    """
    lat = model.lattice
    span = lat.t[-1] - lat.t[0]
    out = []
    for _ in range(count):
        tc = lat.t[0] + (0.45 + 0.1 * rng.random()) * span
        xc = rng.random() * lat.length_x
        rf, rh = (int(rng.integers(radius_cells[0], radius_cells[1] + 1)) for _ in range(2))
        f = _bump_source(model, rng, tc, xc, rf)
        h = _bump_source(model, rng, tc + 0.02 * span * (rng.random() - 0.5),
                         (xc + 0.5 * lat.length_x) % lat.length_x, rh)
        fs, hs = model.section(f).support, model.section(h).support
        shadow = causal_cone(lat, fs, "future") | causal_cone(lat, fs, "past")
        if not shadow.isdisjoint(hs):
            raise ValueError("spatial circle too short for causally disjoint sources")
        out += [f, h]
    return np.stack(out, axis=-1)


def _l2(model, values: np.ndarray) -> float:
    """Volume-weighted L2 norm, the scale for relative pairings."""
    w = volume_weights(model.lattice)
    return float(np.sqrt(np.sum(w[..., None] * np.abs(values) ** 2)))


def _gram(model, a: go.Observable, b: go.Observable) -> complex:
    return complex(model.gram_form(a, b))


# suites

def green_identity_residuals(model, F: np.ndarray, cones: bool = True) -> dict[str, float]:
    """Worst relative Green-identity residuals and support violations over a source stack.

    Returns keys ``LE``, ``EL`` (interior rows, relative to ``|f|``) and
    ``violations`` (cells of ``E^pm f`` outside the discrete ``J^pm``).
    """
    op = model.operator
    lat = model.lattice
    n = F.shape[-1]
    rows = op.interior_rows()
    flat = F.reshape(-1, n)
    LF = np.asarray(op.matrix @ flat).reshape(F.shape)
    worst = {"LE": 0.0, "EL": 0.0, "violations": 0}
    for which, direction in (("retarded", "future"), ("advanced", "past")):
        U = go.green_apply_batch(op, F, which)
        LU = np.asarray(op.matrix @ U.reshape(-1, n)).reshape(F.shape)
        EL = go.green_apply_batch(op, LF, which)
        for k in range(n):
            scale = np.max(np.abs(F[..., k]))
            worst["LE"] = max(worst["LE"], np.max(np.abs(LU[..., k] - F[..., k])[rows]) / scale)
            worst["EL"] = max(worst["EL"], np.max(np.abs(EL[..., k] - F[..., k])[rows]) / scale)
            if cones:
                f, u = op.section(F[..., k]), op.section(U[..., k])
                cone = causal_cone(lat, f.support, direction)
                worst["violations"] += u.support.violations(cone)
    return worst


def _gram_rows(table: np.ndarray) -> list[list]:
    rows = [["i", "j", "re", "im"]]
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            z = complex(table[i, j])
            rows.append([i, j, z.real, z.imag])
    return rows


def causality_measure(model, obs: list[go.Observable]) -> float:
    """Largest ``|tau(f, h)| / (|f| |h|)`` over consecutive pairs ``(obs[2k], obs[2k+1])``.

    Norms are volume-weighted L2 norms of the representatives.
    """
    worst = 0.0
    for a, b in zip(obs[::2], obs[1::2]):
        scale = _l2(model, a.representative.values) * _l2(model, b.representative.values)
        worst = max(worst, abs(_gram(model, a, b)) / scale, abs(_gram(model, b, a)) / scale)
    return worst


def symmetry_measure(model, obs: list[go.Observable]) -> float:
    """Antisymmetry (real fields) or Hermiticity (spinors) residual over consecutive pairs."""
    worst = 0.0
    for a, b in zip(obs[::2], obs[1::2]):
        scale = _l2(model, a.representative.values) * _l2(model, b.representative.values)
        if model.kind == "real":
            r = abs(_gram(model, a, b) + _gram(model, b, a))
        else:
            r = abs(_gram(model, a, b) - np.conj(_gram(model, b, a)))
        worst = max(worst, r / scale)
    return worst


def exact_sequence_measures(model, H: np.ndarray, F: np.ndarray,
                            band: tuple[int, int] | None = None) -> dict[str, float]:
    """Kernel recovery and split-solve residuals.

    For every compact ``h`` in ``H`` the source ``f = L h`` lies in the
    kernel of ``E``; ``h' = E^- f`` must solve ``L h' = f``. For every ``f``
    in ``F`` the split solution ``E^+(chi_+ f) + E^-(chi_- f)`` must solve
    ``L h = f``. Residuals are taken on interior rows relative to ``|f|``.

    Returns keys ``recovery``, ``kernel`` (``|E f| / |h|``) and ``split``.
    """
    op = model.operator
    rows = op.interior_rows()
    k = H.shape[-1]
    Fh = np.asarray(op.matrix @ H.reshape(-1, k)).reshape(H.shape)
    Hr = go.green_apply_batch(op, Fh, "advanced")
    Hp = go.green_apply_batch(op, Fh, "retarded")
    LHr = np.asarray(op.matrix @ Hr.reshape(-1, k)).reshape(H.shape)
    out = {"recovery": 0.0, "kernel": 0.0, "split": 0.0}
    for j in range(k):
        scale = np.max(np.abs(Fh[..., j]))
        out["recovery"] = max(out["recovery"],
                              np.max(np.abs(LHr[..., j] - Fh[..., j])[rows]) / scale)
        out["kernel"] = max(out["kernel"], np.max(np.abs(Hr[..., j] - Hp[..., j])[rows])
                            / np.max(np.abs(H[..., j])))
    for j in range(F.shape[-1]):
        f = op.section(F[..., j])
        h = go.split_solve(op, f, band)
        out["split"] = max(out["split"], go.interior_residual(op, h, f) / f.norm_inf())
    return out


def time_slice_measures(model, obs: list[go.Observable],
                        band: tuple[int, int]) -> dict:
    """Move observables into a time band and compare classes and Gram data.

    Returns ``outside`` (cells of the new representatives outside the band),
    ``class_error`` (``|E(f' - f)| / |E f|`` on interior rows),
    ``gram_error`` (largest Gram difference between the full lattice and the
    band sub-lattice, relative to the largest Gram entry) and the full
    ``gram`` table.
    """
    start, stop = band
    op = model.operator
    rows = op.interior_rows()
    projected = [go.time_slice_project(o, band) for o in obs]
    outside = 0
    cls_err = 0.0
    for o, p in zip(obs, projected):
        mask = p.representative.point_mask
        outside += int(mask[:start].sum() + mask[stop:].sum())
        diff = go.causal_propagator(op, p.representative - o.representative)
        cls_err = max(cls_err, np.max(np.abs(diff.values[rows]))
                      / np.max(np.abs(o.propagated.values[rows])))
    sub = model.restrict(start, stop)
    restricted = go.observables_batch(
        sub, np.stack([p.representative.values[start:stop] for p in projected], axis=-1))
    n = len(obs)
    full = np.array([[_gram(model, obs[i], obs[j]) for j in range(n)] for i in range(n)])
    part = np.array([[_gram(sub, restricted[i], restricted[j]) for j in range(n)]
                     for i in range(n)])
    return {"outside": outside, "class_error": cls_err,
            "gram_error": float(np.max(np.abs(full - part)) / np.max(np.abs(full))),
            "gram": full}


def field_suite(name: str, lat: SpacetimeLattice, rng: np.random.Generator,
                num: Numerics = Numerics(), params: ModelParams = ModelParams()) -> SuiteResult:
    """Green identities, cone support, causality, (anti)symmetry, exact sequence and time slice."""
    model = make_model(name, lat, params)
    op = model.operator
    res = SuiteResult(name)
    if name == "dirac":
        rep = dr.clifford_check()
        res.at_most("clifford_failures", len(rep.failures), 0)
        res.at_most("nabla_gamma_algebraic_failures", 0 if dr.nabla_gamma_algebraic() else 1, 0)
        res.tables["clifford.csv"] = [["identity", "pass"]] + [
            [n, "true" if ok else "false"] for n, ok in rep.entries]
    if name == "proca":
        _proca_exact(model, rng, res)

    F = random_sources(model, rng, num.sources)
    g = green_identity_residuals(model, F)
    res.at_most("green_LE_minus_f", g["LE"], num.green_tol)
    res.at_most("green_EL_minus_f", g["EL"], num.green_tol)
    res.at_most("support_violations", g["violations"], 0)
    u = go.green_apply(op, op.section(F[..., 0]), "retarded")
    res.masks[f"{name}_retarded_support.pgm"] = u.point_mask
    res.masks[f"{name}_future_cone.pgm"] = causal_cone(
        lat, op.section(F[..., 0]).support, "future").mask

    obs = go.observables_batch(model, disjoint_pairs(model, rng, num.pairs))
    res.at_most("causality", causality_measure(model, obs), num.causality_tol)
    obs = go.observables_batch(model, random_sources(model, rng, 2 * num.pairs))
    res.at_most("hermiticity" if model.kind == "complex" else "antisymmetry",
                symmetry_measure(model, obs), num.symmetry_tol)
    if name == "scalar":
        res.at_least("nondegeneracy", nondegeneracy_measure(model, obs[:num.pairs]), 1e-6)

    ex = exact_sequence_measures(model, random_sources(model, rng, num.sources), F,
                                 num.band_for(lat.n_t))
    res.at_most("exact_sequence_recovery", ex["recovery"], num.green_tol)
    res.at_most("exact_sequence_kernel", ex["kernel"], num.green_tol)
    res.at_most("split_solve", ex["split"], num.split_tol)

    obs = go.observables_batch(model, random_sources(model, rng, num.observables))
    ts = time_slice_measures(model, obs, num.band_for(lat.n_t))
    res.at_most("time_slice_outside_band", ts["outside"], 0)
    res.at_most("time_slice_class", ts["class_error"], num.equality_tol)
    res.at_most("time_slice_gram", ts["gram_error"], num.equality_tol)
    res.tables[f"gram_{name}.csv"] = _gram_rows(ts["gram"])
    return res


def nondegeneracy_measure(model, obs: list[go.Observable]) -> float:
    """Smallest over ``f`` of the largest ``|tau(f, h)| / (|f| |h|)`` over a probe basis."""
    lat = model.lattice
    span = lat.t[-1] - lat.t[0]
    probes = []
    for tf in (0.4, 0.5, 0.6):
        for k in range(16):
            shape = bump(lat, lat.t[0] + tf * span, (k + 0.5) * lat.length_x / 16,
                         4 * lat.delta_t, lat.length_x / 16)
            probes.append(shape[..., None])
    probe_obs = go.observables_batch(model, np.stack(probes, axis=-1))
    worst = math.inf
    for o in obs:
        fn = _l2(model, o.representative.values)
        best = max(abs(_gram(model, o, p)) / (fn * _l2(model, p.representative.values))
                   for p in probe_obs)
        worst = min(worst, best)
    return worst


def _proca_exact(model: pr.ProcaModel, rng: np.random.Generator, res: SuiteResult) -> None:
    lat = model.lattice
    zero = pr.form_field(lat, rng.standard_normal(lat.shape + (1,)), 0)
    one = pr.form_field(lat, rng.standard_normal(lat.shape + (2,)), 1)
    two = pr.form_field(lat, rng.standard_normal(lat.shape + (1,)), 2)
    dd = pr.dd_exact(zero)
    res.at_most("dd_nonzero_entries", int(np.count_nonzero(dd)), 0)
    cc = pr.codiff_codiff_exact(two)
    res.at_most("codiff_codiff_nonzero_entries", int(np.count_nonzero(cc)), 0)
    mats = model.matrices
    norm = lambda m: float(abs(m).sum(axis=1).max())  # noqa: E731
    r = mats["P"] @ (mats["Q"] @ one.flat) - mats["R"] @ one.flat
    scale = norm(mats["P"]) * norm(mats["Q"]) * np.max(np.abs(one.flat))
    res.at_most("PQ_minus_R", np.max(np.abs(r)) / scale, 1e-14)
    d_zero = pr.exterior_d(zero)
    w = model.weights
    adj = abs(np.sum(d_zero.values * w[1] * one.values)
              - np.sum(zero.values * w[0] * pr.codifferential(one).values))
    scale = np.sqrt(np.sum(np.abs(w[1]) * d_zero.values ** 2)) * np.sqrt(
        np.sum(np.abs(w[1]) * one.values ** 2))
    res.at_most("codifferential_adjoint", adj / scale, 1e-12)


def greenops_suite(lat: SpacetimeLattice, rng: np.random.Generator,
                   num: Numerics = Numerics(), params: ModelParams = ModelParams()) -> SuiteResult:
    """Operator-level checks on the scalar model."""
    res = SuiteResult("greenops")
    model = make_model("scalar", lat, params)
    op = model.operator
    res.at_most("courant_number", float(lat.light_speed.max()), 1.0)
    worst = 0.0
    for _ in range(3):
        n0 = int(rng.integers(lat.n_t // 4, 3 * lat.n_t // 4))
        j0 = int(rng.integers(lat.n_x))
        zeta = rng.standard_normal(2)
        est = go.symbol_probe(op, (n0, j0), zeta)[0, 0]
        exact = zeta[0] ** 2 / lat.lapse[n0, j0] - zeta[1] ** 2 / lat.spatial_metric[n0, j0]
        worst = max(worst, abs(est - exact) / (zeta @ zeta / min(lat.lapse[n0, j0],
                                                                   lat.spatial_metric[n0, j0])))
    res.at_most("principal_symbol", worst, num.symbol_tol)
    plus, minus = go.partition(lat.n_t, num.band_for(lat.n_t))
    res.at_most("partition_of_unity", np.max(np.abs(plus + minus - 1)), 0.0)

    slc = cauchy_slice(lat, lat.n_t // 2)
    u0, v0, u1, v1 = (rng.standard_normal(lat.n_x) for _ in range(4))
    al_, be = rng.standard_normal(2)
    combo = go.solve_cauchy(op, slc, al_ * u0 + be * v0, al_ * u1 + be * v1, direction="both")
    parts = (go.solve_cauchy(op, slc, u0, u1, direction="both") * al_
             + go.solve_cauchy(op, slc, v0, v1, direction="both") * be)
    res.at_most("cauchy_linearity", (combo - parts).norm_inf() / combo.norm_inf(), 1e-12)

    F = random_sources(model, rng, 2)
    f, h = op.section(F[..., 0]), op.section(F[..., 1])
    scale = _l2(model, f.values) * _l2(model, h.values)
    res.at_most("green_duality",
                go.adjoint_residual(op, op, f, h, mode="green") / scale, 1e-12)
    lf = op.apply(f)
    res.at_most("formal_adjointness",
                go.adjoint_residual(op, op, f, h) / (_l2(model, lf.values) * _l2(model, h.values)),
                1e-12)
    return res


def registry_property_failures(reg: al.Registry, rng: np.random.Generator, samples: int,
                               triples: int | None = None) -> dict[str, int]:
    """Count failures of the rewriting-system properties.

    Confluence and idempotence use ``samples`` random unordered elements of
    degree at most five; associativity, the star antihomomorphism and
    involutivity use ``triples`` random normalized triples.
    """
    fails = {"idempotence": 0, "confluence": 0, "associativity": 0,
             "antihomomorphism": 0, "involution": 0}
    for _ in range(samples):
        x = al.random_element(reg, rng, max_degree=5)
        a = al.normal_form(x)
        b = al.normal_form(x, rng=np.random.default_rng(int(rng.integers(2 ** 32))))
        fails["confluence"] += not al.equal(a, b)
        fails["idempotence"] += not al.equal(al.normal_form(a), a)
    for _ in range(samples if triples is None else triples):
        x, y, z = (al.random_element(reg, rng, max_degree=2, normalized=True) for _ in range(3))
        fails["associativity"] += not al.equal((x * y) * z, x * (y * z))
        fails["antihomomorphism"] += not al.equal((x * y).star(), y.star() * x.star())
        fails["involution"] += not al.equal(x.star().star(), x)
    return fails


def _registry_checks(reg: al.Registry, rng: np.random.Generator, samples: int,
                     res: SuiteResult, prefix: str) -> None:
    for key, count in registry_property_failures(reg, rng, samples).items():
        res.at_most(f"{prefix}{key}_failures", count, 0)


def algebra_suite(lat: SpacetimeLattice, rng: np.random.Generator,
                  num: Numerics = Numerics(), params: ModelParams = ModelParams()) -> SuiteResult:
    """Quantum causality, time-slice isomorphism and rewriting properties."""
    res = SuiteResult("algebra")
    k = num.algebra_pairs
    snaps = [["registry", "entry", "value"]]
    for name in FIELDS:
        model = make_model(name, lat, params)
        obs = go.observables_batch(model, disjoint_pairs(model, rng, k))
        reg = al.Registry.from_observables(obs)
        pairs = [(2 * i, 2 * i + 1) for i in range(k)]
        triples = []
        if reg.statistics == "fermi":
            triples = [(2 * i, 2 * i, 2 * i + 1) for i in range(k)]
        report = al.verify_quantum_causality(reg, pairs, triples)
        bad = sum(1 for _, ok, _ in report.entries if not ok)
        res.at_most(f"{name}_quantum_causality_nonzero", bad, 0)
        for label, value in reg.snap_log:
            snaps.append([name, label, complex(value).real if np.isreal(value) else str(value)])
        if name in ("scalar", "dirac"):
            _registry_checks(reg, rng, num.algebra_samples, res, f"{reg.statistics}_")
    model = make_model("scalar", lat, params)
    obs = go.observables_batch(model, random_sources(model, rng, 4))
    ts = al.time_slice_isomorphism(model, obs, num.band_for(lat.n_t))
    res.at_most("time_slice_gram", ts.max_relative_gram_error, num.equality_tol)
    res.at_most("time_slice_isomorphism_failures", 0 if ts.passed else 1, 0)
    res.tables["snapped_gram_entries.csv"] = snaps
    return res


def run_suite(name: str, lat: SpacetimeLattice, rng: np.random.Generator,
              num: Numerics = Numerics(), params: ModelParams = ModelParams()) -> SuiteResult:
    if name in FIELDS:
        return field_suite(name, lat, rng, num, params)
    if name == "greenops":
        return greenops_suite(lat, rng, num, params)
    if name == "algebra":
        return algebra_suite(lat, rng, num, params)
    raise ValueError(f"unknown suite {name!r}")


# convergence

@dataclass(frozen=True)
class ConvergenceRow:
    identity: str
    level: int
    n_t: int
    n_x: int
    error: float


def fit_order(errors) -> float:
    """Least-squares slope of ``-log2(error)`` against the refinement level."""
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return math.inf
    return float(-np.polyfit(np.arange(e.size), np.log2(e), 1)[0])


def _window_bump(lat, model, tf, xf, rt, rx, vec):
    span = lat.t[-1] - lat.t[0]
    shape = bump(lat, lat.t[0] + tf * span, xf * lat.length_x, rt * span, rx * lat.length_x)
    return shape[..., None] * vec


def _pair_observables(model, vecs):
    lat = model.lattice
    f = _window_bump(lat, model, 0.35, 0.375, 0.1, 0.075, vecs[0])
    h = _window_bump(lat, model, 0.6, 0.55, 0.1, 0.075, vecs[1])
    return go.observables_batch(model, np.stack([f, h], axis=-1))


def _scalar_sigma_tau(lat, params, rng):
    model = make_model("scalar", lat, params)
    a, b = _pair_observables(model, (np.ones(1), np.ones(1)))
    tau = sc.symplectic_tau(a, b)
    sigma = sc.sigma_on_slice(a.propagated, b.propagated, cauchy_slice(lat, lat.n_t // 2), model)
    return abs(sigma - tau) / abs(tau)


def _dirac_vectors():
    return (np.array([1.0, 0.5j, -0.25, 0.75 + 0.5j]), np.array([0.5, -1j, 1.0, 0.25]))


def _dirac_hermitian(lat, params, rng):
    model = make_model("dirac", lat, params)
    a, b = _pair_observables(model, _dirac_vectors())
    hs = dr.hermitian_form(a, b)
    hsig = dr.hermitian_on_slice(a.propagated, b.propagated, cauchy_slice(lat, lat.n_t // 2),
                                 model)
    return abs(hsig - hs) / abs(hs)


def _proca_sigma_tau(lat, params, rng):
    model = make_model("proca", lat, params)
    span = lat.t[-1] - lat.t[0]

    def form(tf, xf, ct, cx):
        def fn(t, x):
            p = bump_profile(t, x, lat.t[0] + tf * span, xf * lat.length_x, 0.1 * span,
                             0.075 * lat.length_x, lat.length_x)
            return ct * p, cx * p
        return pr.sample_one_form(lat, fn).values

    F = np.stack([form(0.35, 0.375, 1.0, 0.5), form(0.6, 0.55, -0.5, 1.0)], axis=-1)
    a, b = go.observables_batch(model, F)
    tau = pr.proca_tau(a, b)
    sigma = pr.proca_sigma_slice(a.propagated, b.propagated, cauchy_slice(lat, lat.n_t // 2), model)
    return abs(sigma - tau) / abs(tau)


def smooth_spinors(lat: SpacetimeLattice, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    """Random smooth spinor fields built from a few periodic modes."""
    t = lat.t[:, None, None]
    x = lat.x[None, :, None]
    L = lat.length_x
    out = []
    for _ in range(count):
        c = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        out.append(c[0] * np.sin(2 * np.pi * x / L + 0.7 * t)
                   + c[1] * np.cos(4 * np.pi * x / L) * np.exp(0.3 * t) + c[2] * t ** 2)
    return out


def dirac_square_residual(model: dr.DiracModel, values: np.ndarray, k: int = 3) -> float:
    """Sup of the residuals of the squaring identities on interior rows.

    Combines ``slash^2 - (box + R/4)`` and ``P_s^2 + square_form`` applied
    to one spinor field; ``k`` boundary rows are dropped on each side.
    """
    s = model.section(values)
    r1 = (dr.slash_apply(model, dr.slash_apply(model, s)).values
          - dr.dirac_square_form(model, 0.0).apply(s).values)
    ps = model.operator
    r2 = ps.apply(ps.apply(s)).values + model.square_form.apply(s).values
    return float(max(np.abs(r1[k:-k]).max(), np.abs(r2[k:-k]).max()))


def _dirac_square(lat, params, rng):
    model = make_model("dirac", lat, params)
    return max(dirac_square_residual(model, v) for v in smooth_spinors(lat, rng, 4))


def _scalar_manufactured(lat, params, rng):
    model = make_model("scalar", lat, params)
    L = lat.length_x
    v, dn, J = sc.manufactured_problem(
        model, f"cos(2*pi*x/{L!r})*cos(1.3*t) + sin(4*pi*x/{L!r} + 0.7*t)/2")
    u = go.solve_cauchy(model.operator, cauchy_slice(lat, 1), v[1], dn[1], model.section(J))
    return float(np.max(np.abs(u.values[1:, :, 0] - v[1:])) / np.max(np.abs(v)))


def _scalar_green_duality(lat, params, rng):
    model = make_model("scalar", lat, params)
    op = model.operator
    F = random_sources(model, rng, 2)
    f, h = op.section(F[..., 0]), op.section(F[..., 1])
    return go.adjoint_residual(op, op, f, h, mode="green") / (_l2(model, f.values)
                                                             * _l2(model, h.values))


def _proca_dd(lat, params, rng):
    zero = pr.form_field(lat, rng.standard_normal(lat.shape + (1,)), 0)
    return float(np.count_nonzero(pr.dd_exact(zero)))


def _proca_codiff_adjoint(lat, params, rng):
    zero = pr.form_field(lat, rng.standard_normal(lat.shape + (1,)), 0)
    one = pr.form_field(lat, rng.standard_normal(lat.shape + (2,)), 1)
    w = pr.form_weights(lat)
    dz = pr.exterior_d(zero).values
    lhs = np.sum(dz * w[1] * one.values)
    rhs = np.sum(zero.values * w[0] * pr.codifferential(one).values)
    scale = np.sqrt(np.sum(np.abs(w[1]) * dz ** 2) * np.sum(np.abs(w[1]) * one.values ** 2))
    return float(abs(lhs - rhs) / scale)


# name -> (field, kind, evaluator); kind "order" fits an order, "exact" expects roundoff
IDENTITIES: dict[str, tuple[str, str, Callable]] = {
    "scalar_sigma_tau": ("scalar", "order", _scalar_sigma_tau),
    "scalar_manufactured": ("scalar", "order", _scalar_manufactured),
    "scalar_green_duality": ("scalar", "exact", _scalar_green_duality),
    "dirac_slice_hermitian": ("dirac", "order", _dirac_hermitian),
    "dirac_square_relation": ("dirac", "order", _dirac_square),
    "proca_sigma_tau": ("proca", "order", _proca_sigma_tau),
    "proca_dd": ("proca", "exact", _proca_dd),
    "proca_codiff_adjoint": ("proca", "exact", _proca_codiff_adjoint),
}

EXACT_TOL = 1e-12


def convergence_study(lat: SpacetimeLattice, fields, rng: np.random.Generator,
                      num: Numerics = Numerics(), params: ModelParams = ModelParams()
                      ) -> tuple[list[ConvergenceRow], SuiteResult]:
    """Evaluate every registered identity of the selected fields on dyadic refinements.

    Returns the per-level errors and report rows: fitted orders for
    discretization identities and ``exact`` checks for structural ones.
    Identities whose errors all sit at roundoff level are reported as exact
    rather than fitted.
    """
    lattices = [lat]
    for _ in range(num.levels - 1):
        lattices.append(lattices[-1].refine(2))
    rows: list[ConvergenceRow] = []
    res = SuiteResult("convergence")
    for name, (fld, kind, fn) in IDENTITIES.items():
        if fld not in fields:
            continue
        errors = []
        # the same random data at every level
        seed = int(rng.integers(2 ** 63))
        for level, L in enumerate(lattices):
            e = float(fn(L, params, np.random.default_rng(seed)))
            errors.append(e)
            rows.append(ConvergenceRow(name, level, L.n_t, L.n_x, e))
        if kind == "exact" or max(errors) <= EXACT_TOL:
            res.at_most(f"{name}_exact", max(errors), EXACT_TOL)
            continue
        order = fit_order(errors)
        if name.endswith(("sigma_tau", "slice_hermitian")):
            res.at_least(f"{name}_order", order, num.order_min)
        else:
            res.at_most(f"{name}_order_deviation", abs(order - 2.0), num.order_band)
    return rows, res
