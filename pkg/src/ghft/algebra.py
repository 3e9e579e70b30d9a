"""Exact CCR/CAR *-algebras over a finite registry of observables.

Elements are finite linear combinations of ordered monomials in generator
handles with Gaussian-rational coefficients. Products are reduced to a
normal order modulo the commutation (Bose) or anticommutation (Fermi)
relations:

* Bose: ``Phi(f) Phi(h) - Phi(h) Phi(f) = i tau(f, h) 1``
* Fermi: ``{Phi(s), Phi(t)} = {Psi(z), Psi(w)} = 0`` and
  ``{Psi(z), Phi(t)} = h_c(A[t], [z]) 1``

Handles are ordered by kind (``PhiBose < PhiFermi < PsiFermi``) then index;
normal monomials are non-decreasing (Bose) or strictly increasing (Fermi).
Gram data is computed numerically once and frozen as exact rationals when
the registry is built.
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .exact import GaussianRational, gq

__all__ = [
    "Kind",
    "Handle",
    "Registry",
    "AlgebraElement",
    "AlgebraError",
    "snap",
    "unit",
    "inject",
    "inject_combination",
    "multiply",
    "normal_form",
    "involution",
    "commutator",
    "anticommutator",
    "equal",
    "random_element",
    "parse",
    "format_element",
    "CausalityReport",
    "verify_quantum_causality",
    "TimeSliceReport",
    "time_slice_isomorphism",
]

log = logging.getLogger(__name__)

SNAP_SCALE = 10 ** 15
SNAP_ZERO = 1e-12
ZERO = GaussianRational()
ONE = GaussianRational(1)
I_UNIT = GaussianRational(0, 1)


class AlgebraError(ValueError):
    """Malformed algebra input or mixing of registries."""


class Kind(enum.IntEnum):
    PHI_BOSE = 0
    PHI_FERMI = 1
    PSI_FERMI = 2


class Handle(NamedTuple):
    kind: Kind
    index: int

    def __str__(self):
        return f"{'Psi' if self.kind == Kind.PSI_FERMI else 'Phi'}({self.index})"


Monomial = tuple  # tuple[Handle, ...]


def snap(value: complex, zero: float = SNAP_ZERO, scale: int = SNAP_SCALE,
         log_list: list | None = None, label: str = "") -> GaussianRational:
    """Freeze a floating value as an exact Gaussian rational.

    Real and imaginary parts are rounded to the nearest multiple of
    ``1/scale``; values with ``|value| < zero`` become exactly 0 and are
    recorded in ``log_list``.
    """
    z = complex(value)
    if abs(z) < zero:
        if z != 0 and log_list is not None:
            log_list.append((label, z))
        return ZERO
    return GaussianRational(Fraction(round(z.real * scale), scale),
                            Fraction(round(z.imag * scale), scale))


@dataclass(eq=False)
class Registry:
    """Generators and their frozen Gram data.

    Attributes
    ----------
    statistics : {"bose", "fermi"}
    size : int
        Number of observables; Fermi registries have ``size`` Phi and
        ``size`` Psi handles, ``Psi(i)`` standing for ``Psi(A[s_i])``.
    gram : list of list of GaussianRational
        Bose: ``tau(f_i, f_j)``. Fermi: ``G[i][j] = {Psi(j), Phi(i)}``.
    snap_log : list of (label, value)
        Gram entries snapped to zero.
    observables : list, optional
        The observables the handles stand for.
    """

    statistics: str
    size: int
    gram: list
    snap_log: list = field(default_factory=list)
    observables: list | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def bose(cls, tau, observables=None, zero: float = SNAP_ZERO) -> "Registry":
        """Registry from a real Bose Gram matrix (antisymmetrized, then snapped)."""
        t = np.asarray(tau, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise AlgebraError("Gram matrix must be square")
        t = 0.5 * (t - t.T)
        logged: list = []
        n = t.shape[0]
        gram = [[ZERO] * n for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                g = snap(t[i, j], zero, log_list=logged, label=f"tau[{i},{j}]")
                gram[i][j], gram[j][i] = g, -g
        return cls("bose", n, gram, logged, observables)

    @classmethod
    def fermi(cls, herm, observables=None, zero: float = SNAP_ZERO) -> "Registry":
        """Registry from the mixed Fermi Gram ``G[i][j] = h_s([s_j], [s_i])``.

        ``G`` is Hermitian-symmetrized before snapping and its lower
        triangle mirrored so that the involution is exact.
        """
        g = np.asarray(herm, dtype=complex)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise AlgebraError("Gram matrix must be square")
        g = 0.5 * (g + g.conj().T)
        logged: list = []
        n = g.shape[0]
        gram = [[ZERO] * n for _ in range(n)]
        for i in range(n):
            gram[i][i] = snap(g[i, i].real, zero, log_list=logged, label=f"G[{i},{i}]")
            for j in range(i + 1, n):
                v = snap(g[i, j], zero, log_list=logged, label=f"G[{i},{j}]")
                gram[i][j], gram[j][i] = v, v.conjugate()
        return cls("fermi", n, gram, logged, observables)

    @classmethod
    def from_observables(cls, observables: Sequence, zero: float = SNAP_ZERO) -> "Registry":
        """Compute the Gram data of a list of observables of one model.

        Real-valued models (scalar, Proca) give Bose registries with
        ``tau``; Dirac spinor observables give Fermi registries with
        ``G[i][j] = h_s([s_j], [s_i])``.
        """
        if not observables:
            raise AlgebraError("no observables")
        model = observables[0].model
        if any(o.model is not model for o in observables):
            raise AlgebraError("observables belong to different models")
        n = len(observables)
        if getattr(model, "kind", "real") == "real":
            tau = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    tau[i, j] = model.gram_form(observables[i], observables[j])
                    tau[j, i] = -tau[i, j]
            return cls.bose(tau, list(observables), zero)
        g = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                g[i, j] = model.gram_form(observables[j], observables[i])
        return cls.fermi(g, list(observables), zero)

    # handles

    @property
    def handles(self) -> list[Handle]:
        if self.statistics == "bose":
            return [Handle(Kind.PHI_BOSE, i) for i in range(self.size)]
        return ([Handle(Kind.PHI_FERMI, i) for i in range(self.size)]
                + [Handle(Kind.PSI_FERMI, i) for i in range(self.size)])

    def phi(self, index: int) -> Handle:
        kind = Kind.PHI_BOSE if self.statistics == "bose" else Kind.PHI_FERMI
        return self._check(Handle(kind, index))

    def psi(self, index: int) -> Handle:
        if self.statistics != "fermi":
            raise AlgebraError("Psi generators exist only for Fermi registries")
        return self._check(Handle(Kind.PSI_FERMI, index))

    def _check(self, h: Handle) -> Handle:
        ok = 0 <= h.index < self.size and (
            (self.statistics == "bose") == (h.kind == Kind.PHI_BOSE))
        if not ok:
            raise AlgebraError(f"unknown handle {h}")
        return h

    def star(self, h: Handle) -> Handle:
        """``Phi(f)* = Phi(f)`` (Bose); ``Phi(s)* = Psi(A s)`` and back (Fermi)."""
        if h.kind == Kind.PHI_BOSE:
            return h
        return Handle(Kind.PSI_FERMI if h.kind == Kind.PHI_FERMI else Kind.PHI_FERMI, h.index)

    def contraction(self, x: Handle, y: Handle) -> GaussianRational:
        """Scalar ``c`` in ``x y = s y x + c`` with ``s = +1`` (Bose) or ``-1`` (Fermi)."""
        if self.statistics == "bose":
            return I_UNIT * self.gram[x.index][y.index]
        if x.kind == y.kind:
            return ZERO
        psi, phi = (x, y) if x.kind == Kind.PSI_FERMI else (y, x)
        return self.gram[phi.index][psi.index]

    @property
    def fermionic(self) -> bool:
        return self.statistics == "fermi"


# elements

def _add_into(acc: dict, mono, coeff) -> None:
    v = acc.get(mono, ZERO) + coeff
    if v.is_zero():
        acc.pop(mono, None)
    else:
        acc[mono] = v


def _scaled(terms: Mapping, c) -> dict:
    if c.is_zero():
        return {}
    return {m: v * c for m, v in terms.items()}


def _first_reducible(reg: Registry, m: Monomial) -> int:
    for i in range(len(m) - 1):
        if m[i] > m[i + 1] or (reg.fermionic and m[i] == m[i + 1]):
            return i
    return -1


def _reducible_positions(reg: Registry, m: Monomial) -> list[int]:
    return [i for i in range(len(m) - 1)
            if m[i] > m[i + 1] or (reg.fermionic and m[i] == m[i + 1])]


def _rewrite_step(reg: Registry, m: Monomial, i: int) -> list[tuple[Monomial, GaussianRational]]:
    x, y = m[i], m[i + 1]
    if reg.fermionic and x == y:
        return []
    sign = -ONE if reg.fermionic else ONE
    out = [(m[:i] + (y, x) + m[i + 2:], sign)]
    c = reg.contraction(x, y)
    if not c.is_zero():
        out.append((m[:i] + m[i + 2:], c))
    return out


def _normal_monomial(reg: Registry, m: Monomial) -> dict:
    cached = reg._cache.get(m)
    if cached is not None:
        return cached
    i = _first_reducible(reg, m)
    if i < 0:
        result = {m: ONE}
    else:
        result = {}
        for mono, c in _rewrite_step(reg, m, i):
            for k, v in _normal_monomial(reg, mono).items():
                _add_into(result, k, v * c)
    reg._cache[m] = result
    return result


def _normal_random(reg: Registry, m: Monomial, rng: np.random.Generator) -> dict:
    pos = _reducible_positions(reg, m)
    if not pos:
        return {m: ONE}
    i = pos[int(rng.integers(len(pos)))]
    result: dict = {}
    for mono, c in _rewrite_step(reg, m, i):
        for k, v in _normal_random(reg, mono, rng).items():
            _add_into(result, k, v * c)
    return result


def _normalize(reg: Registry, terms: Mapping, rng: np.random.Generator | None = None) -> dict:
    out: dict = {}
    for m, c in terms.items():
        nf = _normal_random(reg, m, rng) if rng is not None else _normal_monomial(reg, m)
        for k, v in nf.items():
            _add_into(out, k, v * c)
    return out


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Normal-ordered element of the algebra of a registry."""

    registry: Registry
    terms: Mapping  # Monomial -> GaussianRational

    @property
    def statistics(self) -> str:
        return self.registry.statistics

    def _same(self, other: "AlgebraElement") -> None:
        if not isinstance(other, AlgebraElement) or other.registry is not self.registry:
            raise AlgebraError("elements belong to different registries")

    def _lift(self, other) -> "AlgebraElement":
        if isinstance(other, AlgebraElement):
            self._same(other)
            return other
        return unit(self.registry) * other

    def __add__(self, other) -> "AlgebraElement":
        other = self._lift(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            _add_into(acc, m, c)
        return AlgebraElement(self.registry, acc)

    __radd__ = __add__

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(self.registry, _scaled(self.terms, -ONE))

    def __sub__(self, other) -> "AlgebraElement":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "AlgebraElement":
        return self._lift(other) - self

    def __mul__(self, other) -> "AlgebraElement":
        if isinstance(other, AlgebraElement):
            return multiply(self, other)
        return AlgebraElement(self.registry, _scaled(self.terms, GaussianRational.coerce(other)))

    def __rmul__(self, other) -> "AlgebraElement":
        return AlgebraElement(self.registry, _scaled(self.terms, GaussianRational.coerce(other)))

    def __pow__(self, n: int) -> "AlgebraElement":
        if n < 0:
            raise AlgebraError("negative powers are not defined")
        out = unit(self.registry)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, AlgebraElement):
            return equal(self, other)
        return NotImplemented

    __hash__ = None

    def star(self) -> "AlgebraElement":
        return involution(self)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=-1)

    def scalar_part(self) -> GaussianRational:
        return self.terms.get((), ZERO)

    def __str__(self) -> str:
        return format_element(self, multiline=False)

    def __repr__(self) -> str:
        return f"AlgebraElement({format_element(self, multiline=False)})"


def unit(reg: Registry) -> AlgebraElement:
    return AlgebraElement(reg, {(): ONE})


def inject(reg: Registry, handle: Handle | int) -> AlgebraElement:
    """Degree-one element of a handle (an index means ``Phi(index)``)."""
    h = reg.phi(handle) if isinstance(handle, (int, np.integer)) else reg._check(Handle(*handle))
    return AlgebraElement(reg, {(h,): ONE})


def inject_combination(reg: Registry, combo: Mapping, kind: str = "Phi") -> AlgebraElement:
    """``Phi(sum a_k f_k) = sum a_k Phi(f_k)`` for a formal combination of handles."""
    out: dict = {}
    for idx, a in combo.items():
        h = reg.phi(idx) if kind == "Phi" else reg.psi(idx)
        _add_into(out, (h,), GaussianRational.coerce(a))
    return AlgebraElement(reg, out)


def normal_form(x: AlgebraElement, rng: np.random.Generator | None = None) -> AlgebraElement:
    """Rewrite to normal order.

    By default the leftmost reducible pair is rewritten first (memoized);
    with ``rng`` a random reducible pair is picked at every step.
    """
    return AlgebraElement(x.registry, _normalize(x.registry, x.terms, rng))


def multiply(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    x._same(y)
    raw: dict = {}
    for m1, c1 in x.terms.items():
        for m2, c2 in y.terms.items():
            _add_into(raw, m1 + m2, c1 * c2)
    return AlgebraElement(x.registry, _normalize(x.registry, raw))


def involution(x: AlgebraElement) -> AlgebraElement:
    """Reverse monomials, conjugate coefficients and star every handle."""
    reg = x.registry
    raw: dict = {}
    for m, c in x.terms.items():
        _add_into(raw, tuple(reg.star(h) for h in reversed(m)), c.conjugate())
    return AlgebraElement(reg, _normalize(reg, raw))


def commutator(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    return x * y - y * x


def anticommutator(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    return x * y + y * x


def equal(x: AlgebraElement, y: AlgebraElement) -> bool:
    """Exact equality of normal forms."""
    x._same(y)
    return dict(x.terms) == dict(y.terms)


def random_element(reg: Registry, rng: np.random.Generator, max_degree: int = 5,
                   n_terms: int = 3, normalized: bool = False) -> AlgebraElement:
    """Random combination of words in the generators with small Gaussian-integer coefficients.

    The words are left unordered unless ``normalized`` is set, so the result
    exercises the rewriting system.
    """
    hs = reg.handles
    raw: dict = {}
    for _ in range(n_terms):
        deg = int(rng.integers(0, max_degree + 1))
        word = tuple(hs[int(rng.integers(len(hs)))] for _ in range(deg))
        coeff = GaussianRational(int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
        _add_into(raw, word, coeff)
    x = AlgebraElement(reg, raw)
    return normal_form(x) if normalized else x


# text format

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:/\d+)?)|(?P<name>Phi|Psi)|(?P<i>i)"
                    r"|(?P<dagger>\^\*|†)|(?P<op>[-+*^()]))")


def _tokens(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise AlgebraError(f"unexpected input at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    """Recursive-descent parser for the ASCII expression grammar.

    ``expr := term (('+'|'-') term)*``, ``term := factor ('*' factor)*``,
    ``factor := atom ('^' uint | '^*' | '†')*`` and
    ``atom := number ['i'] | 'i' | ('Phi'|'Psi') '(' uint ')' | '(' expr ')'``
    with a leading sign allowed on terms.
    """

    def __init__(self, reg: Registry, text: str):
        self.reg, self.toks, self.pos = reg, _tokens(text), 0

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None, value=None):
        tok = self.toks[self.pos]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise AlgebraError(f"expected {value or kind}, found {tok[1] or 'end of input'!r}")
        self.pos += 1
        return tok

    def parse(self) -> AlgebraElement:
        e = self.expr()
        self.take("end")
        return e

    def expr(self):
        e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            t = self.term()
            e = e + t if op == "+" else e - t
        return e

    def term(self):
        sign = 1
        while self.peek() in (("op", "+"), ("op", "-")):
            if self.take()[1] == "-":
                sign = -sign
        e = self.factor()
        while self.peek() == ("op", "*"):
            self.take()
            e = e * self.factor()
        return e if sign == 1 else -e

    def factor(self):
        e = self.atom()
        while True:
            tok = self.peek()
            if tok[0] == "dagger":
                self.take()
                e = involution(e)
            elif tok == ("op", "^"):
                self.take()
                n = self.take("num")[1]
                if not n.isdigit():
                    raise AlgebraError(f"exponent must be a non-negative integer, got {n!r}")
                e = e ** int(n)
            else:
                return e

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            c = Fraction(val)
            if self.peek()[0] == "i":
                self.take()
                return unit(self.reg) * gq(0, c)
            return unit(self.reg) * gq(c)
        if kind == "i":
            self.take()
            return unit(self.reg) * I_UNIT
        if kind == "name":
            self.take()
            self.take("op", "(")
            idx = self.take("num")[1]
            if not idx.isdigit():
                raise AlgebraError(f"generator index must be an integer, got {idx!r}")
            self.take("op", ")")
            h = self.reg.phi(int(idx)) if val == "Phi" else self.reg.psi(int(idx))
            return AlgebraElement(self.reg, {(h,): ONE})
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        raise AlgebraError(f"unexpected token {val or 'end of input'!r}")


def parse(reg: Registry, text: str) -> AlgebraElement:
    """Parse an expression such as ``(1/2+3i)*Phi(0)*Phi(1)^* - Psi(2)^2``.

    ``^*`` is the ASCII spelling of the adjoint ``†``.
    """
    return _Parser(reg, text).parse()


def _sort_key(m: Monomial):
    return (len(m), tuple((int(h.kind), h.index) for h in m))


def format_element(x: AlgebraElement, multiline: bool = True) -> str:
    """Normal form as a sorted monomial list with exact coefficients."""
    if not x.terms:
        return "0"
    parts = []
    for m in sorted(x.terms, key=_sort_key):
        c = x.terms[m]
        parts.append(f"{c} {'*'.join(str(h) for h in m)}" if m else str(c))
    return "\n".join(parts) if multiline else " + ".join(parts)


# mechanical checks

@dataclass
class CausalityReport:
    """Normal forms of (anti)commutators of causally disjoint generators."""

    entries: list = field(default_factory=list)
    snap_log: list = field(default_factory=list)

    def add(self, name: str, element: AlgebraElement) -> None:
        self.entries.append((name, element.is_zero(), str(element)))

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(ok for _, ok, _ in self.entries)


def verify_quantum_causality(reg: Registry, disjoint_pairs: Iterable[tuple[int, int]],
                             even_triples: Iterable[tuple[int, int, int]] = ()) -> CausalityReport:
    """Check quantum causality on observable index pairs with disjoint supports.

    Bose: ``[Phi(i), Phi(j)] = 0``. Fermi: all anticommutators between
    ``Phi``/``Psi`` of ``i`` and ``j`` vanish. ``even_triples`` ``(a, b, c)``
    with ``c`` disjoint from ``a`` and ``b`` check that the even element
    ``Phi(a) Psi(b)`` commutes with ``Phi(c)`` and ``Psi(c)``.
    """
    report = CausalityReport(snap_log=list(reg.snap_log))
    for i, j in disjoint_pairs:
        if reg.statistics == "bose":
            report.add(f"[Phi({i}),Phi({j})]", commutator(inject(reg, i), inject(reg, j)))
            continue
        gens_i = (("Phi", inject(reg, reg.phi(i))), ("Psi", inject(reg, reg.psi(i))))
        gens_j = (("Phi", inject(reg, reg.phi(j))), ("Psi", inject(reg, reg.psi(j))))
        for ni, a in gens_i:
            for nj, b in gens_j:
                report.add(f"{{{ni}({i}),{nj}({j})}}", anticommutator(a, b))
    for a, b, c in even_triples:
        if reg.statistics != "fermi":
            raise AlgebraError("even-subalgebra checks need a Fermi registry")
        even = inject(reg, reg.phi(a)) * inject(reg, reg.psi(b))
        for name, g in (("Phi", inject(reg, reg.phi(c))), ("Psi", inject(reg, reg.psi(c)))):
            report.add(f"[Phi({a})Psi({b}),{name}({c})]", commutator(even, g))
    return report


@dataclass
class TimeSliceReport:
    """Outcome of :func:`time_slice_isomorphism`."""

    band: tuple[int, int]
    handles_equal: list[bool]
    gram_full: np.ndarray
    gram_band: np.ndarray
    max_relative_gram_error: float
    support_in_band: list[bool]
    algebra_isomorphic: bool

    @property
    def passed(self) -> bool:
        return (all(self.handles_equal) and all(self.support_in_band)
                and self.max_relative_gram_error <= 1e-8 and self.algebra_isomorphic)


def time_slice_isomorphism(model, observables: Sequence, band: tuple[int, int],
                           project=None, equal_fn=None) -> TimeSliceReport:
    """Check that ``Phi([f]) -> Phi(L[f])`` preserves the algebra.

    Every observable is moved into the time band with the partition-of-unity
    projector; the projected representative must define the same class, lie
    in the band, and the Gram data computed on the band sub-lattice must
    agree with the full one within ``1e-8`` relative. Algebras generated by
    both registries are compared on all degree-two products.
    """
    from . import greenops as go

    project = project or go.time_slice_project
    equal_fn = equal_fn or go.observable_equal
    start, stop = band
    sub = model.restrict(start, stop)
    projected = [project(o, band) for o in observables]
    handles_equal = [equal_fn(p, o) for p, o in zip(projected, observables)]
    in_band = []
    restricted = []
    for p in projected:
        rows = np.flatnonzero(p.representative.point_mask.any(axis=1))
        in_band.append(bool(rows.size == 0 or (rows[0] >= start and rows[-1] < stop)))
        restricted.append(sub.observable(p.representative.values[start:stop]))
    reg_full = Registry.from_observables(list(observables))
    reg_band = Registry.from_observables(restricted)
    n = len(observables)
    raw_full = _raw_gram(model, list(observables))
    raw_band = _raw_gram(sub, restricted)
    scale = max(np.max(np.abs(raw_full)), 1e-300)
    err = float(np.max(np.abs(raw_full - raw_band)) / scale)
    iso = _same_products(reg_full, reg_band) if err <= 1e-8 else False
    return TimeSliceReport(band, handles_equal, raw_full, raw_band, err, in_band, iso)


def _raw_gram(model, obs: Sequence) -> np.ndarray:
    n = len(obs)
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[i, j] = model.gram_form(obs[i], obs[j])
    return out


def _same_products(reg_a: Registry, reg_b: Registry, tol: float = 1e-8) -> bool:
    """Degree-two products agree up to ``tol`` relative in their scalar parts."""
    gens = lambda reg: [inject(reg, h) for h in reg.handles]  # noqa: E731
    ga, gb = gens(reg_a), gens(reg_b)
    scale = max((abs(complex(v)) for row in reg_a.gram for v in row), default=0.0) or 1.0
    for xa, xb in zip(ga, gb):
        for ya, yb in zip(ga, gb):
            pa, pb = xa * ya, xb * yb
            ma = {m: complex(c) for m, c in pa.terms.items()}
            mb = {m: complex(c) for m, c in pb.terms.items()}
            for m in set(ma) | set(mb):
                if abs(ma.get(m, 0) - mb.get(m, 0)) > tol * scale:
                    return False
    return True
