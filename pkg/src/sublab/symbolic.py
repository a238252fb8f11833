"""Term algebra in the generators ``H1``, ``Z = H2 + i H3`` and ``Zbar``.

A :class:`PolySymbol` is a finite sum ``sum c_{klw}(x, y, z) Z^k Zbar^l H1^w``.
Coefficients are :class:`Coeff` objects: complex linear combinations of
products of named base functions ("atoms").  Atoms are owned by a
:class:`SymbolAlgebra` tied to one chart; derivatives ``X``, ``Xp`` (the
perpendicular field) and ``V = d_z`` of an atom are new atoms evaluated by
forward-mode differentiation, so identical terms combine and cancel exactly.

Bracket rules used by :func:`bracket_poly`::

    {Z, Zbar} = 2i H1
    {H1, Z} = i K+ Z + i K- Zbar        {H1, Zbar} = -i K- Z - i K+ Zbar
    {H1, f} = X f    {Z, f} = (Xp + iV) f    {Zbar, f} = (Xp - iV) f
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from . import jets
from .errors import ResonantTerm
from .phasespace import ConformalChart, PhasePoint, frame, get_chart

H1_MIN = 1e-8
_PRUNE = 1e-13


class Coeff:
    """Linear combination ``sum_t c_t prod(atoms_t)`` with complex scalars."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, complex] | None = None):
        self.terms = {k: complex(v) for k, v in (terms or {}).items() if abs(v) > _PRUNE}

    @classmethod
    def const(cls, c) -> "Coeff":
        return cls({(): c})

    @classmethod
    def atom(cls, name: str) -> "Coeff":
        return cls({(name,): 1.0})

    def is_zero(self) -> bool:
        return not self.terms

    def constant_value(self) -> complex | None:
        if not self.terms:
            return 0.0
        if set(self.terms) == {()}:
            return self.terms[()]
        return None

    def __add__(self, other) -> "Coeff":
        other = _as_coeff(other)
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0) + v
        return Coeff(t)

    __radd__ = __add__

    def __neg__(self) -> "Coeff":
        return Coeff({k: -v for k, v in self.terms.items()})

    def __sub__(self, other) -> "Coeff":
        return self + (-_as_coeff(other))

    def __rsub__(self, other) -> "Coeff":
        return _as_coeff(other) - self

    def __mul__(self, other) -> "Coeff":
        if isinstance(other, (int, float, complex)):
            return Coeff({k: v * other for k, v in self.terms.items()})
        other = _as_coeff(other)
        t: dict[tuple, complex] = {}
        for (k1, v1), (k2, v2) in itertools.product(self.terms.items(), other.terms.items()):
            k = tuple(sorted(k1 + k2))
            t[k] = t.get(k, 0) + v1 * v2
        return Coeff(t)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "Coeff":
        return self * (1.0 / c)

    def __eq__(self, other) -> bool:
        other = _as_coeff(other)
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= 1e-12 for k in keys)

    def __hash__(self):
        return hash(tuple(sorted(self.terms)))

    def __repr__(self) -> str:
        return f"Coeff({format_coeff(self)})"


def _as_coeff(x) -> Coeff:
    if isinstance(x, Coeff):
        return x
    if isinstance(x, (int, float, complex, np.number)):
        return Coeff.const(complex(x))
    raise TypeError(f"cannot use {type(x).__name__} as a coefficient")


def _fmt_real(x: float) -> str:
    f = Fraction(x).limit_denominator(1000)
    if abs(float(f) - x) <= 1e-12 * max(1.0, abs(x)):
        return str(f)
    return repr(x)


def format_scalar(c: complex) -> str:
    re, im = c.real, c.imag
    if abs(im) <= 1e-14:
        return _fmt_real(re)
    if abs(re) <= 1e-14:
        return f"{_fmt_real(im)}i"
    sign = "+" if im > 0 else "-"
    return f"({_fmt_real(re)} {sign} {_fmt_real(abs(im))}i)"


def format_coeff(c: Coeff) -> str:
    if c.is_zero():
        return "0"
    parts = []
    for atoms, v in sorted(c.terms.items()):
        s = format_scalar(v)
        if atoms:
            s = s + "*" + "*".join(atoms)
        parts.append(s)
    return " + ".join(parts)


_OPS = ("X", "Xp", "V")


class SymbolAlgebra:
    """Registry of atoms and their derivatives for one chart."""

    def __init__(self, chart: ConformalChart | str = "flat"):
        self.chart = get_chart(chart) if isinstance(chart, str) else chart
        self._atoms: dict[str, tuple[Callable, bool]] = {}
        if self.chart.flat:
            self.k_minus = Coeff.const(0.5)
        else:
            chart = self.chart
            self.register("K-", lambda x, y, z: chart.k_minus(x, y), z_dependent=False)
            self.k_minus = Coeff.atom("K-")
        self.k_plus = 1.0 - self.k_minus

    def register(self, name: str, fn: Callable, z_dependent: bool = True) -> Coeff:
        if name in self._atoms and self._atoms[name][0] is not fn:
            raise ValueError(f"atom {name!r} already registered")
        self._atoms[name] = (fn, z_dependent)
        return Coeff.atom(name)

    def atom_fn(self, name: str) -> Callable:
        return self._atoms[name][0]

    def _frame_derivative(self, fn: Callable, op: str) -> Callable:
        chart = self.chart

        def d(x, y, z):
            _, (fx, fy, fz) = jets.value_and_grad(fn, (x, y, z))
            if op == "V":
                return fz
            e = jets.exp(-chart.lam(x, y))
            lx, ly = chart.grad(x, y)
            c, s = jets.cos(z), jets.sin(z)
            if op == "X":
                return e * (c * fx + s * fy + (ly * c - lx * s) * fz)
            return e * (s * fx - c * fy + (lx * c + ly * s) * fz)
        return d

    def _derived_atom(self, name: str, op: str) -> str | None:
        fn, zdep = self._atoms[name]
        if op == "V" and not zdep:
            return None
        new = f"{op}({name})"
        if new not in self._atoms:
            self._atoms[new] = (self._frame_derivative(fn, op), True if op != "V" else zdep)
        return new

    def atom_derivative(self, name: str, op: str) -> Coeff:
        """``op(name)`` with ``V`` moved innermost by ``[V, X] = -Xp`` and ``[V, Xp] = X``."""
        if op == "V":
            for outer, partner, sign in (("X", "Xp", -1.0), ("Xp", "X", 1.0)):
                prefix = outer + "("
                if name.startswith(prefix) and name.endswith(")") and name[len(prefix):-1] in self._atoms:
                    inner = name[len(prefix):-1]
                    out = Coeff.atom(self._derived_atom(inner, partner)) * sign
                    for atoms, v in self.atom_derivative(inner, "V").terms.items():
                        for a in atoms:
                            out = out + Coeff.atom(self._derived_atom(a, outer)) * v
                    return out
        new = self._derived_atom(name, op)
        return Coeff() if new is None else Coeff.atom(new)

    def derivative(self, c: Coeff, op: str) -> Coeff:
        """Apply the frame field ``op`` in {X, Xp, V} by the Leibniz rule."""
        if op not in _OPS:
            raise ValueError(f"unknown derivative {op!r}")
        out = Coeff()
        for atoms, v in c.terms.items():
            for i, a in enumerate(atoms):
                rest = Coeff({atoms[:i] + atoms[i + 1:]: v})
                out = out + rest * self.atom_derivative(a, op)
        return out

    def evaluate_coeff(self, c: Coeff, x, y, z):
        total = 0.0
        for atoms, v in c.terms.items():
            term = v
            for a in atoms:
                term = term * self._atoms[a][0](x, y, z)
            total = total + term
        return total

    # generators
    def one(self) -> "PolySymbol":
        return PolySymbol({(0, 0, 0): Coeff.const(1.0)}, self)

    def const(self, c) -> "PolySymbol":
        return PolySymbol({(0, 0, 0): _as_coeff(c)}, self)

    def coeff(self, c: Coeff) -> "PolySymbol":
        return PolySymbol({(0, 0, 0): c}, self)

    def Z(self) -> "PolySymbol":
        return PolySymbol({(1, 0, 0): Coeff.const(1.0)}, self)

    def Zb(self) -> "PolySymbol":
        return PolySymbol({(0, 1, 0): Coeff.const(1.0)}, self)

    def H1(self, power: int = 1) -> "PolySymbol":
        return PolySymbol({(0, 0, power): Coeff.const(1.0)}, self)

    def H2(self) -> "PolySymbol":
        return (self.Z() + self.Zb()) * 0.5

    def H3(self) -> "PolySymbol":
        return (self.Z() - self.Zb()) * (-0.5j)

    def abs_Z2(self) -> "PolySymbol":
        return self.Z() * self.Zb()


@dataclass(frozen=True)
class ComplexTerm:
    """``coeff * Z^k Zbar^l H1^h1pow``."""

    k: int
    l: int
    coeff: Coeff
    h1pow: int = 0

    def __post_init__(self):
        if self.k < 0 or self.l < 0:
            raise ValueError("powers of Z and Zbar must be nonnegative")
        object.__setattr__(self, "coeff", _as_coeff(self.coeff))


class PolySymbol:
    """Finite sum ``sum c_{klw} Z^k Zbar^l H1^w``."""

    def __init__(self, terms: Mapping[tuple, Coeff], algebra: SymbolAlgebra):
        self.algebra = algebra
        self.terms = {key: c for key, c in terms.items() if not c.is_zero()}

    @classmethod
    def from_real(cls, coeffs: Mapping[tuple, object], algebra: SymbolAlgebra, weight: int = 0) -> "PolySymbol":
        """``sum_alpha a_alpha H1^weight (H2/H1)^a2 (H3/H1)^a3``."""
        out = cls({}, algebra)
        H2, H3 = algebra.H2(), algebra.H3()
        for (a2, a3), c in coeffs.items():
            term = algebra.coeff(_as_coeff(c)) * algebra.H1(weight - a2 - a3)
            for _ in range(a2):
                term = term * H2
            for _ in range(a3):
                term = term * H3
            out = out + term
        return out

    def _check(self, other: "PolySymbol") -> None:
        if other.algebra is not self.algebra:
            raise ValueError("symbols belong to different algebras")

    def _lift(self, other) -> "PolySymbol":
        if isinstance(other, PolySymbol):
            self._check(other)
            return other
        return self.algebra.const(other) if not isinstance(other, Coeff) else self.algebra.coeff(other)

    def __add__(self, other) -> "PolySymbol":
        other = self._lift(other)
        t = dict(self.terms)
        for k, c in other.terms.items():
            t[k] = t[k] + c if k in t else c
        return PolySymbol(t, self.algebra)

    __radd__ = __add__

    def __neg__(self) -> "PolySymbol":
        return PolySymbol({k: -c for k, c in self.terms.items()}, self.algebra)

    def __sub__(self, other) -> "PolySymbol":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "PolySymbol":
        return self._lift(other) - self

    def __mul__(self, other) -> "PolySymbol":
        if isinstance(other, (int, float, complex)):
            return PolySymbol({k: c * other for k, c in self.terms.items()}, self.algebra)
        other = self._lift(other)
        t: dict[tuple, Coeff] = {}
        for (k1, c1), (k2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
            t[k] = t[k] + c1 * c2 if k in t else c1 * c2
        return PolySymbol(t, self.algebra)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not self.terms

    def complex_terms(self) -> list[ComplexTerm]:
        return [ComplexTerm(k, l, c, w) for (k, l, w), c in sorted(self.terms.items())]

    def part(self, pred: Callable[[int, int, int], bool]) -> "PolySymbol":
        return PolySymbol({k: c for k, c in self.terms.items() if pred(*k)}, self.algebra)

    def degrees(self) -> set[int]:
        return {k + l for (k, l, _) in self.terms}

    def evaluate_at(self, x, y, z, H1, H2, H3):
        """Value at base point ``(x, y, z)`` with prescribed ``H1, H2, H3``."""
        if np.any(np.abs(jets.primal(H1)) < H1_MIN):
            raise ValueError("symbols are evaluated only where |H1| >= 1e-8")
        Z = H2 + 1j * H3
        Zb = H2 - 1j * H3
        total = 0.0
        for (k, l, w), c in self.terms.items():
            cv = self.algebra.evaluate_coeff(c, x, y, z)
            term = cv
            if k:
                term = term * Z ** k
            if l:
                term = term * Zb ** l
            if w:
                term = term * H1 ** w
            total = total + term
        return total

    def phase_function(self) -> Callable:
        chart = self.algebra.chart

        def f(x, y, z, xi, eta, zeta):
            h1, h2, h3 = frame(chart, x, y, z, xi, eta, zeta)
            return self.evaluate_at(x, y, z, h1, h2, h3)
        return f

    def evaluate(self, pt: PhasePoint):
        return self.phase_function()(*pt.coords())

    def real_form(self) -> dict[tuple, Coeff]:
        """``{(weight, a2, a3): coeff}`` for ``coeff H1^weight (H2/H1)^a2 (H3/H1)^a3``."""
        out: dict[tuple, Coeff] = {}
        for (k, l, w), c in self.terms.items():
            # (H2 + iH3)^k (H2 - iH3)^l
            poly = {(0, 0): 1.0 + 0j}
            for sgn, power in ((1j, k), (-1j, l)):
                for _ in range(power):
                    nxt: dict[tuple, complex] = {}
                    for (p, q), v in poly.items():
                        nxt[(p + 1, q)] = nxt.get((p + 1, q), 0) + v
                        nxt[(p, q + 1)] = nxt.get((p, q + 1), 0) + sgn * v
                    poly = nxt
            for (p, q), v in poly.items():
                key = (w + p + q, p, q)
                out[key] = out.get(key, Coeff()) + c * v
        return {k: v for k, v in out.items() if not v.is_zero()}

    def pretty(self) -> str:
        lines = []
        for (w, p, q), c in sorted(self.real_form().items()):
            lines.append(f"[{format_coeff(c)}] * H1^{w} (H2/H1)^{p} (H3/H1)^{q}")
        return "\n".join(lines) if lines else "0"

    def __repr__(self) -> str:
        body = " + ".join(f"[{format_coeff(c)}] Z^{k} Zb^{l} H1^{w}" for (k, l, w), c in sorted(self.terms.items()))
        return f"PolySymbol({body or '0'})"


def _gen_bracket(alg: SymbolAlgebra, ga: str, gb: str, fa: Coeff | None, fb: Coeff | None) -> PolySymbol:
    """Bracket of two generators; ``'f'`` stands for the coefficient ``fa``/``fb``."""
    i = 1j
    Z, Zb, H = alg.Z(), alg.Zb(), alg.H1()
    kp, km = alg.k_plus, alg.k_minus
    d = alg.derivative
    if ga == "f" and gb == "f":
        return PolySymbol({}, alg)
    if ga == "f":
        return -_gen_bracket(alg, gb, "f", None, fa)
    if gb == "f":
        if ga == "Z":
            return alg.coeff(d(fb, "Xp") + d(fb, "V") * i)
        if ga == "Zb":
            return alg.coeff(d(fb, "Xp") - d(fb, "V") * i)
        return alg.coeff(d(fb, "X"))
    if ga == gb:
        return PolySymbol({}, alg)
    table = {
        ("Z", "Zb"): H * (2 * i),
        ("H", "Z"): alg.coeff(kp * i) * Z + alg.coeff(km * i) * Zb,
        ("H", "Zb"): alg.coeff(km * -i) * Z + alg.coeff(kp * -i) * Zb,
    }
    if (ga, gb) in table:
        return table[(ga, gb)]
    return -table[(gb, ga)]


def _partials(alg: SymbolAlgebra, key: tuple, c: Coeff):
    """``(generator, d(term)/d(generator) as PolySymbol)`` for one monomial."""
    k, l, w = key
    out = [("f", PolySymbol({key[:2] + (w,): Coeff.const(1.0)}, alg))]
    if k:
        out.append(("Z", PolySymbol({(k - 1, l, w): c * k}, alg)))
    if l:
        out.append(("Zb", PolySymbol({(k, l - 1, w): c * l}, alg)))
    if w:
        out.append(("H", PolySymbol({(k, l, w - 1): c * w}, alg)))
    return out


def bracket_poly(A: PolySymbol, B: PolySymbol) -> PolySymbol:
    """Poisson bracket ``{A, B}`` expanded in the generator algebra."""
    A._check(B)
    alg = A.algebra
    out = PolySymbol({}, alg)
    for ka, ca in A.terms.items():
        pa = _partials(alg, ka, ca)
        for kb, cb in B.terms.items():
            pb = _partials(alg, kb, cb)
            for ga, da in pa:
                for gb, db in pb:
                    g = _gen_bracket(alg, ga, gb, ca, cb)
                    if g.is_zero():
                        continue
                    out = out + da * db * g
    return out


def solve_cohomological(term: ComplexTerm) -> ComplexTerm:
    """``G = coeff Z^k Zbar^l H1^w / (2i(l-k))``, so ``{|Z|^2, G} = H1 * term`` up to coefficient derivatives."""
    if term.k == term.l:
        raise ResonantTerm(f"Z^{term.k} Zbar^{term.l} is resonant")
    return ComplexTerm(term.k, term.l, term.coeff * (1.0 / (2j * (term.l - term.k))), term.h1pow)


def _term_symbol(alg: SymbolAlgebra, t: ComplexTerm) -> PolySymbol:
    return PolySymbol({(t.k, t.l, t.h1pow): t.coeff}, alg)


def _algebra(chart_or_alg) -> SymbolAlgebra:
    if isinstance(chart_or_alg, SymbolAlgebra):
        return chart_or_alg
    return SymbolAlgebra(chart_or_alg)


def deformation_P2(chart_or_alg) -> PolySymbol:
    """``P2 = (K-/2)((H2/H1)^2 - (H3/H1)^2)``."""
    alg = _algebra(chart_or_alg)
    km = alg.k_minus
    return PolySymbol.from_real({(2, 0): km * 0.5, (0, 2): km * -0.5}, alg)


def deformation_H1P3(chart_or_alg) -> PolySymbol:
    """``H1 P3`` cancelling the degree-3 part of ``{|Z|^2, H1(1 + P2)}``."""
    alg = _algebra(chart_or_alg)
    base = alg.H1() + alg.H1() * deformation_P2(alg)
    rem = bracket_poly(alg.abs_Z2(), base).part(lambda k, l, w: k + l == 3)
    out = PolySymbol({}, alg)
    for t in rem.complex_terms():
        g = solve_cohomological(ComplexTerm(t.k, t.l, -t.coeff, t.h1pow - 1))
        out = out + _term_symbol(alg, g)
    return out


def build_H1_deformation(chart_or_alg) -> PolySymbol:
    """``H1 (1 + P2 + P3)``."""
    alg = _algebra(chart_or_alg)
    return alg.H1() + alg.H1() * deformation_P2(alg) + deformation_H1P3(alg)


def build_symbol_deformation(a, chart_or_alg, name: str = "a", z_dependent: bool = True) -> PolySymbol:
    """Deformation ``sum_{|alpha|<=2} a_alpha (H2/H1)^a2 (H3/H1)^a3`` of a base function ``a``."""
    alg = _algebra(chart_or_alg)
    if isinstance(a, (int, float, complex)):
        return alg.const(a)
    _check_twice_differentiable(a)
    ac = alg.register(name, a, z_dependent)
    d = alg.derivative
    Va, Xpa = d(ac, "V"), d(ac, "Xp")
    A = d(Xpa, "Xp") - d(Va, "V")
    B = d(Va, "Xp") + d(Xpa, "V")
    return PolySymbol.from_real({(0, 0): ac, (1, 0): -Va, (0, 1): Xpa,
                                 (2, 0): A * -0.25, (0, 2): A * 0.25, (1, 1): B * -0.5}, alg)


def _check_twice_differentiable(a: Callable) -> None:
    def second(x, y, z):
        _, g = jets.value_and_grad(a, (x, y, z))
        return sum(g)
    try:
        _, g = jets.value_and_grad(second, (0.1, 0.2, 0.3))
        np.asarray([complex(jets.primal(v)) for v in g])
    except Exception as exc:  # the callable is not generic in its arguments
        raise ValueError("coefficient function must support two derivatives") from exc


def symbol_defect(abold: PolySymbol, a_name: str = "a") -> PolySymbol:
    """``{|Z|^2, a_bold} - (|Z|^2 / H1) X(a)``."""
    alg = abold.algebra
    Xa = alg.derivative(Coeff.atom(a_name), "X")
    return bracket_poly(alg.abs_Z2(), abold) - alg.abs_Z2() * alg.H1(-1) * alg.coeff(Xa)
