"""Forward-mode automatic differentiation with tagged, nestable jets.

A :class:`Jet` carries a value and a tuple of partial derivatives with respect
to a fixed set of seeded variables.  Values may be numpy arrays, so a single
jet evaluates a function and its gradient at many points at once.  Values and
partials may themselves be jets of an outer differentiation, which is how
second and higher derivatives are obtained.  Every seeding gets a fresh tag;
when two jets with different tags meet, the one with the larger (more recent)
tag is the active differentiation and the other is treated as a constant.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

_tags = itertools.count(1)


def new_tag() -> int:
    return next(_tags)


def _iszero(d) -> bool:
    return type(d) is int and d == 0


def _add(a, b):
    if _iszero(a):
        return b
    if _iszero(b):
        return a
    return a + b


def _scale(s, d):
    return 0 if _iszero(d) else s * d


class Jet:
    __slots__ = ("val", "der", "tag")
    __array_ufunc__ = None

    def __init__(self, val, der: Sequence, tag: int):
        self.val = val
        self.der = tuple(der)
        self.tag = tag

    def __repr__(self) -> str:
        return f"Jet(val={self.val!r}, der={self.der!r}, tag={self.tag})"

    @property
    def nvars(self) -> int:
        return len(self.der)

    def _lift(self, other):
        """Return (val, der) of ``other`` relative to this jet's tag."""
        if isinstance(other, Jet) and other.tag == self.tag:
            return other.val, other.der
        return other, (0,) * len(self.der)

    def __add__(self, other):
        if isinstance(other, Jet) and other.tag > self.tag:
            return other.__radd__(self)
        ov, od = self._lift(other)
        return Jet(self.val + ov, [_add(a, b) for a, b in zip(self.der, od)], self.tag)

    def __radd__(self, other):
        ov, od = self._lift(other)
        return Jet(ov + self.val, [_add(b, a) for a, b in zip(self.der, od)], self.tag)

    def __neg__(self):
        return Jet(-self.val, [0 if _iszero(d) else -d for d in self.der], self.tag)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet) and other.tag > self.tag:
            return other.__rsub__(self)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet) and other.tag > self.tag:
            return other.__rmul__(self)
        ov, od = self._lift(other)
        der = [_add(_scale(ov, a), _scale(self.val, b)) for a, b in zip(self.der, od)]
        return Jet(self.val * ov, der, self.tag)

    def __rmul__(self, other):
        ov, od = self._lift(other)
        der = [_add(_scale(ov, a), _scale(self.val, b)) for a, b in zip(self.der, od)]
        return Jet(ov * self.val, der, self.tag)

    def __truediv__(self, other):
        if isinstance(other, Jet) and other.tag > self.tag:
            return other.__rtruediv__(self)
        ov, od = self._lift(other)
        val = self.val / ov
        der = [_scale(1.0 / ov, _add(a, _scale(-val, b))) for a, b in zip(self.der, od)]
        return Jet(val, der, self.tag)

    def __rtruediv__(self, other):
        ov, od = self._lift(other)
        val = ov / self.val
        der = [_scale(1.0 / self.val, _add(b, _scale(-val, a))) for a, b in zip(self.der, od)]
        return Jet(val, der, self.tag)

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        if p == 0:
            return Jet(self.val ** 0, (0,) * len(self.der), self.tag)
        if p == 1:
            return self
        if p == 2:
            return self * self
        f = p * self.val ** (p - 1)
        return Jet(self.val ** p, [_scale(f, d) for d in self.der], self.tag)

    def __rpow__(self, base):
        return exp(self * log(base))

    @property
    def real(self):
        return Jet(_real(self.val), [0 if _iszero(d) else _real(d) for d in self.der], self.tag)

    @property
    def imag(self):
        return Jet(_imag(self.val), [0 if _iszero(d) else _imag(d) for d in self.der], self.tag)

    def conjugate(self):
        return Jet(_conj(self.val), [0 if _iszero(d) else _conj(d) for d in self.der], self.tag)


def _real(x):
    return x.real if isinstance(x, Jet) else np.real(x)


def _imag(x):
    return x.imag if isinstance(x, Jet) else np.imag(x)


def _conj(x):
    return x.conjugate() if isinstance(x, Jet) else np.conj(x)


def primal(x):
    """Innermost value of a possibly nested jet."""
    while isinstance(x, Jet):
        x = x.val
    return x


def exp(x):
    if isinstance(x, Jet):
        v = exp(x.val)
        return Jet(v, [_scale(v, d) for d in x.der], x.tag)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        return Jet(log(x.val), [_scale(1.0 / x.val, d) for d in x.der], x.tag)
    return np.log(x)


def sin(x):
    if isinstance(x, Jet):
        c = cos(x.val)
        return Jet(sin(x.val), [_scale(c, d) for d in x.der], x.tag)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s = -sin(x.val)
        return Jet(cos(x.val), [_scale(s, d) for d in x.der], x.tag)
    return np.cos(x)


def sqrt(x):
    if isinstance(x, Jet):
        r = sqrt(x.val)
        return Jet(r, [_scale(0.5 / r, d) for d in x.der], x.tag)
    return np.sqrt(x)


def real(x):
    return _real(x)


def imag(x):
    return _imag(x)


def conj(x):
    return _conj(x)


def where(cond, a, b):
    """Elementwise select driven by a plain boolean mask."""
    ta = a.tag if isinstance(a, Jet) else 0
    tb = b.tag if isinstance(b, Jet) else 0
    if ta == 0 and tb == 0:
        return np.where(cond, a, b)
    tag = max(ta, tb)
    av, ad = (a.val, a.der) if ta == tag else (a, None)
    bv, bd = (b.val, b.der) if tb == tag else (b, None)
    nv = len(ad if ad is not None else bd)
    ad = ad if ad is not None else (0,) * nv
    bd = bd if bd is not None else (0,) * nv
    der = []
    for x, y in zip(ad, bd):
        if _iszero(x) and _iszero(y):
            der.append(0)
        else:
            der.append(where(cond, x, y))
    return Jet(where(cond, av, bv), der, tag)


def seed(values: Sequence, tag: int | None = None) -> list[Jet]:
    """Independent variables: jets with unit partials in their own slot."""
    tag = new_tag() if tag is None else tag
    n = len(values)
    return [Jet(v, [1.0 if i == j else 0 for j in range(n)], tag) for i, v in enumerate(values)]


def value_and_grad(fn: Callable, args: Sequence):
    """Evaluate ``fn(*args)`` together with its partials in every argument.

    Arguments may be jets of an outer differentiation; results then carry
    those outer derivatives along.
    """
    tag = new_tag()
    out = fn(*seed(args, tag))
    if isinstance(out, Jet) and out.tag == tag:
        return out.val, tuple(out.der)
    return out, (0,) * len(args)
