"""Hyper-dual numbers for exact first and mixed second derivatives.

A hyper-dual number is ``a + b e1 + c e2 + d e1 e2`` with ``e1**2 == e2**2 == 0``.
Evaluating a smooth function at ``x + u e1 + v e2`` yields ``f(x)``, the two
directional derivatives ``Df[u]``, ``Df[v]`` and the mixed second derivative
``D2f[u, v]`` in the ``e1 e2`` slot, free of truncation error.

The four parts may be numpy arrays; all arithmetic broadcasts, so one
evaluation differentiates a whole batch of points and directions at once.

Norm evaluators are written against the helpers in this module (``sqrt``,
``exp``, ...), which dispatch to numpy for plain floats/arrays.
"""
from __future__ import annotations

import numpy as np


class HyperDual:
    __slots__ = ("a", "b", "c", "d")
    # numpy must defer to our reflected operators instead of broadcasting
    # over an object array.
    __array_ufunc__ = None

    def __init__(self, a, b=0.0, c=0.0, d=0.0):
        self.a = a
        self.b = b
        self.c = c
        self.d = d

    def __repr__(self):
        return f"HyperDual({self.a!r}, {self.b!r}, {self.c!r}, {self.d!r})"

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.a + other.a, self.b + other.b,
                             self.c + other.c, self.d + other.d)
        return HyperDual(self.a + other, self.b, self.c, self.d)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.a, -self.b, -self.c, -self.d)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.a - other.a, self.b - other.b,
                             self.c - other.c, self.d - other.d)
        return HyperDual(self.a - other, self.b, self.c, self.d)

    def __rsub__(self, other):
        return HyperDual(other - self.a, -self.b, -self.c, -self.d)

    def __mul__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.a * other.a,
                self.a * other.b + self.b * other.a,
                self.a * other.c + self.c * other.a,
                self.a * other.d + self.b * other.c + self.c * other.b + self.d * other.a,
            )
        return HyperDual(self.a * other, self.b * other, self.c * other, self.d * other)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.a
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, HyperDual):
            return self * other.reciprocal()
        return HyperDual(self.a / other, self.b / other, self.c / other, self.d / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, HyperDual):
            return (self.log() * p).exp()
        if p == 2:
            return self * self
        if p == 1:
            return self
        a = self.a
        f0 = a ** p
        f1 = p * a ** (p - 1)
        f2 = p * (p - 1) * a ** (p - 2)
        return self._chain(f0, f1, f2)

    def __rpow__(self, base):
        return (self * np.log(base)).exp()

    # -- elementary functions ------------------------------------------
    def _chain(self, f0, f1, f2):
        return HyperDual(f0, f1 * self.b, f1 * self.c,
                         f1 * self.d + f2 * self.b * self.c)

    def sqrt(self):
        s = np.sqrt(self.a)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.a))

    def exp(self):
        e = np.exp(self.a)
        return self._chain(e, e, e)

    def log(self):
        return self._chain(np.log(self.a), 1.0 / self.a, -1.0 / (self.a * self.a))

    def sin(self):
        s, c = np.sin(self.a), np.cos(self.a)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.a), np.cos(self.a)
        return self._chain(c, -s, -c)

    def tan(self):
        t = np.tan(self.a)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def sinh(self):
        s, c = np.sinh(self.a), np.cosh(self.a)
        return self._chain(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.a), np.cosh(self.a)
        return self._chain(c, s, c)

    def tanh(self):
        t = np.tanh(self.a)
        s = 1.0 - t * t
        return self._chain(t, s, -2.0 * t * s)

    def arctan(self):
        a = self.a
        q = 1.0 / (1.0 + a * a)
        return self._chain(np.arctan(a), q, -2.0 * a * q * q)

    def abs(self):
        # sign(0) = 0: the kink contributes nothing to first or second order
        s = np.sign(self.a)
        return self._chain(np.abs(self.a), s, 0.0 * s)

    def __abs__(self):
        return self.abs()


def _dispatch(name, npfunc):
    def f(x):
        if isinstance(x, HyperDual):
            return getattr(x, name)()
        return npfunc(x)
    f.__name__ = name
    return f


sqrt = _dispatch("sqrt", np.sqrt)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
tan = _dispatch("tan", np.tan)
sinh = _dispatch("sinh", np.sinh)
cosh = _dispatch("cosh", np.cosh)
tanh = _dispatch("tanh", np.tanh)
arctan = _dispatch("arctan", np.arctan)
fabs = _dispatch("abs", np.abs)


def dot(u, v):
    """Euclidean pairing of two component sequences."""
    total = u[0] * v[0]
    for ui, vi in zip(u[1:], v[1:]):
        total = total + ui * vi
    return total


def real(x):
    return x.a if isinstance(x, HyperDual) else x


def derivatives(f, t):
    """Return ``(f(t), f'(t), f''(t))`` for a scalar function written with
    this module's helpers."""
    t = np.asarray(t, dtype=float)
    r = f(HyperDual(t, np.ones_like(t), np.ones_like(t), np.zeros_like(t)))
    if not isinstance(r, HyperDual):
        z = np.zeros_like(t)
        return np.broadcast_to(r, t.shape).astype(float), z, z
    return (np.broadcast_to(r.a, t.shape).astype(float),
            np.broadcast_to(r.b, t.shape).astype(float),
            np.broadcast_to(r.d, t.shape).astype(float))
