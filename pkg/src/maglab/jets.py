"""Truncated two-variable Taylor jets, vectorized over evaluation points.

A jet of order k stores the Taylor coefficients c[i,j] (i+j <= k) of a
smooth function around each evaluation point, as a (ncoef, N) float array.
Arithmetic is truncated polynomial arithmetic, so every derivative the
package reports is analytic: no finite differencing anywhere in the field
evaluators (finite differences appear only as independent test oracles).

Coefficient convention: f = sum c[i,j] dx^i dy^j, i.e. c[i,j] is the
partial derivative d^{i+j} f / dx^i dy^j divided by i! j!.
"""

from __future__ import annotations

import math

import numpy as np

MAX_ORDER = 3

# (i, j) layout grouped by total degree; position lookup and per-order sizes.
_PAIRS: list[tuple[int, int]] = []
for _d in range(MAX_ORDER + 1):
    for _i in range(_d, -1, -1):
        _PAIRS.append((_i, _d - _i))
_POS = {ij: k for k, ij in enumerate(_PAIRS)}
_NCOEF = [sum(d + 1 for d in range(o + 1)) for o in range(MAX_ORDER + 1)]

# Multiplication tables: for each order, triples (out, left, right).
_MUL: dict[int, list[tuple[int, int, int]]] = {}
for _o in range(MAX_ORDER + 1):
    table = []
    n = _NCOEF[_o]
    for ka, (ia, ja) in enumerate(_PAIRS[:n]):
        for kb, (ib, jb) in enumerate(_PAIRS[:n]):
            if ia + ib + ja + jb <= _o:
                table.append((_POS[(ia + ib, ja + jb)], ka, kb))
    _MUL[_o] = table

_FACT = [math.factorial(m) for m in range(MAX_ORDER + 1)]


class Jet:
    """Order-k jet over a batch of points; coefficients shape (ncoef, N)."""

    __slots__ = ("order", "c")

    def __init__(self, order: int, c: np.ndarray):
        self.order = order
        self.c = c

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def deriv(self, i: int, j: int) -> np.ndarray:
        """Partial derivative value d^{i+j}/dx^i dy^j (not the raw coefficient)."""
        return self.c[_POS[(i, j)]] * (_FACT[i] * _FACT[j])

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(order: int, n: int) -> "Jet":
        return Jet(order, np.zeros((_NCOEF[order], n)))

    @staticmethod
    def const(values, order: int, n: int | None = None) -> "Jet":
        v = np.asarray(values, dtype=float)
        if n is None:
            n = v.size if v.ndim else 1
        c = np.zeros((_NCOEF[order], n))
        c[0] = v
        return Jet(order, c)

    @staticmethod
    def coordinates(z: np.ndarray, order: int) -> tuple["Jet", "Jet"]:
        """Jets of the coordinate functions x and y at the points z."""
        z = np.asarray(z, dtype=complex).ravel()
        n = z.size
        cx = np.zeros((_NCOEF[order], n))
        cy = np.zeros((_NCOEF[order], n))
        cx[0] = z.real
        cy[0] = z.imag
        if order >= 1:
            cx[_POS[(1, 0)]] = 1.0
            cy[_POS[(0, 1)]] = 1.0
        return Jet(order, cx), Jet(order, cy)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.order, self.c + other.c)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(self.order, c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.order, self.c - other.c)
        c = self.c.copy()
        c[0] = c[0] - other
        return Jet(self.order, c)

    def __rsub__(self, other):
        c = -self.c
        c[0] = c[0] + other
        return Jet(self.order, c)

    def __neg__(self):
        return Jet(self.order, -self.c)

    def __mul__(self, other):
        if isinstance(other, Jet):
            out = np.zeros_like(self.c)
            a, b = self.c, other.c
            for ko, ka, kb in _MUL[self.order]:
                out[ko] += a[ka] * b[kb]
            return Jet(self.order, out)
        return Jet(self.order, self.c * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.order, self.c / other)

    # -- calculus ------------------------------------------------------

    def dx(self) -> "Jet":
        """Jet of the x-derivative; order drops by one."""
        o = self.order - 1
        out = np.zeros((_NCOEF[o], self.c.shape[1]))
        for k, (i, j) in enumerate(_PAIRS[:_NCOEF[o]]):
            out[k] = (i + 1) * self.c[_POS[(i + 1, j)]]
        return Jet(o, out)

    def dy(self) -> "Jet":
        o = self.order - 1
        out = np.zeros((_NCOEF[o], self.c.shape[1]))
        for k, (i, j) in enumerate(_PAIRS[:_NCOEF[o]]):
            out[k] = (j + 1) * self.c[_POS[(i, j + 1)]]
        return Jet(o, out)

    def compose(self, derivs: list[np.ndarray]) -> "Jet":
        """Outer 1-D composition g(self) from derivative values of g.

        derivs[m] must be g^(m) evaluated at self.value, m = 0..order.
        """
        c = self.c.copy()
        c[0] = 0.0  # (self - a0), zero constant term
        t = Jet(self.order, c)
        out = Jet.const(derivs[0], self.order, self.c.shape[1])
        power = None
        for m in range(1, self.order + 1):
            power = t if power is None else power * t
            out = out + power * (np.asarray(derivs[m], dtype=float) / _FACT[m])
        return out

    def reciprocal(self) -> "Jet":
        a0 = self.value
        derivs = [1.0 / a0]
        for m in range(1, self.order + 1):
            derivs.append(derivs[-1] * (-m) / a0)
        # derivs[m] built as (-1)^m m!/a0^{m+1}
        return self.compose(derivs)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self.compose([e] * (self.order + 1))

    def log(self) -> "Jet":
        a0 = self.value
        derivs = [np.log(a0), 1.0 / a0]
        for m in range(2, self.order + 1):
            derivs.append(derivs[-1] * (-(m - 1)) / a0)
        return self.compose(derivs)

    def take(self, idx) -> "Jet":
        return Jet(self.order, self.c[:, idx])

    def truncated(self, order: int) -> "Jet":
        """Drop coefficients above the given total degree."""
        return Jet(order, self.c[:_NCOEF[order]])


def poly_abs2_diff(z: np.ndarray, w: complex, order: int) -> Jet:
    """Jet of |z - w|^2 (exact quadratic polynomial)."""
    z = np.asarray(z, dtype=complex).ravel()
    n = z.size
    c = np.zeros((_NCOEF[order], n))
    dxw = z.real - np.real(w)
    dyw = z.imag - np.imag(w)
    c[0] = dxw * dxw + dyw * dyw
    if order >= 1:
        c[_POS[(1, 0)]] = 2 * dxw
        c[_POS[(0, 1)]] = 2 * dyw
    if order >= 2:
        c[_POS[(2, 0)]] = 1.0
        c[_POS[(0, 2)]] = 1.0
    return Jet(order, c)


def poly_one_minus_abs2(z: np.ndarray, order: int) -> Jet:
    """Jet of 1 - |z|^2 (exact quadratic polynomial)."""
    z = np.asarray(z, dtype=complex).ravel()
    n = z.size
    c = np.zeros((_NCOEF[order], n))
    c[0] = 1.0 - (z.real * z.real + z.imag * z.imag)
    if order >= 1:
        c[_POS[(1, 0)]] = -2 * z.real
        c[_POS[(0, 1)]] = -2 * z.imag
    if order >= 2:
        c[_POS[(2, 0)]] = -1.0
        c[_POS[(0, 2)]] = -1.0
    return Jet(order, c)


# ---------------------------------------------------------------------------
# acosh(1+s)^2 and the bump profile, as 1-D derivative tables for Jet.compose.
# ---------------------------------------------------------------------------

_SERIES_CUT = 1e-2
# Taylor coefficients of F(s) = acosh(1+s)^2 at s=0 through s^7.
_F_COEF = np.array([0.0, 2.0, -1.0 / 3.0, 4.0 / 45.0, -1.0 / 35.0,
                    16.0 / 1575.0, -8.0 / 2079.0, 32.0 / 21021.0])


def acosh1p_sq_derivs(s: np.ndarray, order: int) -> list[np.ndarray]:
    """Derivatives F^(m)(s), m=0..order, of F(s) = acosh(1+s)^2, s >= 0.

    Closed forms cancel catastrophically as s -> 0, so a Taylor series is
    used below a crossover.
    """
    s = np.asarray(s, dtype=float)
    out = [np.empty_like(s) for _ in range(order + 1)]
    small = s < _SERIES_CUT
    big = ~small
    if np.any(big):
        sb = s[big]
        d = np.arccosh(1.0 + sb)
        sh = np.sinh(d)
        ch = 1.0 + sb
        out[0][big] = d * d
        if order >= 1:
            out[1][big] = 2.0 * d / sh
        if order >= 2:
            out[2][big] = 2.0 / sh**2 - 2.0 * d * ch / sh**3
        if order >= 3:
            out[3][big] = -6.0 * ch / sh**4 + 2.0 * d * (2.0 * ch**2 + 1.0) / sh**5
    if np.any(small):
        ss = s[small]
        for m in range(order + 1):
            coef = _F_COEF.copy()
            for _ in range(m):
                coef = coef[1:] * np.arange(1, coef.size)
            out[m][small] = np.polyval(coef[::-1], ss)
    return out


def bump_profile_derivs(y: np.ndarray, r: float, order: int) -> list[np.ndarray]:
    """Derivatives G^(m)(y) of G(y) = exp(1 - 1/(1 - y/r^2)) for y in [0, r^2).

    G is chi(t)^2-free: it is the bump profile expressed in y = t^2, which is
    what keeps the composite chi(dist) smooth through the center.
    """
    y = np.asarray(y, dtype=float)
    r2 = r * r
    w = r2 / (r2 - y)
    g = np.exp(1.0 - w)
    out = [g]
    if order >= 1:
        out.append(-g * w**2 / r2)
    if order >= 2:
        out.append(g * (w**4 - 2.0 * w**3) / r2**2)
    if order >= 3:
        out.append(g * w**4 * (-w * w + 6.0 * w - 6.0) / r2**3)
    return out
