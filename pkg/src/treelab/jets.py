"""Second-order Taylor jets in the spectral parameter.

A :class:`Jet` holds ``(f, f', f''/2)`` at a fixed ``lambda`` and supports
the arithmetic needed to push exact first and second derivatives through
the Weyl recursion and the Green-function assembly.
"""

from __future__ import annotations

from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


class Jet:
    __slots__ = ("c0", "c1", "c2")

    def __init__(self, c0: ArrayLike, c1: ArrayLike = 0.0, c2: ArrayLike = 0.0) -> None:
        c0, c1, c2 = np.broadcast_arrays(np.asarray(c0, float), np.asarray(c1, float), np.asarray(c2, float))
        self.c0, self.c1, self.c2 = c0, c1, c2

    @staticmethod
    def lift(x: "Jet | ArrayLike") -> "Jet":
        return x if isinstance(x, Jet) else Jet(x)

    @property
    def value(self) -> np.ndarray:
        return self.c0

    @property
    def d1(self) -> np.ndarray:
        return self.c1

    @property
    def d2(self) -> np.ndarray:
        return 2.0 * self.c2

    def __getitem__(self, idx) -> "Jet":
        return Jet(self.c0[idx], self.c1[idx], self.c2[idx])

    def __add__(self, o):
        o = Jet.lift(o)
        return Jet(self.c0 + o.c0, self.c1 + o.c1, self.c2 + o.c2)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c0, -self.c1, -self.c2)

    def __sub__(self, o):
        return self + (-Jet.lift(o))

    def __rsub__(self, o):
        return Jet.lift(o) - self

    def __mul__(self, o):
        o = Jet.lift(o)
        return Jet(
            self.c0 * o.c0,
            self.c0 * o.c1 + self.c1 * o.c0,
            self.c0 * o.c2 + self.c1 * o.c1 + self.c2 * o.c0,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        r0 = 1.0 / self.c0
        r1 = -self.c1 * r0 * r0
        r2 = -(self.c1 * r1 + self.c2 * r0) * r0
        return Jet(r0, r1, r2)

    def __truediv__(self, o):
        return self * Jet.lift(o).reciprocal()

    def __rtruediv__(self, o):
        return Jet.lift(o) * self.reciprocal()

    def log(self) -> "Jet":
        r = self.c1 / self.c0
        return Jet(np.log(self.c0), r, self.c2 / self.c0 - 0.5 * r * r)

    def sum(self, axis=None) -> "Jet":
        return Jet(self.c0.sum(axis=axis), self.c1.sum(axis=axis), self.c2.sum(axis=axis))

    def matvec(self, mat: np.ndarray) -> "Jet":
        """``mat @ self`` for a constant matrix."""
        return Jet(mat @ self.c0, mat @ self.c1, mat @ self.c2)

    def __repr__(self) -> str:
        return f"Jet({self.c0!r}, {self.c1!r}, {self.c2!r})"


def trig_jets(lam: float, sigma: ArrayLike, terms: int = 60) -> tuple[Jet, Jet]:
    """Jets in ``lambda`` of ``cos(sqrt(lam) s)`` and ``sin(sqrt(lam) s)/sqrt(lam)``.

    Uses the power series in ``lam * s**2``; accurate while that product
    stays below about 20, far beyond the range met for ``lam <= lambda_0``.
    """
    s = np.asarray(sigma, dtype=float)
    x = lam * s * s
    n = np.arange(terms, dtype=float)
    # a_n = (-1)^n / (2n)!, b_n = (-1)^n / (2n+1)!
    from scipy.special import gammaln

    sign = np.where(n % 2 == 0, 1.0, -1.0)
    a = sign * np.exp(-gammaln(2 * n + 1))
    b = sign * np.exp(-gammaln(2 * n + 2))
    xs = x[..., None]
    s2 = (s * s)[..., None]
    # powers x^n, n x^(n-1) s^2, n(n-1)/2 x^(n-2) s^4
    p0 = xs**n
    with np.errstate(invalid="ignore", divide="ignore"):
        p1 = np.where(n >= 1, n * xs ** np.maximum(n - 1, 0) * s2, 0.0)
        p2 = np.where(n >= 2, 0.5 * n * (n - 1) * xs ** np.maximum(n - 2, 0) * s2 * s2, 0.0)
    c = Jet((p0 * a).sum(-1), (p1 * a).sum(-1), (p2 * a).sum(-1))
    sn = Jet(s * (p0 * b).sum(-1), s * (p1 * b).sum(-1), s * (p2 * b).sum(-1))
    return c, sn
