"""Separable right-hand sides ``f(x1, x2) = g(x1) h(x2)`` with closed-form
sine coefficients on [0, 1].

Factors are sums of monomials, decaying exponentials anchored at either end
of the interval, and sine modes. Every factor knows its value, first and
second derivative, integral, and ``int_0^1 g(x) sin(m pi x) dx``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import Coefficient


def _mono_sin_cos(p: int, a):
    """``(int_0^1 x^p sin(a x), int_0^1 x^p cos(a x))`` by the usual recursion."""
    a = np.asarray(a, float)
    s = (1.0 - np.cos(a)) / a
    c = np.sin(a) / a
    for q in range(1, p + 1):
        s, c = -np.cos(a) / a + q / a * c, np.sin(a) / a - q / a * s
    return s, c


@dataclass(frozen=True)
class Monomial:
    coef: float
    power: int

    def value(self, x):
        return self.coef * np.asarray(x, float) ** self.power

    def deriv(self, x, order=1):
        p = self.power
        if order > p:
            return np.zeros(np.shape(x))
        fac = np.prod(np.arange(p, p - order, -1)) if order else 1
        return self.coef * fac * np.asarray(x, float) ** (p - order)

    def integral(self):
        return self.coef / (self.power + 1)

    def sine_coef(self, a):
        return self.coef * _mono_sin_cos(self.power, a)[0]


@dataclass(frozen=True)
class Exponential:
    """``coef * exp(-x / width)``, or ``exp(-(1 - x) / width)`` when ``right``."""

    coef: float
    width: float
    right: bool = False

    def _arg(self, x):
        x = np.asarray(x, float)
        return (1.0 - x) if self.right else x

    def value(self, x):
        return self.coef * np.exp(-self._arg(x) / self.width)

    def deriv(self, x, order=1):
        sign = 1.0 if self.right else -1.0
        return self.coef * (sign / self.width) ** order * np.exp(-self._arg(x) / self.width)

    def integral(self):
        return self.coef * self.width * -np.expm1(-1.0 / self.width)

    def sine_coef(self, a):
        a = np.asarray(a, float)
        b = 1.0 / self.width
        e = np.exp(-b)
        den = a * a + b * b
        es = (a - e * (b * np.sin(a) + a * np.cos(a))) / den
        if not self.right:
            return self.coef * es
        ec = (b - e * (b * np.cos(a) - a * np.sin(a))) / den
        # substitute z = 1 - x
        return self.coef * (np.sin(a) * ec - np.cos(a) * es)


@dataclass(frozen=True)
class SineMode:
    coef: float
    k: int

    def value(self, x):
        return self.coef * np.sin(self.k * np.pi * np.asarray(x, float))

    def deriv(self, x, order=1):
        w = self.k * np.pi
        x = np.asarray(x, float)
        # d^n/dx^n sin(w x) = w^n sin(w x + n pi / 2)
        return self.coef * w**order * np.sin(w * x + order * np.pi / 2)

    def integral(self):
        return self.coef * (1.0 - np.cos(self.k * np.pi)) / (self.k * np.pi)

    def sine_coef(self, a):
        a = np.asarray(a, float)
        return np.where(np.isclose(a, self.k * np.pi), 0.5 * self.coef, 0.0)


class Factor:
    """A 1D function on [0, 1] given as a sum of terms."""

    def __init__(self, *terms):
        self.terms = tuple(terms)

    def __call__(self, x):
        return sum(t.value(x) for t in self.terms)

    def deriv(self, x, order=1):
        return sum(t.deriv(x, order) for t in self.terms)

    def integral(self) -> float:
        return float(sum(t.integral() for t in self.terms))

    def sine_coefs(self, max_mode: int) -> np.ndarray:
        """``int_0^1 g(x) sin(m pi x) dx`` for ``m = 1..max_mode``."""
        a = np.pi * np.arange(1, max_mode + 1)
        return sum(t.sine_coef(a) for t in self.terms)


class SeparableFunction(Coefficient):
    """``f(x1, x2) = gx(x1) * gy(x2)``."""

    def __init__(self, gx: Factor, gy: Factor, name: str = ""):
        self.gx = gx
        self.gy = gy
        super().__init__(lambda x, y: gx(x) * gy(y), self._gradient, name=name)

    def _gradient(self, x, y):
        return self.gx.deriv(x) * self.gy(y), self.gx(x) * self.gy.deriv(y)

    def laplacian(self, x, y):
        return self.gx.deriv(x, 2) * self.gy(y) + self.gx(x) * self.gy.deriv(y, 2)

    def integral(self) -> float:
        return self.gx.integral() * self.gy.integral()

    def scaled(self, c: float) -> "SeparableFunction":
        gx = Factor(*[_scale(t, c) for t in self.gx.terms])
        return SeparableFunction(gx, self.gy, name=f"{c:g}*{self.name}")

    def boundary_flux(self) -> float:
        """``-int_{boundary of unit square} grad f . n ds``."""
        gx, gy = self.gx, self.gy
        return float((gx.deriv(0.0) - gx.deriv(1.0)) * gy.integral()
                     + (gy.deriv(0.0) - gy.deriv(1.0)) * gx.integral())


def _scale(term, c):
    return type(term)(**{**term.__dict__, "coef": term.coef * c})


def surrogate_rhs() -> SeparableFunction:
    """``(1 - x1) x2^2``, the diffusion-reaction test right-hand side."""
    return SeparableFunction(Factor(Monomial(1.0, 0), Monomial(-1.0, 1)), Factor(Monomial(1.0, 2)),
                             name="(1-x1)*x2^2")


def layer_rhs(mu: float) -> SeparableFunction:
    """``(1 - x1 - exp(-x1/mu)) (x2^2 - exp(-(1 - x2)/mu))`` with layers of width mu."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    gx = Factor(Monomial(1.0, 0), Monomial(-1.0, 1), Exponential(-1.0, mu))
    gy = Factor(Monomial(1.0, 2), Exponential(-1.0, mu, right=True))
    return SeparableFunction(gx, gy, name=f"layer(mu={mu:g})")


def eigen_rhs(m: int = 1, n: int = 1, amplitude: float = 2.0) -> SeparableFunction:
    """``amplitude * sin(m pi x1) sin(n pi x2)``."""
    return SeparableFunction(Factor(SineMode(amplitude, m)), Factor(SineMode(1.0, n)),
                             name=f"{amplitude:g}*sin({m}pi x1)sin({n}pi x2)")
