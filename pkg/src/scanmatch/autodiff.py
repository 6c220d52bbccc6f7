"""Forward-mode dual numbers carrying a value and three partial derivatives.

Scan matching only ever differentiates with respect to the three pose
parameters (x, y, theta), so the derivative part is a fixed 3-vector stored
as three plain floats rather than an array.

The module-level math functions (``sin``, ``cos``, ``exp``, ``log``,
``sqrt``, ``atan2``) accept either floats or :class:`Jet3` values, which lets
residual code be written once and evaluated in both modes.
"""

from __future__ import annotations

import math
from typing import Iterable, Union

__all__ = [
    "DomainError",
    "Jet3",
    "Scalar",
    "atan2",
    "cos",
    "exp",
    "jet_constant",
    "jet_variable",
    "log",
    "sin",
    "sqrt",
    "value_of",
]


class DomainError(ValueError):
    """Raised when a function is evaluated outside its real domain."""


class Jet3:
    """Value ``a`` plus the gradient ``v`` with respect to three variables.

    Jets are treated as immutable values. Comparisons look at ``a`` only.
    """

    __slots__ = ("a", "d0", "d1", "d2")

    def __init__(self, a: float, v: Iterable[float] = (0.0, 0.0, 0.0)) -> None:
        d0, d1, d2 = v
        self.a = float(a)
        self.d0 = float(d0)
        self.d1 = float(d1)
        self.d2 = float(d2)

    @property
    def v(self) -> tuple[float, float, float]:
        return (self.d0, self.d1, self.d2)

    def __repr__(self) -> str:
        return f"Jet3({self.a!r}, v=({self.d0!r}, {self.d1!r}, {self.d2!r}))"

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet3):
            return _jet(self.a + other.a, self.d0 + other.d0,
                        self.d1 + other.d1, self.d2 + other.d2)
        return _jet(self.a + other, self.d0, self.d1, self.d2)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet3):
            return _jet(self.a - other.a, self.d0 - other.d0,
                        self.d1 - other.d1, self.d2 - other.d2)
        return _jet(self.a - other, self.d0, self.d1, self.d2)

    def __rsub__(self, other):
        return _jet(other - self.a, -self.d0, -self.d1, -self.d2)

    def __mul__(self, other):
        if isinstance(other, Jet3):
            a, b = self.a, other.a
            return _jet(a * b,
                        self.d0 * b + a * other.d0,
                        self.d1 * b + a * other.d1,
                        self.d2 * b + a * other.d2)
        return _jet(self.a * other, self.d0 * other, self.d1 * other,
                    self.d2 * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet3):
            b = other.a
            if b == 0.0:
                raise DomainError("division by a zero-valued jet")
            q = self.a / b
            return _jet(q,
                        (self.d0 - q * other.d0) / b,
                        (self.d1 - q * other.d1) / b,
                        (self.d2 - q * other.d2) / b)
        if other == 0:
            raise DomainError("division of a jet by zero")
        return _jet(self.a / other, self.d0 / other, self.d1 / other,
                    self.d2 / other)

    def __rtruediv__(self, other):
        b = self.a
        if b == 0.0:
            raise DomainError("division by a zero-valued jet")
        q = other / b
        s = -q / b
        return _jet(q, s * self.d0, s * self.d1, s * self.d2)

    def __pow__(self, p):
        if isinstance(p, Jet3):
            return exp(p * log(self))
        if p == 2:
            return self * self
        s = p * self.a ** (p - 1)
        return _jet(self.a ** p, s * self.d0, s * self.d1, s * self.d2)

    def __neg__(self):
        return _jet(-self.a, -self.d0, -self.d1, -self.d2)

    def __pos__(self):
        return self

    def __abs__(self):
        return -self if self.a < 0.0 else self

    # -- comparisons on the value only ------------------------------------
    def __lt__(self, other):
        return self.a < value_of(other)

    def __le__(self, other):
        return self.a <= value_of(other)

    def __gt__(self, other):
        return self.a > value_of(other)

    def __ge__(self, other):
        return self.a >= value_of(other)

    def __eq__(self, other):
        if isinstance(other, (Jet3, int, float)):
            return self.a == value_of(other)
        return NotImplemented

    def __ne__(self, other):
        if isinstance(other, (Jet3, int, float)):
            return self.a != value_of(other)
        return NotImplemented

    __hash__ = None

    def isfinite(self) -> bool:
        return all(math.isfinite(t) for t in (self.a, self.d0, self.d1, self.d2))


Scalar = Union[float, Jet3]

_new = object.__new__


def _jet(a: float, d0: float, d1: float, d2: float) -> Jet3:
    # Fast path that skips argument unpacking in __init__.
    j = _new(Jet3)
    j.a = a
    j.d0 = d0
    j.d1 = d1
    j.d2 = d2
    return j


def jet_constant(x: float) -> Jet3:
    return _jet(float(x), 0.0, 0.0, 0.0)


def jet_variable(x: float, k: int) -> Jet3:
    """Seed variable number ``k`` (0, 1 or 2) with a unit derivative."""
    if k == 0:
        return _jet(float(x), 1.0, 0.0, 0.0)
    if k == 1:
        return _jet(float(x), 0.0, 1.0, 0.0)
    if k == 2:
        return _jet(float(x), 0.0, 0.0, 1.0)
    raise ValueError(f"jet variable index must be 0, 1 or 2, got {k!r}")


def value_of(x: Scalar) -> float:
    return x.a if isinstance(x, Jet3) else float(x)


def _chain(x: Jet3, fx: float, dfx: float) -> Jet3:
    return _jet(fx, dfx * x.d0, dfx * x.d1, dfx * x.d2)


def sin(x: Scalar) -> Scalar:
    if isinstance(x, Jet3):
        return _chain(x, math.sin(x.a), math.cos(x.a))
    return math.sin(x)


def cos(x: Scalar) -> Scalar:
    if isinstance(x, Jet3):
        return _chain(x, math.cos(x.a), -math.sin(x.a))
    return math.cos(x)


def exp(x: Scalar) -> Scalar:
    if isinstance(x, Jet3):
        e = math.exp(x.a)
        return _chain(x, e, e)
    return math.exp(x)


def log(x: Scalar) -> Scalar:
    a = value_of(x)
    if not a > 0.0:
        if math.isnan(a):
            return _chain(x, a, a) if isinstance(x, Jet3) else a
        raise DomainError(f"log of non-positive value {a!r}")
    if isinstance(x, Jet3):
        return _chain(x, math.log(a), 1.0 / a)
    return math.log(a)


def sqrt(x: Scalar) -> Scalar:
    a = value_of(x)
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a!r}")
    s = math.sqrt(a)
    if isinstance(x, Jet3):
        # Infinite slope at zero; IEEE semantics, 0 * inf gives nan.
        return _chain(x, s, 0.5 / s if s > 0.0 else math.inf)
    return s


def atan2(y: Scalar, x: Scalar) -> Scalar:
    ya, xa = value_of(y), value_of(x)
    if ya == 0.0 and xa == 0.0:
        raise DomainError("atan2 undefined at (0, 0)")
    angle = math.atan2(ya, xa)
    if not isinstance(y, Jet3) and not isinstance(x, Jet3):
        return angle
    r2 = xa * xa + ya * ya
    # d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
    yd = y.v if isinstance(y, Jet3) else (0.0, 0.0, 0.0)
    xd = x.v if isinstance(x, Jet3) else (0.0, 0.0, 0.0)
    return _jet(angle,
                (xa * yd[0] - ya * xd[0]) / r2,
                (xa * yd[1] - ya * xd[1]) / r2,
                (xa * yd[2] - ya * xd[2]) / r2)
