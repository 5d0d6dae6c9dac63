"""Truncated power series at base point 0.

A :class:`TruncSeries` stores Taylor coefficients c0..cN and an explicit
truncation order N.  Arithmetic never silently extends the order: sums,
differences and Cauchy products carry the minimum of the operand orders,
so the "order of validity" of every derived quantity stays auditable.
Scalars act as exact (infinite-order) operands.

The moment engine consumes these heavily; differentiation drops the order
by one and antidifferentiation raises it by one, which is what makes the
per-level order bookkeeping of the recursion explicit.
"""

from __future__ import annotations

import numpy as np


class TruncSeries:
    """Power series sum_k c_k x^k truncated at an explicit order."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-d sequence")
        self.coeffs = c

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(order: int) -> "TruncSeries":
        return TruncSeries(np.zeros(order + 1))

    @staticmethod
    def const(value, order: int) -> "TruncSeries":
        c = np.zeros(order + 1, dtype=complex)
        c[0] = value
        return TruncSeries(c)

    @staticmethod
    def identity(order: int) -> "TruncSeries":
        """The series of x itself."""
        c = np.zeros(order + 1, dtype=complex)
        if order >= 1:
            c[1] = 1.0
        return TruncSeries(c)

    # -- basic queries -------------------------------------------------

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, k: int) -> complex:
        return complex(self.coeffs[k])

    def truncate(self, order: int) -> "TruncSeries":
        if order >= self.order:
            return self
        return TruncSeries(self.coeffs[: order + 1])

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"TruncSeries(order={self.order}, coeffs={np.round(self.coeffs, 6)})"

    # -- ring operations ----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, TruncSeries):
            return other
        if np.isscalar(other):
            return None  # handled as exact scalar
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = self.coeffs.copy()
            c[0] += other
            return TruncSeries(c)
        n = min(self.order, o.order)
        return TruncSeries(self.coeffs[: n + 1] + o.coeffs[: n + 1])

    __radd__ = __add__

    def __neg__(self):
        return TruncSeries(-self.coeffs)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = self.coeffs.copy()
            c[0] -= other
            return TruncSeries(c)
        n = min(self.order, o.order)
        return TruncSeries(self.coeffs[: n + 1] - o.coeffs[: n + 1])

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return TruncSeries(self.coeffs * other)
        n = min(self.order, o.order)
        a = self.coeffs[: n + 1]
        b = o.coeffs[: n + 1]
        out = np.convolve(a, b)[: n + 1]
        return TruncSeries(out)

    __rmul__ = __mul__

    # -- calculus ------------------------------------------------------

    def diff(self) -> "TruncSeries":
        """Derivative; order drops by one."""
        if self.order == 0:
            return TruncSeries([0.0])
        k = np.arange(1, len(self.coeffs))
        return TruncSeries(self.coeffs[1:] * k)

    def antider(self, c0=0.0) -> "TruncSeries":
        """Antiderivative from 0 with constant term c0; order rises by one."""
        k = np.arange(1, len(self.coeffs) + 1)
        out = np.empty(len(self.coeffs) + 1, dtype=complex)
        out[0] = c0
        out[1:] = self.coeffs / k
        return TruncSeries(out)

    def eval(self, x: float) -> complex:
        """Horner evaluation at a point inside the caller's trust radius."""
        acc = 0.0 + 0.0j
        for c in self.coeffs[::-1]:
            acc = acc * x + c
        return complex(acc)

    # -- diagnostics ----------------------------------------------------

    def max_imag(self) -> float:
        return float(np.abs(self.coeffs.imag).max())

    def real_coeffs(self) -> np.ndarray:
        return self.coeffs.real.copy()


# ---------------------------------------------------------------------------
# Functional aliases
# ---------------------------------------------------------------------------

def s_add(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    return a + b


def s_mul(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    return a * b


def s_diff(a: TruncSeries) -> TruncSeries:
    return a.diff()


def s_antider(a: TruncSeries, c0=0.0) -> TruncSeries:
    return a.antider(c0)


def s_eval(a: TruncSeries, x: float) -> complex:
    return a.eval(x)
