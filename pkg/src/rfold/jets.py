"""Truncated multivariate power series ("jets") with exact rational coefficients.

A jet represents the Taylor expansion of an analytic function about a fixed
base point, truncated at a total degree ``order``.  Coefficients are exact
rationals, keyed by exponent multi-indices, and absent keys mean zero.  All
arithmetic is exact; there is no rounding anywhere in this module.

Jets are immutable values: every operation returns a fresh jet, so they can
be shared freely between threads.

The convention for binary operations is that the result order is the minimum
of the operand orders; a formal partial derivative lowers the order by one and
refuses to act on an order-0 jet ("jet order exhausted") instead of silently
returning a jet that has lost its meaning.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .rationals import (
    RAT_ONE,
    RAT_ZERO,
    rational,
    rational_from_string,
    rational_sqrt,
    rational_to_string,
)

MultiIndex = tuple  # exponent tuple, length == dimension


class JetError(ArithmeticError):
    """Raised on invalid jet operations (dimension mismatch, exhausted order, ...)."""


def grlex_key(mi: MultiIndex):
    """Sort key for graded lexicographic order: total degree first, then lex."""
    return (sum(mi), mi)


class Jet:
    __slots__ = ("dim", "order", "coeffs")

    def __init__(self, dim: int, order: int, coeffs: dict | None = None, _clean: bool = False):
        if order < 0:
            raise JetError("jet order exhausted")
        self.dim = dim
        self.order = order
        if coeffs is None:
            coeffs = {}
        if not _clean:
            coeffs = {
                mi: rational(c)
                for mi, c in coeffs.items()
                if c != 0 and sum(mi) <= order
            }
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------

    @staticmethod
    def constant(dim: int, order: int, value) -> "Jet":
        value = rational(value)
        if value == 0:
            return Jet(dim, order, {}, _clean=True)
        return Jet(dim, order, {(0,) * dim: value}, _clean=True)

    @staticmethod
    def variable(dim: int, order: int, direction: int, coefficient=1) -> "Jet":
        """The displacement coordinate u_direction as a jet."""
        if not 0 <= direction < dim:
            raise JetError(f"direction {direction} out of range for dimension {dim}")
        if order < 1:
            raise JetError("order must be at least 1 to represent a coordinate")
        mi = tuple(1 if i == direction else 0 for i in range(dim))
        return Jet(dim, order, {mi: rational(coefficient)})

    @staticmethod
    def zero(dim: int, order: int) -> "Jet":
        return Jet(dim, order, {}, _clean=True)

    # -- basic queries ------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def constant_term(self):
        return self.coeffs.get((0,) * self.dim, RAT_ZERO)

    def max_abs_coeff(self):
        if not self.coeffs:
            return RAT_ZERO
        return max(abs(c) for c in self.coeffs.values())

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(
            self.dim,
            order,
            {mi: c for mi, c in self.coeffs.items() if sum(mi) <= order},
            _clean=True,
        )

    def __repr__(self):
        terms = ", ".join(
            f"{mi}:{rational_to_string(c)}"
            for mi, c in sorted(self.coeffs.items(), key=lambda kv: grlex_key(kv[0]))
        )
        return f"Jet(dim={self.dim}, order={self.order}, {{{terms}}})"

    def __eq__(self, other):
        """Jets are equal iff all coefficients up to the min common order agree."""
        if not isinstance(other, Jet):
            return NotImplemented
        if self.dim != other.dim:
            return False
        k = min(self.order, other.order)
        a = {mi: c for mi, c in self.coeffs.items() if sum(mi) <= k}
        b = {mi: c for mi, c in other.coeffs.items() if sum(mi) <= k}
        return a == b

    __hash__ = None

    # -- arithmetic ----------------------------------------------------

    def _check(self, other: "Jet"):
        if self.dim != other.dim:
            raise JetError("dimension mismatch")

    def __add__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        self._check(other)
        order = min(self.order, other.order)
        out = dict(self.coeffs) if self.order == order else {
            mi: c for mi, c in self.coeffs.items() if sum(mi) <= order
        }
        for mi, c in other.coeffs.items():
            if sum(mi) > order:
                continue
            s = out.get(mi, RAT_ZERO) + c
            if s == 0:
                out.pop(mi, None)
            else:
                out[mi] = s
        return Jet(self.dim, order, out, _clean=True)

    def __neg__(self):
        return Jet(self.dim, self.order, {mi: -c for mi, c in self.coeffs.items()}, _clean=True)

    def __sub__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            order = min(self.order, other.order)
            a = [(sum(mi), mi, c) for mi, c in self.coeffs.items()]
            b = [(sum(mi), mi, c) for mi, c in other.coeffs.items()]
            if len(a) > len(b):
                a, b = b, a
            b.sort()
            out: dict = {}
            for da, ma, ca in a:
                if da > order:
                    continue
                rem = order - da
                for db, mb, cb in b:
                    if db > rem:
                        break
                    key = tuple(x + y for x, y in zip(ma, mb))
                    v = out.get(key)
                    p = ca * cb
                    if v is None:
                        out[key] = p
                    else:
                        v = v + p
                        if v == 0:
                            del out[key]
                        else:
                            out[key] = v
            return Jet(self.dim, order, out, _clean=True)
        # scalar multiple (exact rational or int)
        q = rational(other)
        if q == 0:
            return Jet.zero(self.dim, self.order)
        return Jet(self.dim, self.order, {mi: c * q for mi, c in self.coeffs.items()}, _clean=True)

    __rmul__ = __mul__

    def scale(self, q) -> "Jet":
        return self * q

    def partial(self, direction: int) -> "Jet":
        """Formal partial derivative; consumes one order."""
        if self.order < 1:
            raise JetError("jet order exhausted")
        if not 0 <= direction < self.dim:
            raise JetError(f"direction {direction} out of range")
        out = {}
        for mi, c in self.coeffs.items():
            e = mi[direction]
            if e == 0:
                continue
            key = mi[:direction] + (e - 1,) + mi[direction + 1:]
            out[key] = c * e
        return Jet(self.dim, self.order - 1, out, _clean=True)


# -- spec-level operation names ---------------------------------------


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise JetError(f"unknown op {op!r}")


def jet_partial(a: Jet, direction: int) -> Jet:
    return a.partial(direction)


def jet_invert_scalar(a: Jet) -> Jet:
    """Multiplicative inverse up to the truncation order.

    Newton iteration x -> x*(2 - a*x) doubles the number of correct orders per
    step and stays exact over the rationals.
    """
    c0 = a.constant_term()
    if c0 == 0:
        raise JetError("non-invertible jet (zero constant term)")
    two = Jet.constant(a.dim, a.order, 2)
    x = Jet.constant(a.dim, a.order, RAT_ONE / c0)
    correct = 1
    while correct <= a.order:
        x = x * (two - a * x)
        correct *= 2
    return x


def jet_divide(a: Jet, b: Jet) -> Jet:
    return a * jet_invert_scalar(b)


def jet_sqrt(a: Jet) -> Jet:
    """Square root of a jet whose constant term is a perfect rational square."""
    c0 = a.constant_term()
    r0 = rational_sqrt(c0)
    if r0 is None or r0 == 0:
        raise JetError("jet square root requires a positive perfect-square constant term")
    half = rational(1, 2)
    x = Jet.constant(a.dim, a.order, r0)
    correct = 1
    while correct <= a.order:
        x = (x + jet_divide(a, x)) * half
        correct *= 2
    return x


def jet_matrix_mul(A: Sequence[Sequence[Jet]], B: Sequence[Sequence[Jet]]) -> list:
    n = len(A)
    return [
        [sum((A[i][k] * B[k][j] for k in range(1, n)), A[i][0] * B[0][j]) for j in range(n)]
        for i in range(n)
    ]


def jet_matrix_inverse(M: Sequence[Sequence[Jet]]) -> list:
    """Inverse of a jet matrix whose constant part is invertible over the rationals.

    The constant matrix is inverted exactly by Gauss-Jordan elimination and the
    series part is corrected with Newton iterations X -> X(2I - MX).
    """
    n = len(M)
    dim, order = M[0][0].dim, min(m.order for row in M for m in row)
    const = [[M[i][j].constant_term() for j in range(n)] for i in range(n)]
    inv0 = _rational_matrix_inverse(const)
    if inv0 is None:
        raise JetError("degenerate metric at base point (singular constant matrix)")
    X = [[Jet.constant(dim, order, inv0[i][j]) for j in range(n)] for i in range(n)]
    Mt = [[M[i][j].truncate(order) for j in range(n)] for i in range(n)]
    two_id = [
        [Jet.constant(dim, order, 2 if i == j else 0) for j in range(n)] for i in range(n)
    ]
    correct = 1
    while correct <= order:
        MX = jet_matrix_mul(Mt, X)
        E = [[two_id[i][j] - MX[i][j] for j in range(n)] for i in range(n)]
        X = jet_matrix_mul(X, E)
        correct *= 2
    return X


def _rational_matrix_inverse(A):
    n = len(A)
    aug = [[rational(A[i][j]) for j in range(n)] + [RAT_ONE if i == j else RAT_ZERO for j in range(n)]
           for i in range(n)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv_p = RAT_ONE / aug[col][col]
        aug[col] = [x * inv_p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def jet_determinant(M: Sequence[Sequence[Jet]]) -> Jet:
    """Determinant by cofactor expansion; fine at the n <= 6 sizes used here."""
    n = len(M)
    if n == 1:
        return M[0][0]
    dim, order = M[0][0].dim, min(m.order for row in M for m in row)
    acc = Jet.zero(dim, order)
    for j in range(n):
        if M[0][j].is_zero():
            continue
        minor = [[M[i][k] for k in range(n) if k != j] for i in range(1, n)]
        term = M[0][j] * jet_determinant(minor)
        acc = acc + (term if j % 2 == 0 else -term)
    return acc


# -- text serialization ------------------------------------------------

def jet_to_lines(a: Jet) -> Iterator[str]:
    """Lines 'e1 e2 ... en : num/den' in graded-lex order, zeros omitted."""
    for mi in sorted(a.coeffs, key=grlex_key):
        exps = " ".join(str(e) for e in mi)
        yield f"{exps} : {rational_to_string(a.coeffs[mi])}"


def jet_from_lines(dim: int, order: int, lines: Iterable[str]) -> Jet:
    coeffs = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        exps, _, val = line.partition(":")
        mi = tuple(int(tok) for tok in exps.split())
        if len(mi) != dim:
            raise JetError(f"bad multi-index length in {line!r}")
        coeffs[mi] = rational_from_string(val)
    return Jet(dim, order, coeffs)
