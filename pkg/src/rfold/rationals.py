"""Exact rational scalars.

Every curved-space computation in this package is carried out over the
rationals so that identity residuals are exactly zero rather than merely
small.  gmpy2's ``mpq`` is used when available (it is considerably faster on
the large numerators that show up in curvature pipelines); otherwise the
stdlib ``fractions.Fraction`` is a drop-in replacement.  Both are always
reduced to lowest terms with a positive denominator.
"""

from __future__ import annotations

import math
from fractions import Fraction

try:
    from gmpy2 import mpq as _mpq

    def rational(num=0, den=1):
        return _mpq(num, den)

    _RATIONAL_TYPES = (type(_mpq(0)), Fraction, int)
except ImportError:  # pragma: no cover - exercised only without gmpy2
    def rational(num=0, den=1):
        return Fraction(num, den)

    _RATIONAL_TYPES = (Fraction, int)

RAT_ZERO = rational(0)
RAT_ONE = rational(1)


def is_rational(x) -> bool:
    return isinstance(x, _RATIONAL_TYPES)


def rational_from_string(s: str):
    """Parse 'p', 'p/q' or a decimal like '1.5' into an exact rational."""
    s = s.strip()
    if "/" in s:
        num, den = s.split("/")
        return rational(int(num), int(den))
    if "." in s or "e" in s or "E" in s:
        f = Fraction(s)
        return rational(f.numerator, f.denominator)
    return rational(int(s))


def rational_to_string(q) -> str:
    q = rational(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def rational_sqrt(q):
    """Exact square root of a rational, or None when q is not a perfect square."""
    q = rational(q)
    if q < 0:
        return None
    num, den = int(q.numerator), int(q.denominator)
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn != num or rd * rd != den:
        return None
    return rational(rn, rd)
