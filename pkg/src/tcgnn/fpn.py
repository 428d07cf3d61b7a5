"""Exact p-bit floating point numbers.

An FPN is a pair ``<s, e>`` of a signed significand and an exponent with value
``s * 2**e``.  The significand magnitude is either 0 or lies in
``[2**(p-1), 2**p)`` and the exponent lies in ``[-2**p, 2**p - 1]``; the
exponent ``2**p`` is reserved for the two infinities.  There are no subnormals,
no NaN and no negative zero.

All arithmetic is exact: every operation forms the exact rational prescribed by
its defining formula and rounds it once with :func:`round_p` (nearest, ties to
the even significand).

>>> a = parse("4*2^0@3")
>>> str(fpn_add(a, a))
'4*2^1@3'
>>> str(fpn_mul(a, parse("6*2^0@3")))
'6*2^2@3'
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import mpmath

__all__ = [
    "FPN", "FPNError", "IndeterminateFormError", "FPNZeroDivisionError",
    "FPNDomainError", "ExactRational", "round_p", "int_div", "fpn_add",
    "fpn_sub", "fpn_mul", "fpn_div", "fpn_le", "fpn_neg", "iterated_sum",
    "iterated_prod", "fpn_exp", "fpn_sqrt", "fpn_max", "fpn_min", "parse",
    "from_rational", "all_fpns", "encode", "decode", "wire_width",
]

# Oracle representation of an infinite-precision real.
ExactRational = Fraction


class FPNError(ArithmeticError):
    pass


class IndeterminateFormError(FPNError):
    """inf - inf, 0 * inf, inf / inf."""


class FPNZeroDivisionError(FPNError, ZeroDivisionError):
    pass


class FPNDomainError(FPNError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class FPN:
    sign: int
    mag: int
    exp: int
    prec: int
    is_inf: bool = False

    def __post_init__(self):
        p = self.prec
        if p < 2:
            raise ValueError(f"precision must be >= 2, got {p}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.is_inf:
            if self.mag != 1 << (p - 1) or self.exp != 1 << p:
                raise ValueError("infinity must be stored as <2^(p-1), 2^p>")
            return
        if self.mag == 0:
            if self.sign != 1 or self.exp != 0:
                raise ValueError("zero must be canonical <0, 0> with sign +1")
            return
        if not (1 << (p - 1)) <= self.mag < (1 << p):
            raise ValueError(f"significand {self.mag} not normalized for p={p}")
        if not -(1 << p) <= self.exp <= (1 << p) - 1:
            raise ValueError(f"exponent {self.exp} out of range for p={p}")

    # constructors -----------------------------------------------------------
    @classmethod
    def zero(cls, p: int) -> FPN:
        return cls(1, 0, 0, p)

    @classmethod
    def one(cls, p: int) -> FPN:
        return cls(1, 1 << (p - 1), -(p - 1), p)

    @classmethod
    def inf(cls, p: int, sign: int = 1) -> FPN:
        return cls(sign, 1 << (p - 1), 1 << p, p, True)

    # views -------------------------------------------------------------------
    @property
    def s(self) -> int:
        """Signed significand."""
        return self.sign * self.mag

    @property
    def is_zero(self) -> bool:
        return self.mag == 0

    def value(self) -> Fraction:
        if self.is_inf:
            raise FPNError("infinity has no rational value")
        if self.exp >= 0:
            return Fraction(self.s << self.exp)
        return Fraction(self.s, 1 << -self.exp)

    def __float__(self) -> float:
        if self.is_inf:
            return self.sign * math.inf
        return math.ldexp(self.s, self.exp)

    def __str__(self) -> str:
        if self.is_inf:
            return f"{'+' if self.sign > 0 else '-'}inf@{self.prec}"
        if self.mag == 0:
            return f"0@{self.prec}"
        return f"{self.s}*2^{self.exp}@{self.prec}"

    def __repr__(self) -> str:
        return f"FPN({self})"


# ---------------------------------------------------------------------------
# rounding
# ---------------------------------------------------------------------------

def _round_scaled(num: int, den: int, shift: int, p: int) -> FPN:
    """round_p(num/den * 2**shift), den > 0."""
    if num == 0:
        return FPN(1, 0, 0, p)
    sign = 1 if num > 0 else -1
    num = abs(num)
    # e such that 2^(p-1) <= num / (den * 2^e) < 2^p
    e = num.bit_length() - den.bit_length() - p + 1
    if e >= 0:
        a, b = num, den << e
    else:
        a, b = num << -e, den
    if a < b << (p - 1):
        e -= 1
        if e >= 0:
            b = den << e
        else:
            a = num << -e
    q, r = divmod(a, b)
    e += shift
    emin = -(1 << p)
    if e < emin:
        # below the smallest normal exponent: choose between 0 and the
        # smallest positive FPN; an exact tie goes to zero
        if e == emin - 1 and not (q == 1 << (p - 1) and r == 0):
            return FPN(sign, 1 << (p - 1), emin, p)
        return FPN(1, 0, 0, p)
    twice = r << 1
    if twice > b or (twice == b and q & 1):
        q += 1
        if q == 1 << p:
            q >>= 1
            e += 1
    if e > (1 << p) - 1:
        return FPN.inf(p, sign)
    return FPN(sign, q, e, p)


def round_p(r: Fraction | int, p: int) -> FPN:
    """Closest p-bit FPN to ``r``; ties go to the even significand."""
    if p < 2:
        raise ValueError("precision must be >= 2")
    r = Fraction(r)
    return _round_scaled(r.numerator, r.denominator, 0, p)


def from_rational(r: Fraction | int | str, p: int, exact: bool = False) -> FPN:
    """Round a rational to an FPN; with ``exact`` reject values that would round."""
    r = Fraction(r)
    x = round_p(r, p)
    if exact and (x.is_inf or x.value() != r):
        raise ValueError(f"{r} is not representable at p={p}")
    return x


def int_div(x: Fraction | int, y: Fraction | int) -> Fraction:
    """The ``//`` of the FPN definitions: exact when x/y is a multiple of 1/4, else x/y + 1/8."""
    x, y = Fraction(x), Fraction(y)
    if y == 0:
        raise FPNZeroDivisionError("int_div by zero")
    q = x / y
    if (q * 4).denominator == 1:
        return q
    return q + Fraction(1, 8)


# ---------------------------------------------------------------------------
# basic operations
# ---------------------------------------------------------------------------

def _check_prec(a: FPN, b: FPN) -> int:
    if a.prec != b.prec:
        raise ValueError(f"precision mismatch: {a.prec} vs {b.prec}")
    return a.prec


def _aligned(a: FPN, b: FPN) -> tuple[int, int, int, int]:
    # zero carries no exponent of its own: it is aligned to its partner
    e1 = b.exp if a.mag == 0 else a.exp
    e2 = a.exp if b.mag == 0 else b.exp
    return a.s, e1, b.s, e2


def fpn_add(a: FPN, b: FPN) -> FPN:
    p = _check_prec(a, b)
    if a.is_inf or b.is_inf:
        if a.is_inf and b.is_inf and a.sign != b.sign:
            raise IndeterminateFormError("(+inf) + (-inf)")
        return a if a.is_inf else b
    s1, e1, s2, e2 = _aligned(a, b)
    if e1 < e2:
        s1, e1, s2, e2 = s2, e2, s1, e1
    k = e1 - e2
    # s1 + s2 // 2^k, scaled by 2^(k+3)
    num = (s1 << (k + 3)) + (s2 << 3)
    if k > 2 and s2 % (1 << (k - 2)):
        num += 1 << k
    return _round_scaled(num, 1 << (k + 3), e1, p)


def fpn_neg(a: FPN) -> FPN:
    if a.mag == 0:
        return a
    return FPN(-a.sign, a.mag, a.exp, a.prec, a.is_inf)


def fpn_sub(a: FPN, b: FPN) -> FPN:
    return fpn_add(a, fpn_neg(b))


def fpn_mul(a: FPN, b: FPN) -> FPN:
    p = _check_prec(a, b)
    if a.is_inf or b.is_inf:
        if a.mag == 0 or b.mag == 0:
            raise IndeterminateFormError("0 * inf")
        return FPN.inf(p, a.sign * b.sign)
    return _round_scaled(a.s * b.s, 1, a.exp + b.exp, p)


def fpn_div(a: FPN, b: FPN) -> FPN:
    p = _check_prec(a, b)
    if b.mag == 0:
        raise FPNZeroDivisionError(f"{a} / 0")
    if a.is_inf:
        if b.is_inf:
            raise IndeterminateFormError("inf / inf")
        return FPN.inf(p, a.sign * b.sign)
    if b.is_inf:
        return FPN.zero(p)
    n = a.s << (p - 1)
    d = b.s
    if d < 0:
        n, d = -n, -d
    num = n << 3
    if (n << 2) % d:
        num += d
    return _round_scaled(num, d << 3, a.exp - b.exp - p + 1, p)


def fpn_le(a: FPN, b: FPN) -> bool:
    _check_prec(a, b)
    if a.is_inf or b.is_inf:
        if a.is_inf and a.sign < 0:
            return True
        if b.is_inf and b.sign > 0:
            return True
        return False
    s1, e1, s2, e2 = _aligned(a, b)
    if e1 >= e2:
        k = e1 - e2
        # s1 <= s2 // 2^k
        lhs = s1 << (k + 3)
        rhs = s2 << 3
        if k > 2 and s2 % (1 << (k - 2)):
            rhs += 1 << k
        return lhs <= rhs
    k = e2 - e1
    lhs = s1 << 3
    if k > 2 and s1 % (1 << (k - 2)):
        lhs += 1 << k
    return lhs <= s2 << (k + 3)


def fpn_max(a: FPN, b: FPN) -> FPN:
    return b if fpn_le(a, b) else a


def fpn_min(a: FPN, b: FPN) -> FPN:
    return a if fpn_le(a, b) else b


# ---------------------------------------------------------------------------
# iterated operations
# ---------------------------------------------------------------------------

def _infinities(xs: Sequence[FPN], what: str) -> FPN | None:
    signs = {x.sign for x in xs if x.is_inf}
    if not signs:
        return None
    if len(signs) > 1:
        raise IndeterminateFormError(f"{what} of mixed infinities")
    return FPN.inf(xs[0].prec, signs.pop())


def iterated_sum(xs: Iterable[FPN]) -> FPN:
    """Exact sum of all operands followed by a single rounding."""
    xs = list(xs)
    if not xs:
        raise ValueError("iterated_sum of an empty sequence")
    p = xs[0].prec
    if any(x.prec != p for x in xs):
        raise ValueError("precision mismatch in iterated_sum")
    inf = _infinities(xs, "sum")
    if inf is not None:
        return inf
    nz = [x for x in xs if x.mag]
    if not nz:
        return FPN.zero(p)
    emin = min(x.exp for x in nz)
    total = sum(x.s << (x.exp - emin) for x in nz)
    return _round_scaled(total, 1, emin, p)


def iterated_prod(xs: Iterable[FPN]) -> FPN:
    """Exact product of all operands followed by a single rounding."""
    xs = list(xs)
    if not xs:
        raise ValueError("iterated_prod of an empty sequence")
    p = xs[0].prec
    if any(x.prec != p for x in xs):
        raise ValueError("precision mismatch in iterated_prod")
    has_zero = any(x.mag == 0 for x in xs)
    if any(x.is_inf for x in xs):
        if has_zero:
            raise IndeterminateFormError("0 * inf in iterated_prod")
        sign = 1
        for x in xs:
            sign *= x.sign
        return FPN.inf(p, sign)
    if has_zero:
        return FPN.zero(p)
    prod = 1
    for x in xs:
        prod *= x.s
    return _round_scaled(prod, 1, sum(x.exp for x in xs), p)


# ---------------------------------------------------------------------------
# exp and sqrt: correctly rounded via enclosure refinement
# ---------------------------------------------------------------------------

def _mpf_to_fraction(v) -> Fraction:
    man, e = v.man_exp
    man = int(man)
    if v < 0 and man > 0:
        man = -man
    return Fraction(man << e) if e >= 0 else Fraction(man, 1 << -e)


@lru_cache(maxsize=1 << 18)
def fpn_exp(x: FPN) -> FPN:
    """Nearest FPN to e**x (hence relative error below 2**-p)."""
    p = x.prec
    if x.is_inf:
        return FPN.inf(p) if x.sign > 0 else FPN.zero(p)
    if x.mag == 0:
        return FPN.one(p)
    v = x.value()
    # outside these bounds e**x overflows / underflows for certain
    if v > ((1 << p) + p + 1) * Fraction(7, 10):
        return FPN.inf(p)
    if v < -((1 << p) + 2) * Fraction(7, 10):
        return FPN.zero(p)
    prec = 2 * p + 32
    while True:
        with mpmath.workprec(prec + 8):
            y = mpmath.exp(mpmath.ldexp(x.s, x.exp))
        y = _mpf_to_fraction(y)
        slack = y / (1 << (prec - 2))
        lo, hi = round_p(y - slack, p), round_p(y + slack, p)
        if lo == hi:
            return lo
        prec *= 2


@lru_cache(maxsize=1 << 18)
def fpn_sqrt(x: FPN) -> FPN:
    """Nearest FPN to sqrt(x)."""
    p = x.prec
    if x.mag == 0:
        return x
    if x.sign < 0:
        raise FPNDomainError(f"sqrt of negative {x}")
    if x.is_inf:
        return x
    k = 2 * p + 8
    while True:
        # sqrt(mag * 2^exp) = sqrt(mag * 2^(exp + 2k)) * 2^-k
        t = x.exp + 2 * k
        if t < 0:
            k += (-t + 1) // 2 + p
            continue
        n = x.mag << t
        r = math.isqrt(n)
        if r * r == n:
            return _round_scaled(r, 1, -k, p)
        lo = _round_scaled(r, 1, -k, p)
        hi = _round_scaled(r + 1, 1, -k, p)
        if lo == hi:
            return lo
        k *= 2


# ---------------------------------------------------------------------------
# literals, enumeration, wire encoding
# ---------------------------------------------------------------------------

_LITERAL = re.compile(r"^\s*([+-]?\d+)\s*\*\s*2\s*\^\s*\(?\s*([+-]?\d+)\s*\)?\s*@\s*(\d+)\s*$")
_SPECIAL = re.compile(r"^\s*([+-]?)(inf|0)\s*@\s*(\d+)\s*$")


def parse(text: str) -> FPN:
    """Parse ``s*2^e@p``, ``0@p``, ``+inf@p`` or ``-inf@p``.

    Non-normalized significands are accepted when the value is exactly
    representable (``1*2^0@3`` is one).
    """
    m = _SPECIAL.match(text)
    if m:
        sign, what, p = m.groups()
        p = int(p)
        if what == "0":
            return FPN.zero(p)
        return FPN.inf(p, -1 if sign == "-" else 1)
    m = _LITERAL.match(text)
    if not m:
        raise ValueError(f"malformed FPN literal {text!r}")
    s, e, p = (int(g) for g in m.groups())
    if p < 2:
        raise ValueError(f"precision must be >= 2 in {text!r}")
    value = Fraction(s) * Fraction(2) ** e
    x = round_p(value, p)
    if x.is_inf or x.value() != value:
        raise ValueError(f"{text!r} is not exactly representable at p={p}")
    return x


def all_fpns(p: int, infinities: bool = True) -> list[FPN]:
    """Every p-bit FPN (zero, all finite values, and optionally both infinities)."""
    out = [FPN.zero(p)]
    for sign in (1, -1):
        for e in range(-(1 << p), 1 << p):
            for mag in range(1 << (p - 1), 1 << p):
                out.append(FPN(sign, mag, e, p))
    if infinities:
        out.extend([FPN.inf(p, 1), FPN.inf(p, -1)])
    return out


def wire_width(p: int) -> int:
    return 2 * p + 3


def encode(x: FPN) -> list[int]:
    """[sign][p significand bits, MSB first][p+2 exponent bits, two's complement, MSB first]."""
    p = x.prec
    bits = [1 if x.sign < 0 else 0]
    bits += [(x.mag >> i) & 1 for i in range(p - 1, -1, -1)]
    e = x.exp & ((1 << (p + 2)) - 1)
    bits += [(e >> i) & 1 for i in range(p + 1, -1, -1)]
    return bits


def decode(bits: Sequence[int], p: int) -> FPN:
    if len(bits) != wire_width(p):
        raise ValueError(f"expected {wire_width(p)} bits, got {len(bits)}")
    sign = -1 if bits[0] else 1
    mag = 0
    for b in bits[1:p + 1]:
        mag = (mag << 1) | int(b)
    e = 0
    for b in bits[p + 1:]:
        e = (e << 1) | int(b)
    if e >= 1 << (p + 1):
        e -= 1 << (p + 2)
    if e == 1 << p:
        return FPN.inf(p, sign)
    return FPN(sign, mag, e, p)
