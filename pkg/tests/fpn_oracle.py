"""Slow, independent FPN oracle used only by the tests.

Values are plain ``(sign, mag, exp, is_inf)`` tuples; nothing here calls
into ``tcgnn`` rounding.  Rounding is a nearest-neighbour search over the
sorted list of every representable value.
"""
from __future__ import annotations

import bisect
from fractions import Fraction
from functools import lru_cache

INF = "inf"


class Indeterminate(Exception):
    pass


@lru_cache(maxsize=None)
def grid(p: int):
    """Sorted (value, tuple) pairs for all finite FPNs plus the two overflow sentinels.

    The sentinels sit one binade above the largest finite value, where the
    next exponent would be; a rational closer to them than to the largest
    finite value has overflowed.
    """
    pts = {Fraction(0): (1, 0, 0, False)}
    lo, hi = 1 << (p - 1), 1 << p
    for e in range(-(1 << p), 1 << p):
        for mag in range(lo, hi):
            v = Fraction(mag) * Fraction(2) ** e
            pts[v] = (1, mag, e, False)
            pts[-v] = (-1, mag, e, False)
    over = Fraction(lo) * Fraction(2) ** (1 << p)
    pts[over] = (1, lo, 1 << p, True)
    pts[-over] = (-1, lo, 1 << p, True)
    items = sorted(pts.items())
    return [v for v, _ in items], [t for _, t in items]


def nearest(r: Fraction, p: int):
    vals, tups = grid(p)
    if r >= vals[-1]:
        return tups[-1]
    if r <= vals[0]:
        return tups[0]
    i = bisect.bisect_left(vals, r)
    if vals[i] == r:
        return tups[i]
    lo, hi = tups[i - 1], tups[i]
    dlo, dhi = r - vals[i - 1], vals[i] - r
    if dlo != dhi:
        return lo if dlo < dhi else hi
    # a tie: prefer the even significand, and zero over anything
    if lo[1] == 0 or hi[1] == 0:
        return lo if lo[1] == 0 else hi
    return lo if lo[1] % 2 == 0 else hi


def midpoints(p: int):
    """Every midpoint between adjacent representable values (sentinels included)."""
    vals, tups = grid(p)
    for i in range(len(vals) - 1):
        yield (vals[i] + vals[i + 1]) / 2, tups[i], tups[i + 1]


def idiv(x: Fraction, y: Fraction) -> Fraction:
    q = Fraction(x) / Fraction(y)
    return q if (4 * q).denominator == 1 else q + Fraction(1, 8)


def _s(t):
    return t[0] * t[1]


def _exps(a, b):
    # a zero operand has no exponent of its own and takes its partner's
    e1 = b[2] if a[1] == 0 else a[2]
    e2 = a[2] if b[1] == 0 else b[2]
    return e1, e2


def add(a, b, p):
    if a[3] or b[3]:
        if a[3] and b[3] and a[0] != b[0]:
            raise Indeterminate
        return a if a[3] else b
    e1, e2 = _exps(a, b)
    s1, s2 = _s(a), _s(b)
    if e1 < e2:
        s1, s2, e1, e2 = s2, s1, e2, e1
    return nearest((s1 + idiv(s2, 2 ** (e1 - e2))) * Fraction(2) ** e1, p)


def mul(a, b, p):
    if a[3] or b[3]:
        if a[1] == 0 or b[1] == 0:
            raise Indeterminate
        return (a[0] * b[0], 1 << (p - 1), 1 << p, True)
    return nearest(Fraction(_s(a) * _s(b)) * Fraction(2) ** (a[2] + b[2]), p)


def div(a, b, p):
    if b[1] == 0:
        raise ZeroDivisionError
    if a[3]:
        if b[3]:
            raise Indeterminate
        return (a[0] * b[0], 1 << (p - 1), 1 << p, True)
    if b[3]:
        return (1, 0, 0, False)
    q = idiv(_s(a) * 2 ** (p - 1), _s(b))
    return nearest(q * Fraction(2) ** (a[2] - b[2] - p + 1), p)


def le(a, b, p):
    if a[3] and a[0] < 0 or b[3] and b[0] > 0:
        return True
    if a[3] or b[3]:
        return False
    e1, e2 = _exps(a, b)
    s1, s2 = _s(a), _s(b)
    if e1 >= e2:
        return s1 <= idiv(s2, 2 ** (e1 - e2))
    return idiv(s1, 2 ** (e2 - e1)) <= s2
