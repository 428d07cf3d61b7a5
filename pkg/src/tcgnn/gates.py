"""Constant-depth bus arithmetic over a :class:`CircuitBuilder`.

Buses are lists of gate ids, least significant bit first.  Everything here
has depth independent of the bus width: carries are resolved by
unbounded fan-in lookahead and multi-operand sums by MAJORITY threshold
counting.
"""
from __future__ import annotations

import math
from typing import Sequence

from .circuit import CircuitBuilder

Bus = list


def const_bus(b: CircuitBuilder, value: int, width: int) -> Bus:
    return [b.const((value >> i) & 1) for i in range(width)]


def not_bus(b: CircuitBuilder, x: Sequence[int]) -> Bus:
    return [b.not_(v) for v in x]


def zext(b: CircuitBuilder, x: Sequence[int], width: int) -> Bus:
    x = list(x)[:width]
    return x + [b.const(0)] * (width - len(x))


def sext(x: Sequence[int], width: int) -> Bus:
    x = list(x)
    return x[:width] + [x[-1]] * (width - len(x))


def xor(b: CircuitBuilder, x: int, y: int) -> int:
    return b.or_([b.and_([x, b.not_(y)]), b.and_([b.not_(x), y])])


def xnor(b: CircuitBuilder, x: int, y: int) -> int:
    return b.or_([b.and_([x, y]), b.and_([b.not_(x), b.not_(y)])])


def mux(b: CircuitBuilder, c: int, x: int, y: int) -> int:
    """``x`` if c else ``y``."""
    return b.or_([b.and_([c, x]), b.and_([b.not_(c), y])])


def mux_bus(b: CircuitBuilder, c: int, x: Sequence[int], y: Sequence[int]) -> Bus:
    nc = b.not_(c)
    return [b.or_([b.and_([c, u]), b.and_([nc, v])]) for u, v in zip(x, y)]


def any_(b: CircuitBuilder, x: Sequence[int]) -> int:
    return b.or_(list(x))


def all_(b: CircuitBuilder, x: Sequence[int]) -> int:
    return b.and_(list(x))


# ---------------------------------------------------------------------------
# depth padding
# ---------------------------------------------------------------------------
# Constant folding can make a block shallower for some operand ranges, which
# would let the total depth drift with n.  Blocks whose bit layout depends on
# n pad their outputs to a fixed structural depth over their inputs instead.

COUNT_DEPTH = 4      # MAJORITY, NOT, AND, OR inside count_bits
ADD_DEPTH = 10       # xor, lookahead carries, xor inside add


def _level(b, bits):
    return max((b.levels[x] for x in bits if b.const_value(x) is None), default=0)


def pad_bus(b: CircuitBuilder, bits: Sequence[int], level: int) -> Bus:
    if _level(b, bits) > level:
        raise AssertionError(f"block depth exceeds its bound (level {level})")
    return [b.pad(x, level) for x in bits]


def _pad_cols(b, cols, level):
    return [pad_bus(b, col, level) for col in cols]


# ---------------------------------------------------------------------------
# addition
# ---------------------------------------------------------------------------

def _span_carries(b, g, t, lo, hi, cin):
    """Carries into positions lo+1 .. hi for the slice [lo, hi) given carry ``cin`` into lo."""
    out = []
    for i in range(lo + 1, hi + 1):
        terms = [b.and_([g[l], *t[l + 1:i]]) for l in range(lo, i)]
        if cin is not None:
            terms.append(b.and_([cin, *t[lo:i]]))
        out.append(b.or_(terms))
    return out


def carries(b: CircuitBuilder, g: Sequence[int], t: Sequence[int], cin: int | None) -> Bus:
    """Carry into every position 0..w (the last one is the carry out).

    Two-level lookahead: block generate/propagate, block carries, then
    carries inside each block.  Depth 7, size about w * sqrt(w)**2.
    """
    w = len(g)
    c0 = cin if cin is not None else b.const(0)
    if w <= 8:
        return [c0] + _span_carries(b, g, t, 0, w, cin)
    bs = max(2, math.isqrt(w))
    starts = list(range(0, w, bs))
    G, P = [], []
    for s in starts:
        e = min(w, s + bs)
        G.append(b.or_([b.and_([g[l], *t[l + 1:e]]) for l in range(s, e)]))
        P.append(b.and_(t[s:e]))
    nb = len(starts)
    C = [c0]
    for j in range(1, nb + 1):
        terms = [b.and_([G[l], *P[l + 1:j]]) for l in range(j)]
        if cin is not None:
            terms.append(b.and_([cin, *P[:j]]))
        C.append(b.or_(terms))
    out = []
    for j, s in enumerate(starts):
        e = min(w, s + bs)
        out.append(C[j])
        if e - s > 1:
            out += _span_carries(b, g, t, s, e - 1, C[j])
    out.append(C[nb])
    return out


def add(b: CircuitBuilder, x: Sequence[int], y: Sequence[int], cin: int | None = None,
        width: int | None = None) -> Bus:
    """x + y (+ cin), unsigned, truncated to ``width`` bits (default max width + 1)."""
    if width is None:
        width = max(len(x), len(y)) + 1
    x = zext(b, x, width)
    y = zext(b, y, width)
    g = [b.and_([u, v]) for u, v in zip(x, y)]
    t = [b.or_([u, v]) for u, v in zip(x, y)]
    h = [xor(b, u, v) for u, v in zip(x, y)]
    c = carries(b, g, t, cin)
    out = [xor(b, h[i], c[i]) for i in range(width)]
    return pad_bus(b, out, _level(b, [*x, *y, *([cin] if cin is not None else [])]) + ADD_DEPTH)


def sub(b: CircuitBuilder, x: Sequence[int], y: Sequence[int], width: int) -> Bus:
    """x - y modulo 2**width (operands are sign- or zero-extended by the caller)."""
    return add(b, x, not_bus(b, zext(b, y, width)), cin=b.const(1), width=width)


def increment(b: CircuitBuilder, x: Sequence[int], c: int) -> Bus:
    """x + c for a single bit c; the result is one bit wider."""
    out = []
    for i in range(len(x)):
        out.append(xor(b, x[i], b.and_([c, *x[:i]])))
    out.append(b.and_([c, *x]))
    return out


def negate_if(b: CircuitBuilder, x: Sequence[int], s: int) -> Bus:
    """Two's complement negation of ``x`` when ``s`` (same width)."""
    flipped = [xor(b, v, s) for v in x]
    return increment(b, flipped, s)[:len(x)]


# ---------------------------------------------------------------------------
# multi-operand addition by threshold counting
# ---------------------------------------------------------------------------

def count_bits(b: CircuitBuilder, items: Sequence[tuple[int, int]]) -> Bus:
    """Binary value of ``sum(weight * bit)``, via one MAJORITY threshold per value.

    Weights are realised by replicating the bit in the threshold fan-in.
    Bit j of the count is an OR over the runs of values in which it is set.
    """
    xs = [x for x, w in items for _ in range(w)]
    vmax = len(xs)
    nbits = vmax.bit_length()
    ge = {}

    def at_least(v):
        if v > vmax:
            return b.const(0)
        if v not in ge:
            ge[v] = b.threshold(xs, v)
        return ge[v]

    out = []
    for j in range(nbits):
        run = 1 << j
        terms = []
        for v in range(run, vmax + 1, 2 * run):
            hi = at_least(v + run)
            terms.append(b.and_([at_least(v), b.not_(hi)]))
        out.append(b.or_(terms))
    return out


def _compress(b, cols, h, width):
    out = [[] for _ in range(width)]
    for c0 in range(0, width, h):
        block = cols[c0:c0 + h]
        if max((len(c) for c in block), default=0) <= 1:
            for i, col in enumerate(block):
                out[c0 + i].extend(col)
            continue
        items = [(x, 1 << i) for i, col in enumerate(block) for x in col]
        for j, bit in enumerate(count_bits(b, items)):
            if c0 + j < width and b.const_value(bit) != 0:
                out[c0 + j].append(bit)
    return out


def sum_columns(b: CircuitBuilder, cols: Sequence[Sequence[int]], width: int) -> Bus:
    """Sum of bits arranged by column weight (column c has weight 2**c), mod 2**width.

    Two rounds of threshold counting bring every column down to two bits
    (columns of height H become height bitlen(H), and blocks of bitlen(H)
    columns then sum into at most two blocks), then one lookahead adder
    finishes.  Stage outputs are padded with buffers to a fixed depth over
    the stage inputs, so the depth never depends on the column heights.
    """
    cols = [list(c) for c in cols[:width]] + [[] for _ in range(width - len(cols))]
    k = 0
    for c, col in enumerate(cols):
        keep = []
        for x in col:
            v = b.const_value(x)
            if v is None:
                keep.append(x)
            elif v:
                k += 1 << c
        cols[c] = keep
    for c in range(width):
        if (k >> c) & 1:
            cols[c].append(b.const(1))
    base = _level(b, [x for c in cols for x in c])
    if max(len(c) for c in cols) > 2:
        cols = _pad_cols(b, _compress(b, cols, 1, width), base + COUNT_DEPTH)
        h = max(1, max(len(c) for c in cols).bit_length())
        cols = _pad_cols(b, _compress(b, cols, h, width), base + 2 * COUNT_DEPTH)
        base += 2 * COUNT_DEPTH
        assert max(len(c) for c in cols) <= 2
    r1 = [c[0] if c else b.const(0) for c in cols]
    r2 = [c[1] if len(c) > 1 else b.const(0) for c in cols]
    return add(b, r1, r2, width=width)


# ---------------------------------------------------------------------------
# comparison and decoding
# ---------------------------------------------------------------------------

def less_than(b: CircuitBuilder, x: Sequence[int], y: Sequence[int]) -> int:
    """Unsigned x < y for equal-width buses."""
    w = len(x)
    eq = [xnor(b, x[j], y[j]) for j in range(w)]
    terms = [b.and_([b.not_(x[i]), y[i], *eq[i + 1:]]) for i in range(w)]
    return b.or_(terms)


def less_equal(b: CircuitBuilder, x: Sequence[int], y: Sequence[int]) -> int:
    return b.not_(less_than(b, y, x))


def _literals(b, x, c):
    return [x[j] if (c >> j) & 1 else b.not_(x[j]) for j in range(len(x))]


def eq_const(b: CircuitBuilder, x: Sequence[int], c: int) -> int:
    if not 0 <= c < 1 << len(x):
        return b.const(0)
    return b.and_(_literals(b, x, c))


def ge_const(b: CircuitBuilder, x: Sequence[int], c: int) -> int:
    """Unsigned x >= c."""
    w = len(x)
    if c <= 0:
        return b.const(1)
    if c >= 1 << w:
        return b.const(0)
    lits = _literals(b, x, c)
    terms = [b.and_([x[i], *lits[i + 1:]]) for i in range(w) if not (c >> i) & 1]
    terms.append(b.and_(lits))
    return b.or_(terms)


def signed_ge_const(b: CircuitBuilder, x: Sequence[int], c: int) -> int:
    """Two's complement x >= c."""
    w = len(x)
    bias = 1 << (w - 1)
    flipped = list(x[:-1]) + [b.not_(x[-1])]
    return ge_const(b, flipped, c + bias)


def signed_eq_const(b: CircuitBuilder, x: Sequence[int], c: int) -> int:
    w = len(x)
    if not -(1 << (w - 1)) <= c < 1 << (w - 1):
        return b.const(0)
    return eq_const(b, x, c % (1 << w))


def decode(b: CircuitBuilder, x: Sequence[int], values: Sequence[int]) -> Bus:
    """One-hot indicators [x == v] for each v (v taken modulo 2**len(x))."""
    return [eq_const(b, x, v % (1 << len(x))) for v in values]


def binary_of_onehot(b: CircuitBuilder, onehot: Sequence[int], width: int) -> Bus:
    return [b.or_([h for v, h in enumerate(onehot) if (v >> j) & 1]) for j in range(width)]


# ---------------------------------------------------------------------------
# multiplication of unsigned buses
# ---------------------------------------------------------------------------

def multiply(b: CircuitBuilder, x: Sequence[int], y: Sequence[int]) -> Bus:
    """Exact unsigned product (width len(x) + len(y))."""
    width = len(x) + len(y)
    cols: list[list[int]] = [[] for _ in range(width)]
    for i, u in enumerate(x):
        for j, v in enumerate(y):
            pp = b.and_([u, v])
            if b.const_value(pp) != 0:
                cols[i + j].append(pp)
    return sum_columns(b, cols, width)
