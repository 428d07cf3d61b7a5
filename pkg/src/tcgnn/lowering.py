"""Lowering of FPN operations to circuits.

Two backends share one interface.  ``METERED`` emits a single opaque node per
primitive, charged with its symbolic depth.  ``GATE`` emits real
NOT/AND/OR/MAJORITY gates that reproduce :mod:`tcgnn.fpn` bit for bit:

* add, mul and iterated sums align significands in fixed point, add them
  with threshold counting and feed one shared rounding subcircuit;
* comparison is a lexicographic compare of (exponent, significand) keys;
* exp, sqrt, reciprocal and division by a constant are DNF table lookups
  over all valid encodings, so they are only offered for p <= 8;
* binary division looks up the (significand, significand, sign) quotient
  and rounds it with the shared subcircuit.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

from . import fpn as F
from . import gates as G
from .circuit import CircuitBuilder, CircuitError, FpnWire
from .fpn import FPN

MAX_LOOKUP_PREC = 8
LOOKUP_OPS = frozenset({"exp", "sqrt", "div"})
DIV_GUARD = 4
FINALIZE_DEPTH = 34     # structural depth of finalize over its deepest input


@dataclass(frozen=True)
class Backend:
    mode: str = "gate"
    lookup_ops: frozenset = LOOKUP_OPS

    def __post_init__(self):
        if self.mode not in ("metered", "gate"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        extra = set(self.lookup_ops) - LOOKUP_OPS
        if extra:
            raise ValueError(f"lookup_ops must be a subset of {sorted(LOOKUP_OPS)}, got {sorted(extra)}")

    @property
    def metered(self) -> bool:
        return self.mode == "metered"


METERED = Backend("metered")
GATE = Backend("gate")


def _bits_to_int(bits: Sequence[int]) -> int:
    return sum(int(v) << i for i, v in enumerate(bits))


@lru_cache(maxsize=None)
def _unary_table(name: str, p: int, arg: FPN | None) -> tuple[tuple[int, int], ...]:
    fns: dict[str, Callable[[FPN], FPN]] = {
        "exp": F.fpn_exp,
        "sqrt": F.fpn_sqrt,
        "recip": lambda x: F.fpn_div(FPN.one(p), x),
        "div_const": lambda x: F.fpn_div(x, arg),
    }
    fn = fns[name]
    rows = []
    for x in F.all_fpns(p):
        try:
            y = fn(x)
        except F.FPNError:
            continue
        rows.append((_bits_to_int(F.encode(x)), _bits_to_int(F.encode(y))))
    return tuple(rows)


@lru_cache(maxsize=None)
def _div_table(p: int) -> tuple[tuple[int, int], ...]:
    """(index, value) rows of the significand quotient table.

    index = low p-1 bits of m1 | low p-1 bits of m2 << (p-1) | negative << (2p-2);
    value = floor(Q * 2**G) | sticky << (p + G), Q the quotient magnitude
    after the ``//`` adjustment (which moves towards +inf, so it shrinks a
    negative quotient's magnitude).
    """
    rows = []
    top = 1 << (p - 1)
    for lo1 in range(top):
        m1 = top | lo1
        for lo2 in range(top):
            m2 = top | lo2
            n = m1 << (p - 1)
            q = Fraction(n, m2)
            flag = (4 * n) % m2 != 0
            for neg in (0, 1):
                mag = q + (Fraction(-1, 8) if neg else Fraction(1, 8)) * flag
                scaled = mag * (1 << DIV_GUARD)
                m = scaled.numerator // scaled.denominator
                st = int(m * scaled.denominator != scaled.numerator)
                rows.append((lo1 | lo2 << (p - 1) | neg << (2 * p - 2),
                             m | st << (p + DIV_GUARD)))
    return tuple(rows)


@lru_cache(maxsize=None)
def _op_depth(op: str, p: int, arity: int) -> int:
    """Gate depth of ``op`` on free inputs (an upper bound for any instance)."""
    L = Lowerer(p, GATE)
    L.uniform = False
    xs = [L.input() for _ in range(arity)]
    if op == "le":
        out = [L.compare(*xs)]
    elif op == "sum":
        out = L.iterated_sum(xs).bits
    else:
        out = getattr(L, op)(*xs).bits
    return G._level(L.b, out)


class Lowerer:
    """Lowers FPN operations into one :class:`CircuitBuilder`."""

    def __init__(self, prec: int, backend: Backend = GATE, builder: CircuitBuilder | None = None):
        if prec < 2:
            raise ValueError("precision must be >= 2")
        self.p = prec
        self.backend = backend
        self.b = builder or CircuitBuilder(prec, simplify=not backend.metered)
        self.uniform = True

    @property
    def metered(self) -> bool:
        return self.backend.metered

    # wires ---------------------------------------------------------------------
    def input(self) -> FpnWire:
        return FpnWire(tuple(self.b.inputs_(2 * self.p + 3)), self.p)

    def const(self, x: FPN) -> FpnWire:
        if x.prec != self.p:
            raise ValueError(f"constant {x} has precision {x.prec}, expected {self.p}")
        return FpnWire(tuple(self.b.const(v) for v in F.encode(x)), self.p)

    def zero(self) -> FpnWire:
        return self.const(FPN.zero(self.p))

    def one(self) -> FpnWire:
        return self.const(FPN.one(self.p))

    def bit_as_fpn(self, g: int) -> FpnWire:
        """The FPN ``one`` if bit g is set, else zero (an adjacency entry as a number)."""
        enc = F.encode(FPN.one(self.p))
        z = self.b.const(0)
        return FpnWire(tuple(g if v else z for v in enc), self.p)

    def const_of(self, w: FpnWire) -> FPN | None:
        vals = [self.b.const_value(v) for v in w.bits]
        if any(v is None for v in vals):
            return None
        return F.decode(vals, self.p)

    def _gated_bit(self, w: FpnWire) -> int | None:
        enc = F.encode(FPN.one(self.p))
        g = w.bits[1]
        if self.b.const_value(g) is not None:
            return None
        z = self.b.const(0)
        for v, bit in zip(enc, w.bits):
            if bit != (g if v else z):
                return None
        return g

    def _check(self, *ws: FpnWire):
        for w in ws:
            if w.prec != self.p:
                raise CircuitError(f"width mismatch: wire of precision {w.prec}, expected {self.p}")

    def _meter(self, tag: str, ws: Sequence[FpnWire], width: int | None = None) -> FpnWire:
        fanin = [v for w in ws for v in w.bits]
        g = self.b.metered(tag, fanin, width or 2 * self.p + 3)
        return FpnWire((g,) * (2 * self.p + 3), self.p)

    def _fold(self, fn, *ws: FpnWire) -> FpnWire | None:
        cs = [self.const_of(w) for w in ws]
        if any(c is None for c in cs):
            return None
        try:
            return self.const(fn(*cs))
        except F.FPNError:
            return self.zero()

    def _settle(self, op: str, ins: Sequence, out: Sequence[int], arity: int = 2) -> list[int]:
        """Pad ``out`` to the op's free-input depth over its deepest input.

        Folding can only shorten paths, so the free-input depth bounds every
        instance; padding to it keeps circuit depth independent of which
        bits happen to be constant (which can change with n).
        """
        if not self.uniform:
            return list(out)
        bits = [v for w in ins for v in (w.bits if isinstance(w, FpnWire) else [w])]
        return G.pad_bus(self.b, out, G._level(self.b, bits) + _op_depth(op, self.p, arity))

    # comparisons ---------------------------------------------------------------
    def compare(self, a: FpnWire, b: FpnWire) -> int:
        """One bit: fpn_le(a, b)."""
        self._check(a, b)
        B = self.b
        with B.label("le"):
            if self.metered:
                return B.metered("le", a.bits + b.bits, 1)
            ca, cb = self.const_of(a), self.const_of(b)
            if ca is not None and cb is not None:
                return B.const(F.fpn_le(ca, cb))

            def key(w):
                nz = w.mag[0]
                e = w.exp_lsb()
                ek = [B.and_([nz, v]) for v in e[:-1]] + [B.and_([nz, B.not_(e[-1])])]
                return w.mag_lsb() + ek

            ka, kb = key(a), key(b)
            sa, sb = a.sign, b.sign
            nsa, nsb = B.not_(sa), B.not_(sb)
            r = B.or_([
                B.and_([nsa, nsb, G.less_equal(B, ka, kb)]),
                B.and_([sa, sb, G.less_equal(B, kb, ka)]),
                B.and_([sa, nsb]),
            ])
            return self._settle("le", [a, b], [r])[0]

    def _select(self, c: int, x: FpnWire, y: FpnWire) -> FpnWire:
        # (c and x_i) or (not c and y_i): NOT, AND, OR
        B = self.b
        nc = B.not_(c)
        return FpnWire(tuple(B.or_([B.and_([c, u]), B.and_([nc, v])])
                             for u, v in zip(x.bits, y.bits)), self.p)

    def max2(self, a: FpnWire, b: FpnWire) -> FpnWire:
        with self.b.label("max2"):
            return self._select(self.compare(a, b), b, a)

    def min2(self, a: FpnWire, b: FpnWire) -> FpnWire:
        with self.b.label("min2"):
            return self._select(self.compare(a, b), a, b)

    def _extreme(self, xs: Sequence[FpnWire], want_max: bool) -> FpnWire:
        if not xs:
            raise ValueError("max/min of an empty list")
        self._check(*xs)
        B = self.b
        n = len(xs)
        if n == 1 and not self.metered:
            return xs[0]
        dom = []
        for i in range(n):
            row = []
            for j in range(n):
                if i == j and not self.metered:
                    continue
                # x_i >= x_j for max, x_i <= x_j for min
                row.append(self.compare(xs[j], xs[i]) if want_max else self.compare(xs[i], xs[j]))
            dom.append(B.and_(row))
        bits = tuple(B.or_([B.and_([dom[i], xs[i].bits[k]]) for i in range(n)])
                     for k in range(2 * self.p + 3))
        return FpnWire(bits, self.p)

    def maxn(self, xs: Sequence[FpnWire]) -> FpnWire:
        with self.b.label("maxn"):
            return self._extreme(xs, True)

    def minn(self, xs: Sequence[FpnWire]) -> FpnWire:
        with self.b.label("minn"):
            return self._extreme(xs, False)

    # rounding ------------------------------------------------------------------
    def finalize(self, sign: int, M: Sequence[int], sticky: int, E: Sequence[int] | None,
                 offset: int, force_inf: int | None = None, inf_sign: int | None = None,
                 force_zero: int | None = None) -> FpnWire:
        """round_p of (M + sticky*delta) * 2**(E + offset), 0 < delta < 1.

        M is an unsigned bus, E a two's complement bus (or None for 0).  The
        override flags select +-inf or zero regardless of M.
        """
        B = self.b
        p = self.p
        M = list(M)
        wM = len(M)
        flags = [v for v in (sticky, force_inf, inf_sign, force_zero) if v is not None]
        base = G._level(B, [sign, *M, *(E or []), *flags])
        emin, emax = -(1 << p), (1 << p) - 1
        with B.label("round"):
            higher = [B.or_(M[i + 1:]) for i in range(wM)]
            lead = [B.and_([M[i], B.not_(higher[i])]) for i in range(wM)]
            mzero = B.not_(B.or_(M))

            def pick(idx):
                return B.or_([B.and_([lead[i], M[idx(i)]]) for i in range(wM)
                              if 0 <= idx(i) < wM])

            Q = [pick(lambda i, j=j: i - p + 1 + j) for j in range(p)]
            R = pick(lambda i: i - p)
            low = [B.or_(M[:i - p]) if i - p > 0 else B.const(0) for i in range(wM)]
            S = B.or_([sticky, *[B.and_([lead[i], low[i]]) for i in range(wM)]])
            inc = B.and_([R, B.or_([S, Q[0]])])
            Qr = G.increment(B, Q, inc)
            cout = Qr[p]
            mag = Qr[:p - 1] + [B.or_([Qr[p - 1], cout])]

            lw = max(1, (wM - 1).bit_length())
            lpos = G.binary_of_onehot(B, lead, lw)
            ew = max(len(E) if E else 0, lw + 1, (abs(offset) + p).bit_length() + 1,
                     p + 3) + 2
            cols: list[list[int]] = [[] for _ in range(ew)]
            if E:
                for i, v in enumerate(G.sext(E, ew)):
                    cols[i].append(v)
            for i, v in enumerate(lpos):
                cols[i].append(v)
            k = (offset - (p - 1)) % (1 << ew)
            for i in range(ew):
                if (k >> i) & 1:
                    cols[i].append(B.const(1))
            e_unr = G.sum_columns(B, cols, ew)
            e_rnd = G.increment(B, e_unr, cout)[:ew]

            over = G.signed_ge_const(B, e_rnd, emax + 1)
            under = B.not_(G.signed_ge_const(B, e_unr, emin))
            half_up = B.or_([*Q[:p - 1], R, S])
            minpos = B.and_([G.signed_eq_const(B, e_unr, emin - 1), half_up])

            fi = force_inf if force_inf is not None else B.const(0)
            fz = force_zero if force_zero is not None else B.const(0)
            nfi, nfz = B.not_(fi), B.not_(fz)
            live = B.and_([nfi, nfz, B.not_(mzero)])
            is_inf = B.or_([fi, B.and_([live, B.not_(under), over])])
            is_min = B.and_([live, under, minpos])
            is_norm = B.and_([live, B.not_(under), B.not_(over)])
            is_zero = B.not_(B.or_([is_inf, is_min, is_norm]))
            isg = inf_sign if inf_sign is not None else sign
            sgn = B.or_([B.and_([fi, isg]), B.and_([nfi, B.not_(is_zero), sign])])

            top = 1 << (p - 1)
            inf_e = (1 << p) % (1 << (p + 2))
            min_e = emin % (1 << (p + 2))
            mag_out = []
            for j in range(p):
                terms = [B.and_([is_norm, mag[j]])]
                if (top >> j) & 1:
                    terms += [is_inf, is_min]
                mag_out.append(B.or_(terms))
            exp_out = []
            for j in range(p + 2):
                terms = [B.and_([is_norm, e_rnd[j]])]
                if (inf_e >> j) & 1:
                    terms.append(is_inf)
                if (min_e >> j) & 1:
                    terms.append(is_min)
                exp_out.append(B.or_(terms))
        bits = (sgn, *reversed(mag_out), *reversed(exp_out))
        return FpnWire(tuple(G.pad_bus(B, bits, base + FINALIZE_DEPTH)), p)

    def _is_inf(self, w: FpnWire) -> int:
        return G.eq_const(self.b, w.exp_lsb(), 1 << self.p)

    # basic arithmetic ----------------------------------------------------------
    def add(self, a: FpnWire, b: FpnWire) -> FpnWire:
        self._check(a, b)
        with self.b.label("add"):
            if self.metered:
                return self._meter("add", [a, b])
            folded = self._fold(F.fpn_add, a, b)
            if folded is not None:
                return folded
            z = FPN.zero(self.p)
            if self.const_of(a) == z:
                return b
            if self.const_of(b) == z:
                return a
            return FpnWire(tuple(self._settle("add", [a, b], self._add_gate(a, b).bits)), self.p)

    def _add_gate(self, a: FpnWire, b: FpnWire) -> FpnWire:
        B = self.b
        p = self.p
        Fg = p + 2
        ma, mb = a.mag_lsb(), b.mag_lsb()
        ea, eb = a.exp_lsb(), b.exp_lsb()
        za, zb = B.not_(ma[-1]), B.not_(mb[-1])
        # a zero operand takes its partner's exponent
        ea2 = G.mux_bus(B, za, eb, ea)
        eb2 = G.mux_bus(B, zb, ea, eb)
        W = p + 3
        d1 = G.sub(B, G.sext(ea2, W), G.sext(eb2, W), W)
        d2 = G.sub(B, G.sext(eb2, W), G.sext(ea2, W), W)
        ge = B.not_(d1[-1])
        k = G.mux_bus(B, ge, d1, d2)
        mbig = G.mux_bus(B, ge, ma, mb)
        msmall = G.mux_bus(B, ge, mb, ma)
        ebig = G.mux_bus(B, ge, ea2, eb2)
        sbig = G.mux(B, ge, a.sign, b.sign)
        ssmall = G.mux(B, ge, b.sign, a.sign)

        S = p + Fg
        oh = G.decode(B, k, range(S))
        far = G.ge_const(B, k, S)
        small_nz = B.or_(msmall)
        X = [B.const(0)] * Fg + msmall
        shm = [B.or_([B.and_([oh[v], X[j + v]]) for v in range(S) if j + v < S])
               for j in range(S)]
        st = B.or_([B.and_([oh[v], B.or_(msmall[:v - Fg])]) for v in range(Fg + 1, S)]
                   + [B.and_([far, small_nz])])
        flag = B.or_([B.and_([oh[v], B.or_(msmall[:v - 2])]) for v in range(3, S)]
                     + [B.and_([far, small_nz])])

        WT = S + 3
        cols: list[list[int]] = [[] for _ in range(WT)]
        for i in range(WT):
            cols[i].append(G.xor(B, mbig[i - Fg], sbig) if Fg <= i < S else sbig)
            cols[i].append(G.xor(B, shm[i], ssmall) if i < S else ssmall)
        cols[0] += [sbig, B.and_([ssmall, B.not_(st)])]
        cols[Fg - 3].append(flag)
        T = G.sum_columns(B, cols, WT)
        neg = T[-1]
        mag = G.increment(B, [G.xor(B, t, neg) for t in T], B.and_([neg, B.not_(st)]))[:WT]
        ia, ib = self._is_inf(a), self._is_inf(b)
        return self.finalize(neg, mag, st, ebig, -Fg,
                             force_inf=B.or_([ia, ib]), inf_sign=G.mux(B, ia, a.sign, b.sign))

    def neg(self, a: FpnWire) -> FpnWire:
        """Sign flip (zero stays canonical)."""
        B = self.b
        if self.metered:
            return self._meter("add", [a])
        s = B.and_([B.not_(a.sign), a.mag[0]])
        return FpnWire((s,) + a.bits[1:], self.p)

    def mul(self, a: FpnWire, b: FpnWire) -> FpnWire:
        self._check(a, b)
        B = self.b
        with B.label("mul"):
            if self.metered:
                return self._meter("mul", [a, b])
            folded = self._fold(F.fpn_mul, a, b)
            if folded is not None:
                return folded
            p = self.p
            for x, y in ((a, b), (b, a)):
                c = self.const_of(x)
                if c == FPN.zero(p):
                    return self.zero()
                if c == FPN.one(p):
                    return y
                g = self._gated_bit(x)
                if g is not None:
                    return FpnWire(tuple(B.and_([g, v]) for v in y.bits), p)
            M = G.multiply(B, a.mag_lsb(), b.mag_lsb())
            E = G.add(B, G.sext(a.exp_lsb(), p + 3), G.sext(b.exp_lsb(), p + 3), width=p + 3)
            sign = G.xor(B, a.sign, b.sign)
            zero = B.or_([B.not_(a.mag[0]), B.not_(b.mag[0])])
            inf = B.or_([self._is_inf(a), self._is_inf(b)])
            w = self.finalize(sign, M, B.const(0), E, 0, force_inf=inf, force_zero=zero)
            return FpnWire(tuple(self._settle("mul", [a, b], w.bits)), p)

    def _dnf(self, inputs: Sequence[int], rows, out_width: int) -> list[int]:
        """Depth-3 table lookup: literal layer, one minterm per row, OR per output bit."""
        B = self.b
        neg = [B.not_(v) for v in inputs]
        on: list[list[int]] = [[] for _ in range(out_width)]
        for idx, val in rows:
            if not val:
                continue
            term = B.and_([inputs[i] if (idx >> i) & 1 else neg[i] for i in range(len(inputs))])
            for j in range(out_width):
                if (val >> j) & 1:
                    on[j].append(term)
        return G.pad_bus(B, [B.or_(t) for t in on], G._level(B, inputs) + 3)

    def div(self, a: FpnWire, b: FpnWire) -> FpnWire:
        self._check(a, b)
        B = self.b
        p = self.p
        with B.label("div"):
            if self.metered:
                return self._meter("div", [a, b])
            folded = self._fold(F.fpn_div, a, b)
            if folded is not None:
                return folded
            cb = self.const_of(b)
            if cb is not None and not cb.is_inf and cb.mag:
                return self.div_const(a, cb)
            self._need_lookup("div")
            if self.const_of(a) == FPN.zero(p):
                return self.zero()
            ma, mb = a.mag_lsb(), b.mag_lsb()
            sx = G.xor(B, a.sign, b.sign)
            idx = ma[:p - 1] + mb[:p - 1] + [sx]
            out = self._dnf(idx, _div_table(p), p + DIV_GUARD + 1)
            M, st = out[:-1], out[-1]
            E = G.sub(B, G.sext(a.exp_lsb(), p + 3), G.sext(b.exp_lsb(), p + 3), p + 3)
            ia, ib = self._is_inf(a), self._is_inf(b)
            zero = B.or_([B.not_(a.mag[0]), ib])
            w = self.finalize(sx, M, st, E, -(p - 1) - DIV_GUARD,
                              force_inf=ia, inf_sign=sx, force_zero=zero)
            return FpnWire(tuple(self._settle("div", [a, b], w.bits)), p)

    # table lookups ---------------------------------------------------------------
    def _need_lookup(self, op: str):
        if op not in self.backend.lookup_ops:
            raise CircuitError(f"gate-level {op} is only available as a table lookup")
        if self.p > MAX_LOOKUP_PREC:
            raise CircuitError(
                f"gate-level {op} lookup needs p <= {MAX_LOOKUP_PREC}, got p = {self.p}")

    def lookup(self, name: str, x: FpnWire, arg: FPN | None = None) -> FpnWire:
        """Unary table lookup of ``exp``, ``sqrt``, ``recip`` (1/x) or ``div_const`` (x/arg)."""
        p = self.p
        op = {"exp": "exp", "sqrt": "sqrt", "recip": "div", "div_const": "div"}[name]
        self._need_lookup(op)
        c = self.const_of(x)
        if c is not None:
            table = dict(_unary_table(name, p, arg))
            val = table.get(_bits_to_int(F.encode(c)), 0)
            return FpnWire(tuple(self.b.const((val >> i) & 1) for i in range(2 * p + 3)), p)
        out = self._dnf(list(x.bits), _unary_table(name, p, arg), 2 * p + 3)
        return FpnWire(tuple(out), p)

    def exp(self, x: FpnWire) -> FpnWire:
        self._check(x)
        with self.b.label("exp"):
            if self.metered:
                return self._meter("exp", [x])
            return self.lookup("exp", x)

    def sqrt(self, x: FpnWire) -> FpnWire:
        self._check(x)
        with self.b.label("sqrt"):
            if self.metered:
                return self._meter("sqrt", [x])
            return self.lookup("sqrt", x)

    def recip(self, x: FpnWire) -> FpnWire:
        """fpn_div(one, x)."""
        self._check(x)
        with self.b.label("recip"):
            if self.metered:
                return self._meter("div", [x])
            return self.lookup("recip", x)

    def rsqrt(self, x: FpnWire) -> FpnWire:
        """fpn_div(one, fpn_sqrt(x)): one d_sqrt node when metered, sqrt then reciprocal otherwise."""
        self._check(x)
        if self.metered:
            with self.b.label("rsqrt"):
                return self._meter("rsqrt", [x])
        return self.recip(self.sqrt(x))

    def div_const(self, x: FpnWire, c: FPN) -> FpnWire:
        """fpn_div(x, c) for a fixed non-zero finite c."""
        self._check(x)
        with self.b.label("div"):
            if self.metered:
                return self._meter("div", [x, self.const(c)])
            if c == FPN.one(self.p):
                return x
            return self.lookup("div_const", x, c)

    # iterated operations ---------------------------------------------------------
    def iterated_sum(self, xs: Sequence[FpnWire]) -> FpnWire:
        if not xs:
            raise ValueError("iterated sum of an empty list")
        self._check(*xs)
        with self.b.label("sum"):
            if self.metered:
                return self._meter("sum", xs)
            z = FPN.zero(self.p)
            live = [x for x in xs if self.const_of(x) != z]
            if not live:
                return self.zero()
            if len(live) == 1:
                return live[0]
            folded = self._fold(lambda *v: F.iterated_sum(v), *live)
            if folded is not None:
                return folded
            w = self._sum_gate(live)
            return FpnWire(tuple(self._settle("sum", live, w.bits, 3)), self.p)

    def _sum_gate(self, xs: Sequence[FpnWire]) -> FpnWire:
        B = self.b
        p = self.p
        span = 1 << (p + 1)               # exponent positions -2^p .. 2^p - 1
        Wf = span - 1 + p
        WS = Wf + len(xs).bit_length() + 1
        pos: list[list[int]] = [[] for _ in range(WS)]
        negc: list[list[int]] = [[] for _ in range(WS)]
        infs, inf_signs = [], []
        for x in xs:
            m, e = x.mag_lsb(), x.exp_lsb()
            oh = G.decode(B, e, [v - (1 << p) for v in range(span)])
            ns = B.not_(x.sign)
            for c in range(Wf):
                bit = B.or_([B.and_([oh[v], m[c - v]]) for v in range(span) if 0 <= c - v < p])
                pos[c].append(B.and_([bit, ns]))
                negc[c].append(B.and_([bit, x.sign]))
            i = self._is_inf(x)
            infs.append(i)
            inf_signs.append(B.and_([i, x.sign]))
        P = G.sum_columns(B, pos, WS)
        N = G.sum_columns(B, negc, WS)
        d1 = G.sub(B, P, N, WS)
        d2 = G.sub(B, N, P, WS)
        neg = d1[-1]
        M = G.pad_bus(B, G.mux_bus(B, neg, d2, d1), G._level(B, d1 + d2) + 3)
        return self.finalize(neg, M, B.const(0), None, -(1 << p),
                             force_inf=B.or_(infs), inf_sign=B.or_(inf_signs))

    def iterated_prod(self, xs: Sequence[FpnWire]) -> FpnWire:
        """Exact product then one rounding.

        The gate backend multiplies the significands with a balanced tree of
        exact integer multipliers, so its depth grows with log(len(xs)).
        """
        if not xs:
            raise ValueError("iterated product of an empty list")
        self._check(*xs)
        B = self.b
        p = self.p
        with B.label("prod"):
            if self.metered:
                return self._meter("prod", xs)
            if len(xs) == 1:
                return xs[0]
            folded = self._fold(lambda *v: F.iterated_prod(v), *xs)
            if folded is not None:
                return folded
            level = [x.mag_lsb() for x in xs]
            while len(level) > 1:
                nxt = [G.multiply(B, level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
                if len(level) % 2:
                    nxt.append(level[-1])
                level = nxt
            n = len(xs)
            ew = p + 3 + n.bit_length()
            cols: list[list[int]] = [[] for _ in range(ew)]
            for x in xs:
                for i, v in enumerate(G.sext(x.exp_lsb(), ew)):
                    cols[i].append(v)
            E = G.sum_columns(B, cols, ew)
            parity = G.sum_columns(B, [[x.sign for x in xs]], 1)[0]
            zero = B.or_([B.not_(x.mag[0]) for x in xs])
            inf = B.or_([self._is_inf(x) for x in xs])
            return self.finalize(parity, level[0], B.const(0), E, 0,
                                 force_inf=inf, force_zero=zero)

    # composite -----------------------------------------------------------------
    def matmul(self, A: Sequence[Sequence[FpnWire]], Bm: Sequence[Sequence[FpnWire]]):
        n1, n2 = len(A), len(Bm)
        if any(len(r) != n2 for r in A):
            raise CircuitError("matmul shape mismatch")
        n3 = len(Bm[0]) if n2 else 0
        if any(len(r) != n3 for r in Bm):
            raise CircuitError("ragged right operand in matmul")
        with self.b.label("matmul"):
            return [[self.iterated_sum([self.mul(A[i][j], Bm[j][k]) for j in range(n2)])
                     for k in range(n3)] for i in range(n1)]

    def relu(self, x: FpnWire) -> FpnWire:
        with self.b.label("relu"):
            return self.max2(self.zero(), x)

    def leaky_relu(self, x: FpnWire, s: FpnWire) -> FpnWire:
        with self.b.label("leaky_relu"):
            z = self.zero()
            return self.add(self.max2(z, x), self.mul(s, self.min2(z, x)))
