from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fpn_oracle as O
from tcgnn import fpn as F
from tcgnn.fpn import FPN


def lit(text):
    return F.parse(text)


def tup(x):
    return (x.sign, x.mag, x.exp, x.is_inf)


def fpns(p=4, infinities=True):
    return st.sampled_from(F.all_fpns(p, infinities))


def finite(p):
    lo, hi = 1 << (p - 1), 1 << p
    nonzero = st.builds(FPN, st.sampled_from([1, -1]), st.integers(lo, hi - 1),
                        st.integers(-(1 << p), (1 << p) - 1), st.just(p))
    return st.one_of(st.just(FPN.zero(p)), nonzero)


# -- construction and invariants ----------------------------------------------

def test_invariants_rejected():
    with pytest.raises(ValueError):
        FPN(1, 3, 0, 3)            # not normalized
    with pytest.raises(ValueError):
        FPN(-1, 0, 0, 3)           # non-canonical zero
    with pytest.raises(ValueError):
        FPN(1, 4, 8, 3)            # exponent out of range
    with pytest.raises(ValueError):
        FPN(1, 4, 0, 1)


def test_all_fpns_count():
    assert len(F.all_fpns(4)) == 2 * 8 * 32 + 3
    assert len(set(F.all_fpns(3))) == len(F.all_fpns(3))


# -- rounding -------------------------------------------------------------------

def test_round_examples():
    assert tup(F.round_p(9, 3)) == (1, 4, 1, False)
    assert F.round_p(0, 3) == FPN.zero(3)
    assert F.round_p(Fraction(24), 3) == FPN(1, 6, 2, 3)


def test_round_representable_identity():
    for x in F.all_fpns(3, infinities=False):
        assert F.round_p(x.value(), 3) == x


def test_round_overflow_and_underflow():
    top = FPN(1, 7, 7, 3)
    assert F.round_p(top.value(), 3) == top
    assert F.round_p(top.value() + (1 << 6), 3).is_inf      # midpoint to the even side
    assert F.round_p(-top.value() - (1 << 7), 3) == FPN.inf(3, -1)
    tiny = FPN(1, 4, -8, 3).value()
    assert F.round_p(tiny / 2, 3) == FPN.zero(3)              # tie with zero goes to zero
    assert F.round_p(tiny / 2 + Fraction(1, 1 << 20), 3) == FPN(1, 4, -8, 3)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_round_matches_nearest_search_on_midpoints(p):
    for mid, lo, hi in O.midpoints(p):
        got = tup(F.round_p(mid, p))
        assert got == O.nearest(mid, p)
        assert got in (lo, hi)


@given(st.fractions(), st.fractions())
def test_round_monotone(r1, r2):
    a, b = sorted((r1, r2))
    assert F.fpn_le(F.round_p(a, 5), F.round_p(b, 5))


@given(st.fractions(max_denominator=1 << 12).filter(lambda r: abs(r) < 1 << 20))
def test_round_is_nearest(r):
    assert tup(F.round_p(r, 4)) == O.nearest(r, 4)


def test_int_div_examples():
    assert F.int_div(7, 2) == Fraction(7, 2)
    assert F.int_div(1, 3) == Fraction(11, 24)
    assert F.int_div(8, 4) == 2
    with pytest.raises(F.FPNZeroDivisionError):
        F.int_div(1, 0)


# -- basic operations -------------------------------------------------------------

def test_operation_examples():
    four, six = FPN(1, 4, 0, 3), FPN(1, 6, 0, 3)
    assert F.fpn_add(four, four) == FPN(1, 4, 1, 3)
    assert F.fpn_add(four, F.fpn_neg(four)) == FPN.zero(3)
    assert F.fpn_mul(four, six) == FPN(1, 6, 2, 3)
    assert F.fpn_div(FPN.one(4), lit("2*2^0@4")).value() == Fraction(1, 2)
    assert F.fpn_le(FPN(1, 4, 1, 3), FPN(1, 5, 1, 3))
    assert not F.fpn_le(FPN(1, 5, 1, 3), FPN(1, 4, 0, 3))


@given(fpns())
def test_identities(x):
    p = 4
    assert F.fpn_add(x, FPN.zero(p)) == x
    assert F.fpn_mul(x, FPN.one(p)) == x
    assert F.fpn_div(x, FPN.one(p)) == x
    assert F.fpn_le(x, x)
    assert F.fpn_le(FPN.inf(p, -1), x) and F.fpn_le(x, FPN.inf(p))
    if not x.is_inf:
        assert F.fpn_mul(x, FPN.zero(p)) == FPN.zero(p)
    if not x.is_zero:
        assert F.fpn_div(FPN.zero(p), x) == FPN.zero(p)


@given(fpns(), fpns())
def test_commutative(a, b):
    for op in (F.fpn_add, F.fpn_mul):
        try:
            r = op(a, b)
        except F.IndeterminateFormError:
            with pytest.raises(F.IndeterminateFormError):
                op(b, a)
            continue
        assert op(b, a) == r


@given(finite(6), finite(6))
def test_le_is_value_order(a, b):
    assert F.fpn_le(a, b) == (a.value() <= b.value())


@given(fpns(5), fpns(5))
def test_ops_match_oracle_p5(a, b):
    p = 5
    for op, ref in ((F.fpn_add, O.add), (F.fpn_mul, O.mul), (F.fpn_div, O.div)):
        try:
            got = tup(op(a, b))
        except (F.IndeterminateFormError, ZeroDivisionError):
            got = "error"
        try:
            want = ref(tup(a), tup(b), p)
        except (O.Indeterminate, ZeroDivisionError):
            want = "error"
        assert got == want
    assert F.fpn_le(a, b) == O.le(tup(a), tup(b), p)


def test_errors():
    p = 4
    inf, ninf, z = FPN.inf(p), FPN.inf(p, -1), FPN.zero(p)
    with pytest.raises(F.IndeterminateFormError):
        F.fpn_add(inf, ninf)
    with pytest.raises(F.IndeterminateFormError):
        F.fpn_mul(z, inf)
    with pytest.raises(F.IndeterminateFormError):
        F.fpn_div(inf, ninf)
    with pytest.raises(F.FPNZeroDivisionError):
        F.fpn_div(FPN.one(p), z)
    with pytest.raises(ValueError):
        F.fpn_add(FPN.one(3), FPN.one(4))
    assert F.fpn_add(inf, FPN.one(p)) == inf
    assert F.fpn_mul(ninf, lit("-8*2^0@4")) == inf


# -- iterated operations ------------------------------------------------------------

def test_iterated_examples():
    four, six = FPN(1, 4, 0, 3), FPN(1, 6, 0, 3)
    assert F.iterated_sum([four] * 3) == FPN(1, 6, 1, 3)
    assert F.iterated_sum([FPN.zero(3)] * 5) == FPN.zero(3)
    assert F.iterated_prod([four, six, FPN(1, 4, -2, 3)]) == FPN(1, 6, 2, 3)
    assert F.iterated_prod([FPN.one(3)] * 4) == FPN.one(3)
    assert F.iterated_prod([four, FPN.zero(3), six]) == FPN.zero(3)
    with pytest.raises(F.IndeterminateFormError):
        F.iterated_sum([FPN.inf(3), FPN.inf(3, -1)])


@given(st.lists(finite(5), min_size=1, max_size=8), st.randoms())
def test_iterated_exact_and_order_independent(xs, rnd):
    total = sum((x.value() for x in xs), Fraction(0))
    assert F.iterated_sum(xs) == F.round_p(total, 5)
    ys = list(xs)
    rnd.shuffle(ys)
    assert F.iterated_sum(ys) == F.iterated_sum(xs)
    assert F.iterated_prod(ys) == F.iterated_prod(xs)


# -- exp and sqrt ------------------------------------------------------------------------

def rel_err(y, exact):
    return abs(mpmath.mpf(y.value().numerator) / y.value().denominator - exact) / exact


def test_exp_sqrt_examples():
    for p in (3, 4, 8):
        assert F.fpn_exp(FPN.zero(p)) == FPN.one(p)
        assert F.fpn_exp(FPN.inf(p, -1)) == FPN.zero(p)
        assert F.fpn_exp(FPN.inf(p)) == FPN.inf(p)
        assert F.fpn_sqrt(FPN.zero(p)) == FPN.zero(p)
        assert F.fpn_sqrt(F.from_rational(4, p)) == F.from_rational(2, p)
        with mpmath.workdps(50):
            assert rel_err(F.fpn_exp(FPN.one(p)), mpmath.e) < mpmath.mpf(2) ** -p
            assert rel_err(F.fpn_sqrt(F.from_rational(2, p)), mpmath.sqrt(2)) < mpmath.mpf(2) ** -p
    with pytest.raises(F.FPNDomainError):
        F.fpn_sqrt(lit("-4*2^0@3"))


@settings(max_examples=300)
@given(finite(6))
def test_sqrt_error_bound(x):
    if x.sign < 0 and not x.is_zero:
        return
    with mpmath.workdps(60):
        exact = mpmath.sqrt(mpmath.mpf(x.value().numerator) / x.value().denominator)
        y = F.fpn_sqrt(x)
        if exact == 0:
            assert y.is_zero
        else:
            assert rel_err(y, exact) < mpmath.mpf(2) ** -6


# -- literals and wire encoding -------------------------------------------------------------

def test_literal_examples():
    assert lit("6*2^2@3") == FPN(1, 6, 2, 3)
    assert lit("1*2^0@3") == FPN.one(3)
    assert lit("-inf@4") == FPN.inf(4, -1)
    assert lit("0@5") == FPN.zero(5)
    for bad in ("5*2^0@2", "garbage", "1*2^0@1", "9*2^0@3"):
        with pytest.raises(ValueError):
            lit(bad)


@given(fpns(4))
def test_literal_and_wire_roundtrip(x):
    assert F.parse(str(x)) == x
    bits = F.encode(x)
    assert len(bits) == F.wire_width(4) == 11
    assert F.decode(bits, 4) == x


def test_wire_layout():
    assert F.encode(lit("-5*2^-1@3")) == [1, 1, 0, 1, 1, 1, 1, 1, 1]
    assert F.encode(FPN.inf(3)) == [0, 1, 0, 0, 0, 1, 0, 0, 0]
    with pytest.raises(ValueError):
        F.decode([0] * 8, 3)
