import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcgnn.circuit import (AND, MAJORITY, NOT, OR, CircuitBuilder, CircuitError, CircuitFamily,
                           check_family_scaling, depth, evaluate, from_netlist, mutate,
                           simulate, size, to_netlist)
from tcgnn.lowering import METERED, Lowerer


def single(kind, bits):
    b = CircuitBuilder(simplify=False)
    xs = b.inputs_(len(bits))
    g = {AND: b.and_, OR: b.or_, MAJORITY: b.maj}[kind](xs)
    return evaluate(b.build([g]), bits)[0]


def test_gate_semantics():
    assert single(MAJORITY, [1, 0, 1]) == 1
    assert single(MAJORITY, [1, 0]) == 0
    assert single(MAJORITY, [1, 1, 0, 0]) == 0
    assert single(AND, [1, 1, 1]) == 1
    assert single(OR, [0, 0, 0]) == 0
    b = CircuitBuilder()
    x, y = b.inputs_(2)
    c = b.build([b.not_(b.and_([x, y]))])
    assert evaluate(c, [1, 1]) == [0]


def test_depth_and_size_examples():
    b = CircuitBuilder()
    xs = b.inputs_(3)
    assert depth(b.build([b.and_(xs)])).const == 1
    b = CircuitBuilder(simplify=False)
    x = b.input()
    c = b.build([b.not_(b.not_(b.not_(x)))])
    assert depth(c).const == 3
    b = CircuitBuilder()
    b.inputs_(5)
    assert size(b.build([])) == 5
    L = Lowerer(4, METERED)
    s = L.add(L.input(), L.input())
    assert str(depth(L.b.build(list(s.bits)))) == "d_std"


def test_threshold():
    for k in range(1, 6):
        for t in range(0, k + 2):
            b = CircuitBuilder()
            xs = b.inputs_(k)
            c = b.build([b.threshold(xs, t)])
            for bits in itertools.product([0, 1], repeat=k):
                assert evaluate(c, bits) == [int(sum(bits) >= t)]


def test_folding():
    b = CircuitBuilder()
    x = b.input()
    assert b.and_([x, b.const(0)]) == b.const(0)
    assert b.or_([x, b.const(0)]) == x
    assert b.and_([x, b.not_(x)]) == b.const(0)
    assert b.not_(b.not_(x)) == x
    assert b.and_([x, x]) == x
    y = b.input()
    assert b.and_([x, y]) == b.and_([y, x])         # hash-consing


def test_evaluate_errors():
    b = CircuitBuilder()
    x = b.input()
    with pytest.raises(CircuitError):
        evaluate(b.build([x]), [1, 0])
    L = Lowerer(4, METERED)
    s = L.mul(L.input(), L.input())
    with pytest.raises(CircuitError):
        evaluate(L.b.build(list(s.bits)), [0] * 22)


def random_circuit(rnd, n_in=5, n_gates=40):
    b = CircuitBuilder(simplify=False)
    pool = b.inputs_(n_in)
    for _ in range(n_gates):
        kind = rnd.choice([AND, OR, MAJORITY, NOT])
        if kind == NOT:
            pool.append(b.not_(rnd.choice(pool)))
        else:
            xs = rnd.sample(pool, rnd.randint(1, min(4, len(pool))))
            pool.append({AND: b.and_, OR: b.or_, MAJORITY: b.maj}[kind](xs))
    return b.build(pool[-4:])


def brute_depth(c):
    memo = {}

    def longest(g):
        if g not in memo:
            fin = c.fanins[g]
            memo[g] = 0 if not fin else 1 + max(longest(f) for f in fin)
        return memo[g]
    return max(longest(g) for g in c.outputs)


@settings(max_examples=50)
@given(st.randoms())
def test_simulate_matches_evaluate_and_depth(rnd):
    c = random_circuit(rnd)
    X = np.array(list(itertools.product([0, 1], repeat=5)), dtype=np.uint8)
    Y = simulate(c, X)
    for row, out in zip(X, Y):
        assert list(out) == evaluate(c, list(row))
    assert depth(c).const == brute_depth(c)


@settings(max_examples=30)
@given(st.randoms())
def test_netlist_roundtrip(rnd):
    c = random_circuit(rnd)
    text = to_netlist(c)
    c2 = from_netlist(text)
    assert to_netlist(c2) == text
    assert c2.kinds == c.kinds and c2.fanins == c.fanins and c2.outputs == c.outputs


def test_netlist_metered_roundtrip_and_errors():
    L = Lowerer(4, METERED)
    s = L.iterated_sum([L.input() for _ in range(3)])
    c = L.b.build(list(s.bits))
    c2 = from_netlist(to_netlist(c))
    assert depth(c2) == depth(c)
    with pytest.raises(CircuitError):
        from_netlist("PREC 4\n0 INPUT\n2 INPUT\n")
    with pytest.raises(CircuitError):
        from_netlist("PREC 4\nINPUTS 0\nOUTPUTS 1\n0 INPUT\n1 AND 0 5\n")


def test_mutate():
    b = CircuitBuilder()
    x, y = b.inputs_(2)
    g = b.and_([x, y])
    c = b.build([g])
    m = mutate(c, g)
    assert evaluate(m, [1, 0]) == [1]
    assert evaluate(c, [1, 0]) == [0]
    with pytest.raises(CircuitError):
        mutate(c, x)


def test_family_scaling():
    def constant(n):
        b = CircuitBuilder()
        xs = b.inputs_(4)
        return b.build([b.and_(xs)])

    rep = check_family_scaling(CircuitFamily(constant, "const"), [2, 4, 8])
    assert rep.depth_constant and abs(rep.slope) < 1e-9

    def comparators(n):
        L = Lowerer(3)
        return L.b.build(list(L.maxn([L.input() for _ in range(n)]).bits))

    rep = check_family_scaling(CircuitFamily(comparators, "maxn"), [4, 8, 16, 32])
    assert rep.depth_constant
    assert 1.6 < rep.slope < 2.2 and rep.r2 > 0.99
    with pytest.raises(ValueError):
        check_family_scaling(CircuitFamily(constant), [4, 4, 8])

    def broken(n):
        raise RuntimeError("boom")
    with pytest.raises(CircuitError):
        check_family_scaling(CircuitFamily(broken, "broken"), [1, 2, 3])


def test_reproducible_generation():
    def build():
        L = Lowerer(4)
        return to_netlist(L.b.build(list(L.add(L.input(), L.input()).bits)))
    assert build() == build()
