import itertools
import random

import numpy as np
import pytest

from harness import mismatches, op_circuit
from tcgnn import fpn as F
from tcgnn import gnn
from tcgnn.circuit import CircuitError, depth, simulate
from tcgnn.fpn import FPN
from tcgnn.lowering import GATE, METERED, Lowerer


def run(c, *xs):
    X = np.array([sum((F.encode(x) for x in xs), [])], dtype=np.uint8)
    return list(simulate(c, X)[0])


def val(row, p):
    return F.decode(row, p)


@pytest.mark.parametrize("name", ["le", "add", "mul", "div", "max2", "min2"])
def test_binary_exhaustive_p3(name):
    xs = F.all_fpns(3)
    assert mismatches(name, 3, itertools.product(xs, xs)) == []


def test_examples():
    four0, six0 = FPN(1, 4, 0, 3), FPN(1, 6, 0, 3)
    assert run(op_circuit("le", 4), FPN(1, 8, 1, 4), FPN(1, 10, 1, 4)) == [1]
    assert val(run(op_circuit("mul", 3), four0, six0), 3) == FPN(1, 6, 2, 3)
    assert val(run(op_circuit("iterated_sum", 3, 3), four0, four0, four0), 3) == FPN(1, 6, 1, 3)
    assert val(run(op_circuit("iterated_sum", 3, 3), *[FPN.zero(3)] * 3), 3) == FPN.zero(3)
    assert val(run(op_circuit("exp", 4, 1), FPN.zero(4)), 4) == FPN.one(4)
    assert val(run(op_circuit("sqrt", 4, 1), F.from_rational(4, 4)), 4) == F.from_rational(2, 4)
    assert val(run(op_circuit("max2", 3), four0, FPN.zero(3)), 3) == four0
    x = FPN(-1, 5, -2, 3)
    assert val(run(op_circuit("add", 3), x, FPN.zero(3)), 3) == x
    assert val(run(op_circuit("maxn", 3, 1), x), 3) == x


@pytest.mark.parametrize("name", ["exp", "sqrt"])
@pytest.mark.parametrize("p", [3, 4])
def test_unary_lookup_exhaustive(name, p):
    assert mismatches(name, p, [(x,) for x in F.all_fpns(p)]) == []


def test_lookup_precision_limit():
    L = Lowerer(9)
    with pytest.raises(CircuitError):
        L.exp(L.input())


@pytest.mark.parametrize("n", [2, 3, 4])
def test_maxn_with_ties(n):
    rng = random.Random(n)
    pool = [FPN.zero(4), FPN.one(4), FPN(-1, 8, -3, 4), FPN(1, 15, 2, 4), FPN.inf(4), FPN.inf(4, -1)]
    tuples = [tuple(rng.choice(pool) for _ in range(n)) for _ in range(500)]
    assert mismatches("maxn", 4, tuples) == []
    assert mismatches("minn", 4, tuples) == []


def test_maxn_random_p4():
    rng = random.Random(7)
    xs = F.all_fpns(4)
    tuples = [tuple(rng.choice(xs) for _ in range(4)) for _ in range(10_000)]
    assert mismatches("maxn", 4, tuples) == []


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_iterated_sum_random_p6(n):
    rng = random.Random(n)
    xs = F.all_fpns(6, infinities=False)
    tuples = [tuple(rng.choice(xs) for _ in range(n)) for _ in range(2500)]
    assert mismatches("iterated_sum", 6, tuples) == []


def test_matmul_random_p6():
    p = 6
    rng = random.Random(3)
    L = Lowerer(p)
    A = [[L.input() for _ in range(3)] for _ in range(3)]
    B = [[L.input() for _ in range(3)] for _ in range(3)]
    Cw = L.matmul(A, B)
    c = L.b.build([bit for row in Cw for w in row for bit in w.bits])
    for _ in range(20):
        Av = [[gnn.random_fpn(rng, p) for _ in range(3)] for _ in range(3)]
        Bv = [[gnn.random_fpn(rng, p) for _ in range(3)] for _ in range(3)]
        out = run(c, *[x for r in Av for x in r], *[x for r in Bv for x in r])
        want = [x for r in gnn.matmul(Av, Bv) for x in r]
        w = F.wire_width(p)
        assert [val(out[i * w:(i + 1) * w], p) for i in range(9)] == want


def test_matmul_shape_error():
    L = Lowerer(4)
    a = L.input()
    with pytest.raises(CircuitError):
        L.matmul([[a, a]], [[a]])


def test_metered_symbols():
    L = Lowerer(4, METERED)
    a, b = L.input(), L.input()
    cases = {
        "d_std": [L.add(a, b), L.mul(a, b), L.div(a, b)],
        "d_plus": [L.iterated_sum([a, b, a])],
        "d_times": [L.iterated_prod([a, b])],
        "d_exp": [L.exp(a)],
        "d_sqrt": [L.sqrt(a)],
        "d_std + 3": [L.max2(a, b), L.maxn([a, b, a, b])],
    }
    for want, ws in cases.items():
        for w in ws:
            assert str(depth(L.b.build(list(w.bits)))) == want
    assert str(depth(L.b.build([L.compare(a, b)]))) == "d_std"


def test_max2_extra_depth_is_three():
    le = depth(op_circuit("le", 4)).const
    assert depth(op_circuit("max2", 4)).const == le + 3
    assert depth(op_circuit("maxn", 4, 4)).const == le + 3


def test_gate_depth_independent_of_parallel_copies():
    def build(k):
        L = Lowerer(4, GATE)
        outs = []
        for _ in range(k):
            outs += list(L.mul(L.input(), L.input()).bits)
        return L.b.build(outs)
    assert depth(build(1)) == depth(build(3))


def test_iterated_sum_depth_independent_of_n():
    ds = {depth(op_circuit("iterated_sum", 4, n)).const for n in (3, 5, 9, 16)}
    assert len(ds) == 1


def test_errors():
    L = Lowerer(4)
    with pytest.raises(ValueError):
        L.iterated_sum([])
    other = Lowerer(5).input()
    with pytest.raises((CircuitError, ValueError)):
        L.add(L.input(), other)
