"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python tests/test_acceptance.py``.
"""
import decimal
import itertools
import math
import random
import sys

import pytest

import fpn_oracle as O
from harness import mismatches
from tcgnn import compiler as C
from tcgnn import fpn as F
from tcgnn import gnn
from tcgnn import oracles as OR
from tcgnn.circuit import depth
from tcgnn.fpn import FPN
from tcgnn.lowering import GATE, METERED

CONFIGS = [(conv, readout, m) for conv in gnn.CONV_KINDS for readout in gnn.READOUT_KINDS
           for m in (1, 2, 3)]


def tup(x):
    return (x.sign, x.mag, x.exp, x.is_inf)


def outcome(fn, *args):
    try:
        r = fn(*args)
    except (F.IndeterminateFormError, O.Indeterminate):
        return "indeterminate"
    except ZeroDivisionError:
        return "div0"
    return tup(r) if isinstance(r, FPN) else r


def test_c1_fpn_exhaustive_conformance(criterion):
    p = 4
    xs = F.all_fpns(p)
    ops = [(F.fpn_add, O.add), (F.fpn_mul, O.mul), (F.fpn_div, O.div), (F.fpn_le, O.le)]
    with criterion(1, "FPN ops equal the rational oracle on all p=4 pairs", 60) as c:
        bad = 0
        for a, b in itertools.product(xs, xs):
            ta, tb = tup(a), tup(b)
            for impl, ref in ops:
                if outcome(impl, a, b) != outcome(ref, ta, tb, p):
                    bad += 1
        c.note(f"{len(xs) ** 2} pairs x 4 ops, {bad} disagreements")
        assert bad == 0


def test_c2_round_to_even(criterion):
    p = 4
    with criterion(2, "every p=4 midpoint rounds to the even significand", 1) as c:
        count = bad = 0
        for mid, lo, hi in O.midpoints(p):
            count += 1
            got = tup(F.round_p(mid, p))
            if lo[1] == 0 or hi[1] == 0:
                want = lo if lo[1] == 0 else hi          # the tie with zero underflows
            else:
                want = lo if lo[1] % 2 == 0 else hi
            bad += got != want
        c.note(f"{count} midpoints, {bad} wrong")
        assert bad == 0


def _dec(x: FPN) -> decimal.Decimal:
    v = x.value()
    return decimal.Decimal(v.numerator) / decimal.Decimal(v.denominator)


def test_c3_exp_sqrt_error_bounds(criterion):
    with criterion(3, "exp/sqrt relative error < 2^-p on 1e5 inputs, p in {4,6,8}", 60) as c:
        worst = {}
        with decimal.localcontext() as ctx:
            ctx.prec = 50                              # about 166 bits
            for p in (4, 6, 8):
                xs = F.all_fpns(p, infinities=False)
                lo = math.log(FPN(1, 1 << (p - 1), -(1 << p), p).value())
                hi = math.log(FPN(1, (1 << p) - 1, (1 << p) - 1, p).value())
                exp_pool = [x for x in xs if lo <= float(x) <= hi]
                sqrt_pool = [x for x in xs if x.sign > 0 and not x.is_zero]
                rng = random.Random(p)
                bound = decimal.Decimal(2) ** -p
                for name, fn, pool, exact in (
                        ("exp", F.fpn_exp, exp_pool, lambda d: d.exp()),
                        ("sqrt", F.fpn_sqrt, sqrt_pool, lambda d: d.sqrt())):
                    ref: dict = {}
                    w = decimal.Decimal(0)
                    for x in (rng.choice(pool) for _ in range(100_000)):
                        if x not in ref:
                            e = exact(_dec(x))
                            ref[x] = abs(_dec(fn(x)) - e) / e
                        w = max(w, ref[x])
                    worst[f"{name}@{p}"] = w
                    assert w < bound, (name, p, w)
        c.note("worst rel err * 2^p: " + ", ".join(
            f"{k}={float(v) * 2 ** int(k.split('@')[1]):.3f}" for k, v in worst.items()))


MAXN_POOL = [FPN.inf(4, -1), FPN(-1, 15, 15, 4), FPN(-1, 9, 0, 4), FPN(-1, 8, 0, 4),
             FPN(-1, 15, -1, 4), FPN(-1, 8, -16, 4), FPN.zero(4), FPN(1, 8, -16, 4),
             FPN(1, 9, -16, 4), FPN(1, 12, -5, 4), FPN(1, 15, -1, 4), FPN(1, 8, 0, 4),
             FPN(1, 9, 0, 4), FPN(1, 8, 3, 4), FPN(1, 15, 15, 4), FPN.inf(4)]


def test_c4_lowering_conformance(criterion):
    with criterion(4, "gate-level ops bit-equal fpn-core (p=4 exhaustive, p=6/8 random)", 600) as c:
        xs = F.all_fpns(4)
        pairs = list(itertools.product(xs, xs))
        for name in ("le", "add", "mul", "div", "max2", "min2"):
            assert mismatches(name, 4, pairs) == [], name
        for name in ("maxn", "minn"):
            assert mismatches(name, 4, pairs) == [], name
            for n in (3, 4):
                assert mismatches(name, 4, itertools.product(MAXN_POOL, repeat=n)) == [], (name, n)
        for name in ("exp", "sqrt", "recip"):
            assert mismatches(name, 4, [(x,) for x in xs]) == [], name
        c.note(f"p=4: {len(pairs)} pairs x 8 ops, maxn/minn n<=4 over {len(MAXN_POOL)} "
               "order-representative values, lookups on all encodings")
        for p in (6, 8):
            rng = random.Random(p)
            xs = F.all_fpns(p)
            pairs = [(rng.choice(xs), rng.choice(xs)) for _ in range(100_000)]
            for name in ("le", "add", "mul", "div", "max2"):
                assert mismatches(name, p, pairs) == [], (name, p)
            quads = [tuple(rng.choice(xs) for _ in range(4)) for _ in range(20_000)]
            assert mismatches("maxn", p, quads) == [], ("maxn", p)
            for name in ("exp", "sqrt", "recip"):
                assert mismatches(name, p, [(x,) for x in xs]) == [], (name, p)
        c.note("p=6,8: 1e5 random pairs x 5 ops, 2e4 maxn quadruples, lookups exhaustive")


def test_c5_depth_bookkeeping(criterion):
    with criterion(5, "metered depth equals the closed form (54 configs) and stage formulas", 60) as c:
        checked = 0
        for conv, readout, m in CONFIGS:
            cfg = gnn.random_config(conv, m=m, d=2, p=4, readout=readout)
            want = C.symbolic_depth(cfg)
            for n in (4, 8, 16):
                got = depth(C.compile_gnn(cfg, n, METERED))
                assert got == want, (conv, readout, m, n, str(got), str(want))
                checked += 1
            for stage, formula in C.stage_formulas(cfg).items():
                assert depth(C.stage_circuit(cfg, 4, stage)) == formula, (conv, stage)
        assert C.conv_depth("GCN") == 3 * C.D_PLUS + 3 * C.D_STD + C.D_SQRT
        assert C.conv_depth("GIN") == 3 * C.D_STD
        assert C.conv_depth("GAT") == C.D_EXP + 9 * C.D_STD + 4 * C.D_PLUS + 4
        assert C.softmax_depth() == C.D_EXP + 3 * C.D_STD + 2 * C.D_PLUS + 1
        assert C.head_depth() == 4 * C.D_STD + 2 * C.D_PLUS + 3
        c.note(f"{checked} totals exact; per-stage formulas exact")


def test_c6_constant_depth_poly_size(criterion):
    ns = [4, 8, 16, 32]
    with criterion(6, "metered depth constant in n; gate size slope <= 4 with R^2 >= 0.99", 300) as c:
        for conv, readout, m in CONFIGS:
            cfg = gnn.random_config(conv, m=m, d=2, p=4, readout=readout)
            rep = C.scaling_report(cfg, ns, METERED)
            assert rep.depth_constant, rep.to_json()
        fits = []
        for conv in gnn.CONV_KINDS:
            cfg = gnn.random_config(conv, m=1, d=1, p=4)
            rep = C.scaling_report(cfg, ns, GATE)
            fits.append(f"{conv} slope {rep.slope:.2f} R2 {rep.r2:.4f} depth {rep.depths[0]}")
            assert rep.depth_constant and rep.slope <= 4.0 and rep.r2 >= 0.99, rep.to_json()
        c.note("18 metered families constant; gate: " + ", ".join(fits))


def test_c7_end_to_end_equivalence(criterion):
    with criterion(7, "gate circuits equal the reference (exhaustive tiny GIN, random p=6)", 1800) as c:
        cfg = gnn.random_config("GIN", m=1, d=1, p=4, seed=0)
        rep = C.verify_equivalence(cfg, 2, trials=0, exhaustive=True)
        assert rep.ok and rep.trials == C.count_instances(cfg, 2), rep.to_json()
        c.note(f"exhaustive GIN: {rep.trials} instances, {rep.passed} passed, "
               f"{rep.skipped} skipped (reference raises)")
        for conv in gnn.CONV_KINDS:
            for n, d, m, readout in ((6, 3, 1, "AVG"), (4, 2, 2, "MAX"), (5, 1, 1, "AVG")):
                cfg = gnn.random_config(conv, m=m, d=d, p=6, readout=readout, seed=7)
                rep = C.verify_equivalence(cfg, n, trials=150, seed=11)
                assert rep.ok and rep.passed >= 100, (conv, n, d, rep.to_json())
        c.note("GCN/GIN/GAT x 3 shapes (n<=6, d<=3, p=6): >=100 bit-exact each")


def test_c8_indistinguishability_witness(criterion):
    with criterion(8, "C6 and 2C3 collide for every conv and 20 seeds; oracles separate them",
                   60) as c:
        c6, pair = OR.cycle_graph(6), OR.cycle_pair(3)
        assert OR.connected(c6) and not OR.connected(pair)
        assert OR.isomorphic(c6, c6.permuted([4, 2, 6, 1, 5, 3]))
        assert not OR.isomorphic(c6, pair)
        runs = 0
        for conv in gnn.CONV_KINDS:
            for readout in gnn.READOUT_KINDS:
                for seed in range(20):
                    p = 6
                    cfg = gnn.random_config(conv, m=1 + seed % 2, d=2, p=p, seed=seed,
                                            readout=readout)
                    value = gnn.random_fpn(random.Random(seed), p)
                    a = c6.with_features(gnn.uniform_features(6, 2, value))
                    b = pair.with_features(gnn.uniform_features(6, 2, value))
                    if cfg.self_loops:
                        a, b = a.with_self_loops(), b.with_self_loops()
                    assert F.encode(gnn.forward(a, cfg)) == F.encode(gnn.forward(b, cfg))
                    suite = [OR.DecisionInstance.make("CONN", c6),
                             OR.DecisionInstance.make("CONN", pair),
                             OR.DecisionInstance.make("ISO", c6, other=c6.permuted(
                                 [2, 4, 6, 1, 3, 5])),
                             OR.DecisionInstance.make("ISO", c6, other=pair)]
                    rep = OR.probe_gnn(cfg, suite, FPN.zero(p))
                    assert (0, 1) in rep.collisions and (2, 3) in rep.collisions
                    runs += 1
        c.note(f"{runs} configs, all collide on CONN and ISO")


def test_c9_oracle_cross_validation(criterion):
    with criterion(9, "pruned iso = brute force (all pairs n<=5); BFS = union-find on 1e4 graphs",
                   300) as c:
        pairs = 0
        for n in range(1, 6):
            slots = list(itertools.combinations(range(1, n + 1), 2))
            graphs = [GI(n, [e for k, e in enumerate(slots) if mask >> k & 1])
                      for mask in range(1 << len(slots))]
            for g1, g2 in itertools.product(graphs, graphs):
                assert OR.isomorphic(g1, g2) == OR.isomorphic(g1, g2, prune=False), (g1, g2)
                pairs += 1
        rng = random.Random(9)
        for _ in range(10_000):
            n = rng.randint(1, 64)
            prob = rng.choice([0.5, 1.0, 2.0]) / n
            g = GI(n, [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)
                       if rng.random() < prob])
            for _ in range(3):
                s, t = rng.randint(1, n), rng.randint(1, n)
                assert OR.st_connected(g, s, t) == OR.st_connected_uf(g, s, t)
        c.note(f"{pairs} graph pairs; 10000 random graphs x 3 (s, t) queries")


def GI(n, edges):
    return gnn.GraphInstance.make(n, edges)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
