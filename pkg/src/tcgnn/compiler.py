"""Compile a GNN configuration into one circuit per vertex count n.

Circuit inputs are the adjacency bits (upper triangle, plus the diagonal
when the config allows self-loops) followed by the feature encodings in
row-major order; the single output is the network's FPN encoding.

The metered backend follows the depth bookkeeping of the TC0 construction
stage by stage, so its measured depth can be compared with the closed-form
formula.  The gate backend mirrors :func:`tcgnn.gnn.forward` operation by
operation and is checked against it by simulation.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fpn as F
from . import gnn
from .circuit import (Circuit, CircuitFamily, FpnWire, ScalingReport,
                      check_family_scaling, depth, simulate, size)
from .fpn import FPN
from .gnn import GnnConfig, GnnError, GraphInstance
from .lowering import GATE, METERED, Backend, Lowerer
from .symbolic import Depth

DEFAULT_D_RATIO = 4


# ---------------------------------------------------------------------------
# closed-form depths
# ---------------------------------------------------------------------------

D_STD = Depth.symbol("d_std")
D_PLUS = Depth.symbol("d_plus")
D_EXP = Depth.symbol("d_exp")
D_SQRT = Depth.symbol("d_sqrt")


def conv_depth(kind: str) -> Depth:
    if kind == "GCN":
        return 3 * D_PLUS + 3 * D_STD + D_SQRT
    if kind == "GIN":
        return 3 * D_STD
    if kind == "GAT":
        return D_EXP + 9 * D_STD + 4 * D_PLUS + 4
    raise GnnError(f"unknown conv kind {kind!r}")


def softmax_depth() -> Depth:
    return D_EXP + 3 * D_STD + 2 * D_PLUS + 1


def layer_depth(kind: str) -> Depth:
    return conv_depth(kind) + 3 * D_STD + 2 * D_PLUS + 3


def readout_depth(kind: str) -> Depth:
    if kind == "AVG":
        return 3 * D_STD + 2 * D_PLUS
    if kind == "MAX":
        return D_STD + 3
    raise GnnError(f"unknown readout kind {kind!r}")


def head_depth() -> Depth:
    return 4 * D_STD + 2 * D_PLUS + 3


def symbolic_depth(cfg: GnnConfig) -> Depth:
    """m d_conv + (3m+4) d_std + (2m+2) d_plus + d_read + 3m + 3."""
    m = cfg.m
    return (m * conv_depth(cfg.conv) + (3 * m + 4) * D_STD + (2 * m + 2) * D_PLUS
            + readout_depth(cfg.readout) + (3 * m + 3))


def stage_formulas(cfg: GnnConfig) -> dict[str, Depth]:
    out = {"conv": conv_depth(cfg.conv), "layer": layer_depth(cfg.conv),
           "readout": readout_depth(cfg.readout), "head": head_depth()}
    if cfg.conv == "GAT":
        out["softmax"] = softmax_depth()
    return out


# ---------------------------------------------------------------------------
# input layout
# ---------------------------------------------------------------------------

def adjacency_pairs(cfg: GnnConfig, n: int) -> list[tuple[int, int]]:
    """0-based (i, j), i <= j, of adjacency entries that are circuit inputs."""
    return [(i, j) for i in range(n) for j in range(i, n) if i < j or cfg.self_loops]


def instance_bits(cfg: GnnConfig, g: GraphInstance) -> list[int]:
    """Circuit input vector for graph ``g``."""
    if g.d != cfg.d:
        raise GnnError(f"graph has d = {g.d}, config expects {cfg.d}")
    if not cfg.self_loops and any(u == v for u, v in g.edges):
        raise GnnError("graph has self-loops but the config does not allow them")
    A = g.adjacency()
    bits = [A[i][j] for i, j in adjacency_pairs(cfg, g.n)]
    for row in g.features:
        for x in row:
            bits += F.encode(x)
    return bits


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

class _Net:
    """Builds the network into one Lowerer; metered and gate variants differ only where
    the bookkeeping charges a different (value-equal) evaluation order."""

    def __init__(self, cfg: GnnConfig, n: int, backend: Backend, sequence: bool = True):
        self.cfg = cfg
        self.n = n
        self.L = Lowerer(cfg.prec, backend)
        self.metered = backend.metered
        self.sequence = sequence
        self.p = cfg.prec

    def const(self, x: FPN) -> FpnWire:
        return self.L.const(x)

    def consts(self, M):
        return [[self.const(x) for x in row] for row in M]

    def inputs(self):
        L, n = self.L, self.n
        zero = L.zero()
        A = [[zero] * n for _ in range(n)]
        for i, j in adjacency_pairs(self.cfg, n):
            w = L.bit_as_fpn(L.b.input())
            A[i][j] = A[j][i] = w
        X = [[L.input() for _ in range(self.cfg.d)] for _ in range(n)]
        return A, X

    def _first(self, tag: str, ws: Sequence[FpnWire], seq: Sequence[FpnWire]) -> FpnWire:
        """A metered op that also waits for ``seq`` (serial layer composition)."""
        return self.L._meter(tag, list(ws) + list(seq))

    # convolutions -----------------------------------------------------------------
    def conv_gin(self, A, seq=()):
        L, n, p = self.L, self.n, self.p
        with L.b.label("conv_gin"):
            one = L.one()
            eps = self.const(self.cfg.eps)
            c = self._first("add", [one, eps], seq) if (self.metered and seq) else L.add(one, eps)
            I = self.consts(gnn._identity(n, p))
            return [[L.add(A[i][j], L.mul(c, I[i][j])) for j in range(n)] for i in range(n)]

    def conv_gcn(self, A, seq=()):
        L, n, p = self.L, self.n, self.p
        with L.b.label("conv_gcn"):
            one = L.one()
            t = []
            for i in range(n):
                if self.metered and seq:
                    deg = self._first("sum", A[i], seq)
                else:
                    deg = L.iterated_sum(A[i])
                t.append(L.rsqrt(L.add(deg, one)))
            I = self.consts(gnn._identity(n, p))
            zero = L.zero()
            T = [[t[i] if i == j else zero for j in range(n)] for i in range(n)]
            AI = [[L.add(A[i][j], I[i][j]) for j in range(n)] for i in range(n)]
            return L.matmul(L.matmul(T, AI), T)

    def conv_gat(self, A, X, W, a):
        L, n, d = self.L, self.n, self.cfg.d
        with L.b.label("conv_gat"):
            Wc, ac = self.consts(W), [self.const(x) for x in a]
            s = self.const(self.cfg.slope)
            H = [[L.iterated_sum([L.mul(Wc[k][l], X[i][l]) for l in range(d)])
                  for k in range(d)] for i in range(n)]
            Lk = [[L.leaky_relu(h, s) for h in row] for row in H]
            u = [L.iterated_sum([L.mul(ac[k], Lk[i][k]) for k in range(d)]) for i in range(n)]
            v = [L.iterated_sum([L.mul(ac[d + k], Lk[j][k]) for k in range(d)]) for j in range(n)]
            if self.metered:
                # one charged op applies the adjacency mask to u_i + v_j
                E = [[L._meter("add", [u[i], v[j], A[i][j]]) for j in range(n)] for i in range(n)]
                return self.softmax(E)
            B = L.b
            Ex = []
            for i in range(n):
                row = []
                for j in range(n):
                    g = L._gated_bit(A[i][j])
                    if g is None:          # constant non-edge: exp(-inf) = 0
                        row.append(L.zero())
                        continue
                    e = L.exp(L.add(u[i], v[j]))
                    row.append(FpnWire(tuple(B.and_([g, x]) for x in e.bits), self.p))
                Ex.append(row)
            with B.label("softmax"):
                S = [L.iterated_sum(row) for row in Ex]
                return [[L.div(Ex[i][j], S[i]) for j in range(n)] for i in range(n)]

    def softmax(self, E):
        """Metered softmax: exp, row sums as a product with 1, a buffer layer,
        reciprocal, then diag(1/s) times exp(E)."""
        L, n = self.L, len(E)
        with L.b.label("softmax"):
            ex = [[L.exp(x) for x in row] for row in E]
            ones = [[L.one()] for _ in range(len(E[0]))]
            s = [r[0] for r in L.matmul(ex, ones)]
            buf = [FpnWire(tuple(L.b.buf(v) for v in w.bits), self.p) for w in s]
            r = [L.recip(w) for w in buf]
            zero = L.zero()
            D = [[r[i] if i == j else zero for j in range(n)] for i in range(n)]
            return L.matmul(D, ex)

    def conv(self, A, X, layer: int, seq=()):
        kind = self.cfg.conv
        if kind == "GIN":
            return self.conv_gin(A, seq)
        if kind == "GCN":
            return self.conv_gcn(A, seq)
        W, a = self.cfg.attention()[layer]
        return self.conv_gat(A, X, W, a)

    # layers, readout, head ----------------------------------------------------------
    def layer(self, C, X, W):
        L = self.L
        with L.b.label("layer"):
            Y = L.matmul(L.matmul(C, X), self.consts(W))
            return [[L.relu(y) for y in row] for row in Y]

    def readout(self, X):
        L, cfg = self.L, self.cfg
        B = cfg.readout_nodes(self.n)
        d = len(X[0])
        with L.b.label("readout"):
            if cfg.readout == "MAX":
                return [L.maxn([X[i][k] for i in B]) for k in range(d)]
            size = F.round_p(len(B), self.p)
            if self.metered:
                one, zero = L.one(), L.zero()
                n = self.n
                beta = [[one if (i == j and i in B) else zero for j in range(n)] for i in range(n)]
                XT = [[X[i][k] for i in range(n)] for k in range(d)]
                P = L.matmul(XT, beta)
                q = L.matmul(P, [[one] for _ in range(n)])
                inv = self.const(F.fpn_div(FPN.one(self.p), size))
                return [L.mul(q[k][0], inv) for k in range(d)]
            return [L.div_const(L.iterated_sum([X[i][k] for i in B]), size) for k in range(d)]

    def head(self, x):
        L, cfg = self.L, self.cfg
        with L.b.label("head"):
            W = self.consts(cfg.head_W)
            z = L.matmul(W, [[v] for v in x])
            b = [self.const(v) for v in cfg.head_b]
            r = [L.relu(L.add(z[k][0], b[k])) for k in range(len(b))]
            w = [[self.const(v) for v in cfg.head_w]]
            return L.matmul(w, [[v] for v in r])[0][0]

    def build(self) -> FpnWire:
        A, X = self.inputs()
        cfg = self.cfg
        C = None
        if cfg.conv != "GAT" and not (self.metered and self.sequence):
            C = self.conv(A, X, 0)
        for i, W in enumerate(cfg.layers):
            if cfg.conv == "GAT":
                C = self.conv(A, X, i)
            elif self.metered and self.sequence:
                seq = [w for row in X for w in row] if i > 0 else ()
                C = self.conv(A, X, i, seq)
            X = self.layer(C, X, W)
        return self.head(self.readout(X))


def compile_gnn(cfg: GnnConfig, n: int, backend: Backend = GATE, sequence: bool = True,
                d_ratio: int = DEFAULT_D_RATIO) -> Circuit:
    """One circuit computing forward(g, cfg) for every n-vertex graph g.

    In metered mode ``sequence`` makes each layer's convolution wait for the
    previous layer, which is how the layer-by-layer depth sum is charged.
    """
    if n < 1:
        raise GnnError("n must be >= 1")
    if cfg.d > d_ratio * n:
        raise GnnError(f"d = {cfg.d} exceeds {d_ratio} * n = {d_ratio * n}")
    net = _Net(cfg, n, backend, sequence)
    out = net.build()
    b = net.L.b
    b.purpose = f"{cfg.conv} m={cfg.m} d={cfg.d} n={n} readout={cfg.readout} {backend.mode}"
    return b.build(out.bits)


def stage_circuit(cfg: GnnConfig, n: int, stage: str, backend: Backend = METERED) -> Circuit:
    """A stage on its own, with fresh inputs (for per-stage depth checks)."""
    net = _Net(cfg, n, backend, sequence=False)
    L = net.L
    d = cfg.d
    if stage in ("conv", "layer"):
        A, X = net.inputs()
        C = net.conv(A, X, 0)
        if stage == "conv":
            outs = [w for row in C for w in row]
        else:
            outs = [w for row in net.layer(C, X, cfg.layers[0]) for w in row]
    elif stage == "softmax":
        E = [[L.input() for _ in range(n)] for _ in range(n)]
        outs = [w for row in net.softmax(E) for w in row]
    elif stage == "readout":
        X = [[L.input() for _ in range(d)] for _ in range(n)]
        outs = net.readout(X)
    elif stage == "head":
        outs = [net.head([L.input() for _ in range(d)])]
    else:
        raise GnnError(f"unknown stage {stage!r}")
    return L.b.build([v for w in outs for v in w.bits])


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def primitive_gate_depths(p: int, n_sum: int = 4) -> dict[str, int]:
    """Measured gate-level depth of each primitive at precision p."""
    out = {}
    for name in ("add", "mul", "div", "le", "sum", "prod", "exp", "sqrt"):
        L = Lowerer(p, GATE)
        if name in ("sum", "prod"):
            ws = [L.input() for _ in range(n_sum)]
            w = L.iterated_sum(ws) if name == "sum" else L.iterated_prod(ws)
            bits = w.bits
        elif name in ("exp", "sqrt"):
            if p > 8:
                continue
            bits = getattr(L, name)(L.input()).bits
        else:
            a, b = L.input(), L.input()
            if name == "le":
                bits = (L.compare(a, b),)
            elif name == "div" and p > 8:
                continue
            else:
                bits = getattr(L, name)(a, b).bits
        out[name] = int(depth(L.b.build(bits)))
    sym = {"d_std": max(out.get(k, 0) for k in ("add", "mul", "div", "le")),
           "d_plus": out["sum"], "d_times": out["prod"]}
    if "exp" in out:
        sym["d_exp"] = out["exp"]
        sym["d_sqrt"] = out["sqrt"]
    return {**out, **sym}


@dataclass
class DepthReport:
    conv: str
    readout: str
    n: int
    d: int
    p: int
    m: int
    symbolic: str
    metered: str
    dataflow: str
    stages: dict = field(default_factory=dict)
    measured_stages: dict = field(default_factory=dict)
    gate_depth: int | None = None
    gate_size: int | None = None
    gate_primitives: dict | None = None
    metered_size: int | None = None

    @property
    def ok(self) -> bool:
        return self.symbolic == self.metered and self.stages == self.measured_stages

    def to_json(self) -> dict:
        return {
            "conv": self.conv, "readout": self.readout, "n": self.n, "d": self.d,
            "p": self.p, "m": self.m,
            "symbolic_total": self.symbolic, "metered_total": self.metered,
            "metered_dataflow_total": self.dataflow,
            "stages": self.stages, "measured_stages": self.measured_stages,
            "metered_size": self.metered_size,
            "gate_depth": self.gate_depth, "gate_size": self.gate_size,
            "gate_primitive_depths": self.gate_primitives,
            "provenance": provenance(self.conv),
            "ok": self.ok,
        }


def provenance(conv: str) -> dict:
    out = {
        "symbolic_total": "closed-form multi-layer formula",
        "metered_total": "one opaque node per FPN primitive, layers composed serially",
        "metered_dataflow_total": "same circuit without the serial layer composition",
        "gate_depth": "threshold gates, lookups for exp/sqrt/division",
    }
    if conv == "GCN":
        out["rsqrt"] = ("metered: one d_sqrt node; gate: sqrt lookup then reciprocal lookup "
                        "(d_sqrt + d_std)")
    return out


def depth_report(cfg: GnnConfig, n: int, gate: bool = False,
                 gate_circuit: Circuit | None = None) -> DepthReport:
    c = compile_gnn(cfg, n, METERED)
    flow = compile_gnn(cfg, n, METERED, sequence=False)
    rep = DepthReport(cfg.conv, cfg.readout, n, cfg.d, cfg.prec, cfg.m,
                      str(symbolic_depth(cfg)), str(depth(c)), str(depth(flow)),
                      metered_size=size(c))
    for name, formula in stage_formulas(cfg).items():
        rep.stages[name] = str(formula)
        rep.measured_stages[name] = str(depth(stage_circuit(cfg, n, name)))
    if gate or gate_circuit is not None:
        g = gate_circuit if gate_circuit is not None else compile_gnn(cfg, n, GATE)
        rep.gate_depth = int(depth(g))
        rep.gate_size = size(g)
        rep.gate_primitives = primitive_gate_depths(cfg.prec)
    return rep


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def random_instance(cfg: GnnConfig, n: int, rng: random.Random, edge_prob: float = 0.5,
                    zero_prob: float = 0.15) -> GraphInstance:
    edges = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < edge_prob]
    if cfg.self_loops:
        edges += [(i, i) for i in range(1, n + 1) if rng.random() < 0.8]
    feats = [[gnn.random_fpn(rng, cfg.prec, -1, 1, zero_prob) for _ in range(cfg.d)]
             for _ in range(n)]
    return GraphInstance.make(n, edges, feats)


def _reference(cfg, g):
    try:
        return gnn.forward(g, cfg)
    except (F.FPNError, GnnError):
        return None


def _decode(bits, p):
    try:
        return F.decode([int(v) for v in bits], p)
    except ValueError:
        return None


@dataclass
class VerificationReport:
    conv: str
    n: int
    trials: int = 0
    passed: int = 0
    skipped: int = 0
    exhaustive: bool = False
    mismatches: list = field(default_factory=list)

    @property
    def failed(self) -> int:
        return self.trials - self.passed - self.skipped

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def to_json(self) -> dict:
        return {"conv": self.conv, "n": self.n, "trials": self.trials, "passed": self.passed,
                "skipped": self.skipped, "failed": self.failed, "exhaustive": self.exhaustive,
                "ok": self.ok, "mismatches": self.mismatches}


def _minimize(cfg, c, g):
    """Greedily drop edges and zero out features while the mismatch persists."""
    def bad(h):
        want = _reference(cfg, h)
        if want is None:
            return False
        got = simulate(c, np.array([instance_bits(cfg, h)], dtype=np.uint8))[0]
        return list(got) != F.encode(want)

    changed = True
    while changed:
        changed = False
        for e in sorted(g.edges):
            h = GraphInstance(g.n, g.edges - {e}, g.features)
            if bad(h):
                g, changed = h, True
        for i in range(g.n):
            for k in range(g.d):
                if g.features[i][k].is_zero:
                    continue
                feats = [list(r) for r in g.features]
                feats[i][k] = FPN.zero(cfg.prec)
                h = g.with_features(feats)
                if bad(h):
                    g, changed = h, True
    return g


def verify_instances(cfg: GnnConfig, c: Circuit, graphs: Sequence[GraphInstance],
                     report: VerificationReport, minimize: bool = True, max_reported: int = 5):
    if not graphs:
        return report
    want = [_reference(cfg, g) for g in graphs]
    X = np.array([instance_bits(cfg, g) for g in graphs], dtype=np.uint8)
    Y = simulate(c, X)
    for g, w, row in zip(graphs, want, Y):
        report.trials += 1
        if w is None:
            report.skipped += 1
            continue
        if list(row) == F.encode(w):
            report.passed += 1
            continue
        if len(report.mismatches) < max_reported:
            got = _decode(row, cfg.prec)
            entry = {"graph": g.to_json(), "expected": str(w),
                     "got": str(got) if got is not None else "".join(map(str, row))}
            if minimize:
                entry["minimized"] = _minimize(cfg, c, g).to_json()
            report.mismatches.append(entry)
    return report


def verify_equivalence(cfg: GnnConfig, n: int, trials: int, seed: int = 0,
                       circuit: Circuit | None = None, exhaustive: bool = False,
                       batch: int = 4096) -> VerificationReport:
    """Compare the gate-level circuit with the reference on random (or all) instances.

    Instances on which the reference raises (an empty attention row, an
    indeterminate form) are counted as skipped.
    """
    c = circuit if circuit is not None else compile_gnn(cfg, n, GATE)
    rep = VerificationReport(cfg.conv, n, exhaustive=exhaustive)
    if exhaustive:
        pending = []
        for g in all_instances(cfg, n):
            pending.append(g)
            if len(pending) >= batch:
                verify_instances(cfg, c, pending, rep)
                pending = []
        verify_instances(cfg, c, pending, rep)
        return rep
    rng = random.Random(seed)
    graphs = [random_instance(cfg, n, rng) for _ in range(trials)]
    for i in range(0, len(graphs), batch):
        verify_instances(cfg, c, graphs[i:i + batch], rep)
    return rep


def count_instances(cfg: GnnConfig, n: int) -> int:
    vals = len(F.all_fpns(cfg.prec))
    return 2 ** len(adjacency_pairs(cfg, n)) * vals ** (n * cfg.d)


def all_instances(cfg: GnnConfig, n: int, limit: int = 5_000_000):
    """Every graph on n vertices with every valid feature encoding."""
    total = count_instances(cfg, n)
    if total > limit:
        raise GnnError(f"{total} instances are too many for exhaustive verification")
    pairs = adjacency_pairs(cfg, n)
    vals = F.all_fpns(cfg.prec)
    for mask in range(1 << len(pairs)):
        edges = frozenset((i + 1, j + 1) for t, (i, j) in enumerate(pairs) if (mask >> t) & 1)
        for combo in itertools.product(vals, repeat=n * cfg.d):
            feats = tuple(tuple(combo[i * cfg.d:(i + 1) * cfg.d]) for i in range(n))
            yield GraphInstance(n, edges, feats)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

class ScalingError(AssertionError):
    pass


def gnn_family(cfg: GnnConfig, backend: Backend) -> CircuitFamily:
    return CircuitFamily(lambda n: compile_gnn(cfg, n, backend),
                         f"{cfg.conv}/{cfg.readout}/m={cfg.m}/{backend.mode}")


def scaling_report(cfg: GnnConfig, ns: Sequence[int], backend: Backend = METERED) -> ScalingReport:
    """Depth and size across n; metered depth must not depend on n."""
    rep = check_family_scaling(gnn_family(cfg, backend), ns)
    if backend.metered and not rep.depth_constant:
        raise ScalingError(f"metered depth varies with n: {dict(zip(rep.ns, rep.depths))}")
    return rep
