"""Reference forward evaluation of GCN / GIN / GAT networks in exact FPN arithmetic.

Every scalar step is an :mod:`tcgnn.fpn` operation.  A dot product rounds
each product and then takes one iterated sum, so its value does not depend
on summation order.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from . import fpn as F
from .fpn import FPN

Matrix = list  # list of rows of FPN


class GnnError(ValueError):
    pass


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphInstance:
    """An undirected graph on vertices 1..n with an n x d feature matrix.

    ``edges`` holds pairs (u, v) with u <= v; (v, v) is a self-loop.
    """

    n: int
    edges: frozenset
    features: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise GnnError("a graph needs at least one vertex")
        for u, v in self.edges:
            if not (1 <= u <= self.n and 1 <= v <= self.n) or u > v:
                raise GnnError(f"bad edge ({u}, {v}) for n = {self.n}")
        if self.features:
            if len(self.features) != self.n:
                raise GnnError(f"expected {self.n} feature rows, got {len(self.features)}")
            d = len(self.features[0])
            if any(len(r) != d for r in self.features):
                raise GnnError("ragged feature matrix")

    @classmethod
    def make(cls, n: int, edges, features=()) -> GraphInstance:
        seen = set()
        for e in edges:
            if len(e) != 2:
                raise GnnError(f"edge {e!r} is not a pair")
            u, v = int(e[0]), int(e[1])
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GnnError(f"duplicate edge ({u}, {v})")
            seen.add(key)
        return cls(n, frozenset(seen), tuple(tuple(r) for r in features))

    @property
    def d(self) -> int:
        return len(self.features[0]) if self.features else 0

    def adjacency(self) -> list[list[int]]:
        A = [[0] * self.n for _ in range(self.n)]
        for u, v in self.edges:
            A[u - 1][v - 1] = A[v - 1][u - 1] = 1
        return A

    def with_features(self, features) -> GraphInstance:
        return GraphInstance(self.n, self.edges, tuple(tuple(r) for r in features))

    def with_self_loops(self) -> GraphInstance:
        return GraphInstance(self.n, self.edges | {(v, v) for v in range(1, self.n + 1)},
                             self.features)

    def permuted(self, perm: Sequence[int]) -> GraphInstance:
        """Relabel vertex v as perm[v-1] (1-based) and move feature rows along."""
        if sorted(perm) != list(range(1, self.n + 1)):
            raise GnnError("not a permutation of 1..n")
        edges = frozenset((min(perm[u - 1], perm[v - 1]), max(perm[u - 1], perm[v - 1]))
                          for u, v in self.edges)
        if not self.features:
            return GraphInstance(self.n, edges)
        feats = [None] * self.n
        for v in range(self.n):
            feats[perm[v] - 1] = self.features[v]
        return GraphInstance(self.n, edges, tuple(feats))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "edges": sorted([u, v] for u, v in self.edges),
            "features": [[str(x) for x in row] for row in self.features],
        }

    @classmethod
    def from_json(cls, obj: dict) -> GraphInstance:
        try:
            n = int(obj["n"])
            edges = obj.get("edges", [])
            feats = [[F.parse(s) for s in row] for row in obj.get("features", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise GnnError(f"malformed graph: {exc}") from exc
        return cls.make(n, edges, feats)


def uniform_features(n: int, d: int, value: FPN) -> tuple:
    return tuple(tuple(value for _ in range(d)) for _ in range(n))


def cycle(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + i + 1, offset + (i + 1) % n + 1) for i in range(n)]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

CONV_KINDS = ("GCN", "GIN", "GAT")
READOUT_KINDS = ("AVG", "MAX")


@dataclass(frozen=True)
class GnnConfig:
    prec: int
    d: int
    conv: str
    layers: tuple                      # m weight matrices, each d x d
    head_W: tuple
    head_b: tuple
    head_w: tuple
    readout: str = "AVG"
    nodes: tuple | None = None         # readout subset B, 1-based; None = all vertices
    eps: FPN | None = None             # GIN
    att_W: tuple | None = None         # GAT, shared across layers
    att_a: tuple | None = None         # GAT, length 2d
    slope: FPN | None = None           # GAT LeakyReLU slope
    att_layers: tuple | None = None    # GAT per-layer (W, a) overrides
    self_loops: bool = False           # adjacency diagonal is an input of compiled circuits
    seed: int | None = None

    def __post_init__(self):
        p, d = self.prec, self.d
        if self.conv not in CONV_KINDS:
            raise GnnError(f"conv kind must be one of {CONV_KINDS}, got {self.conv!r}")
        if self.readout not in READOUT_KINDS:
            raise GnnError(f"readout must be one of {READOUT_KINDS}, got {self.readout!r}")
        if not self.layers:
            raise GnnError("a network needs at least one layer")
        for W in self.layers:
            _check_matrix(W, d, d, p, "layer weight")
        _check_matrix(self.head_W, d, d, p, "head W")
        _check_vector(self.head_b, d, p, "head b")
        _check_vector(self.head_w, d, p, "head w")
        if self.nodes is not None and not self.nodes:
            raise GnnError("readout subset B must be non-empty")
        if self.conv == "GIN":
            if self.eps is None:
                raise GnnError("GIN needs eps")
            _check_vector([self.eps], 1, p, "eps")
        if self.conv == "GAT":
            if self.slope is None:
                raise GnnError("GAT needs a LeakyReLU slope")
            _check_vector([self.slope], 1, p, "slope")
            for W, a in self.attention():
                _check_matrix(W, d, d, p, "attention W")
                _check_vector(a, 2 * d, p, "attention a")

    @property
    def m(self) -> int:
        return len(self.layers)

    def attention(self) -> list[tuple]:
        """(W, a) used by each layer."""
        if self.att_layers is not None:
            if len(self.att_layers) != self.m:
                raise GnnError("att_layers needs one (W, a) per layer")
            return [tuple(x) for x in self.att_layers]
        if self.att_W is None or self.att_a is None:
            raise GnnError("GAT needs attention W and a")
        return [(self.att_W, self.att_a)] * self.m

    def readout_nodes(self, n: int) -> list[int]:
        """B as 0-based indices."""
        if self.nodes is None:
            return list(range(n))
        if any(not 1 <= v <= n for v in self.nodes):
            raise GnnError(f"readout subset {list(self.nodes)} not within 1..{n}")
        return sorted(set(v - 1 for v in self.nodes))

    # JSON ----------------------------------------------------------------------
    def to_json(self) -> dict:
        lit = lambda v: [str(x) for x in v]          # noqa: E731
        mat = lambda M: [lit(r) for r in M]          # noqa: E731
        conv: dict = {"kind": self.conv}
        if self.conv == "GIN":
            conv["eps"] = str(self.eps)
        if self.conv == "GAT":
            conv["slope"] = str(self.slope)
            if self.att_layers is not None:
                conv["layers"] = [{"W": mat(W), "a": lit(a)} for W, a in self.att_layers]
            else:
                conv["W"] = mat(self.att_W)
                conv["a"] = lit(self.att_a)
        out = {
            "prec": self.prec, "d": self.d, "conv": conv,
            "layers": [mat(W) for W in self.layers],
            "readout": {"kind": self.readout,
                        "nodes": "all" if self.nodes is None else list(self.nodes)},
            "head": {"W": mat(self.head_W), "b": lit(self.head_b), "w": lit(self.head_w)},
            "self_loops": self.self_loops,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, obj: dict) -> GnnConfig:
        """Parse a config; with ``seed`` any missing weights are drawn at random."""
        try:
            p = int(obj["prec"])
            conv = obj["conv"]
            kind = conv["kind"] if isinstance(conv, dict) else str(conv)
            conv = conv if isinstance(conv, dict) else {"kind": kind}
            seed = obj.get("seed")
            d = int(obj.get("d") or len(obj["layers"][0]))
            m = int(obj.get("m") or len(obj.get("layers", [])) or 1)
            ro = obj.get("readout", {"kind": "AVG"})
            ro = ro if isinstance(ro, dict) else {"kind": str(ro)}
            nodes = ro.get("nodes", "all")
            base = random_config(kind, m=m, d=d, p=p, seed=seed or 0,
                                 readout=ro.get("kind", "AVG"))
            P = lambda s: F.parse(s)                         # noqa: E731
            vec = lambda v: tuple(P(s) for s in v)            # noqa: E731
            mat = lambda M: tuple(vec(r) for r in M)          # noqa: E731
            layers = tuple(mat(W) for W in obj["layers"]) if "layers" in obj else base.layers
            head = obj.get("head", {})
            fields = dict(
                layers=layers,
                head_W=mat(head["W"]) if "W" in head else base.head_W,
                head_b=vec(head["b"]) if "b" in head else base.head_b,
                head_w=vec(head["w"]) if "w" in head else base.head_w,
                nodes=None if nodes == "all" else tuple(int(v) for v in nodes),
                self_loops=bool(obj.get("self_loops", kind == "GAT")),
                seed=seed,
            )
            if kind == "GIN":
                fields["eps"] = P(conv["eps"]) if "eps" in conv else base.eps
            if kind == "GAT":
                fields["slope"] = P(conv["slope"]) if "slope" in conv else base.slope
                if "layers" in conv:
                    fields["att_layers"] = tuple((mat(L["W"]), vec(L["a"])) for L in conv["layers"])
                    fields["att_W"] = fields["att_a"] = None
                else:
                    fields["att_W"] = mat(conv["W"]) if "W" in conv else base.att_W
                    fields["att_a"] = vec(conv["a"]) if "a" in conv else base.att_a
            if seed is None and not _complete(obj, kind):
                raise GnnError("config lacks weights and has no seed to generate them")
            return replace(base, **fields)
        except GnnError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise GnnError(f"malformed config: {exc!r}") from exc


def _complete(obj, kind) -> bool:
    head = obj.get("head", {})
    ok = "layers" in obj and all(k in head for k in ("W", "b", "w"))
    conv = obj.get("conv", {})
    if kind == "GIN":
        ok = ok and "eps" in conv
    if kind == "GAT":
        ok = ok and "slope" in conv and ("layers" in conv or ("W" in conv and "a" in conv))
    return ok


def _check_vector(v, n, p, what):
    if len(v) != n:
        raise GnnError(f"{what}: expected length {n}, got {len(v)}")
    for x in v:
        if not isinstance(x, FPN) or x.prec != p:
            raise GnnError(f"{what}: entries must be FPNs at precision {p}")


def _check_matrix(M, r, c, p, what):
    if len(M) != r:
        raise GnnError(f"{what}: expected {r} rows, got {len(M)}")
    for row in M:
        _check_vector(row, c, p, what)


def random_fpn(rng: random.Random, p: int, lo: int = -2, hi: int = 0, zero_prob: float = 0.0) -> FPN:
    """Random FPN with magnitude in [2**lo / 2, 2**hi), sign uniform."""
    if rng.random() < zero_prob:
        return FPN.zero(p)
    e = rng.randint(lo, hi) - p
    return FPN(rng.choice((1, -1)), rng.randrange(1 << (p - 1), 1 << p), e, p)


def random_config(conv: str, m: int = 1, d: int = 2, p: int = 6, seed: int = 0,
                  readout: str = "AVG", nodes=None, shared_attention: bool = True) -> GnnConfig:
    """Deterministic random weights of moderate magnitude (about 1/8 .. 1)."""
    rng = random.Random(f"{conv}/{m}/{d}/{p}/{seed}")
    r = lambda: random_fpn(rng, p)                         # noqa: E731
    mat = lambda a, b: tuple(tuple(r() for _ in range(b)) for _ in range(a))   # noqa: E731
    kw: dict = {}
    if conv == "GIN":
        kw["eps"] = FPN(1, 1 << (p - 1), -p - rng.randint(0, 2), p)
    if conv == "GAT":
        kw["slope"] = FPN(1, 1 << (p - 1), -p - rng.randint(0, 2), p)
        if shared_attention:
            kw["att_W"], kw["att_a"] = mat(d, d), tuple(r() for _ in range(2 * d))
        else:
            kw["att_layers"] = tuple((mat(d, d), tuple(r() for _ in range(2 * d))) for _ in range(m))
    return GnnConfig(
        prec=p, d=d, conv=conv, layers=tuple(mat(d, d) for _ in range(m)),
        head_W=mat(d, d), head_b=tuple(r() for _ in range(d)), head_w=tuple(r() for _ in range(d)),
        readout=readout, nodes=None if nodes is None else tuple(nodes),
        self_loops=conv == "GAT", seed=seed, **kw)


def zero_config(conv: str, m: int = 1, d: int = 2, p: int = 4, readout: str = "AVG") -> GnnConfig:
    """All weights zero: the network output is zero for every graph."""
    z = FPN.zero(p)
    base = random_config(conv, m, d, p, 0, readout)
    Z = tuple(tuple(z for _ in range(d)) for _ in range(d))
    kw = {}
    if conv == "GAT":
        kw = dict(att_W=Z, att_a=tuple(z for _ in range(2 * d)))
    return replace(base, layers=tuple(Z for _ in range(m)), head_W=Z,
                   head_b=tuple(z for _ in range(d)), head_w=tuple(z for _ in range(d)), **kw)


# ---------------------------------------------------------------------------
# components
# ---------------------------------------------------------------------------

def dot(xs: Sequence[FPN], ys: Sequence[FPN]) -> FPN:
    if len(xs) != len(ys):
        raise GnnError("dot product length mismatch")
    return F.iterated_sum([F.fpn_mul(x, y) for x, y in zip(xs, ys)])


def matmul(A: Matrix, B: Matrix) -> Matrix:
    if not A or not B or any(len(r) != len(B) for r in A):
        raise GnnError("matmul shape mismatch")
    cols = list(zip(*B))
    return [[dot(row, col) for col in cols] for row in A]


def transpose(A: Matrix) -> Matrix:
    return [list(c) for c in zip(*A)]


def relu(X: Matrix) -> Matrix:
    return [[F.fpn_max(FPN.zero(x.prec), x) for x in row] for row in X]


def leaky_relu_scalar(x: FPN, s: FPN) -> FPN:
    z = FPN.zero(x.prec)
    return F.fpn_add(F.fpn_max(z, x), F.fpn_mul(s, F.fpn_min(z, x)))


def leaky_relu(X: Matrix, s: FPN) -> Matrix:
    return [[leaky_relu_scalar(x, s) for x in row] for row in X]


def softmax_rows(X: Matrix) -> Matrix:
    out = []
    for i, row in enumerate(X):
        ex = [F.fpn_exp(x) for x in row]
        total = F.iterated_sum(ex)
        if total.is_zero:
            raise GnnError(f"softmax row {i + 1} has a zero denominator")
        out.append([F.fpn_div(v, total) for v in ex])
    return out


def _fpn_adjacency(A, p):
    one, zero = FPN.one(p), FPN.zero(p)
    return [[one if a else zero for a in row] for row in A]


def _identity(n, p):
    one, zero = FPN.one(p), FPN.zero(p)
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def conv_gcn(g: GraphInstance, p: int) -> Matrix:
    n = g.n
    A = _fpn_adjacency(g.adjacency(), p)
    one = FPN.one(p)
    t = []
    for i in range(n):
        deg = F.iterated_sum(A[i])
        t.append(F.fpn_div(one, F.fpn_sqrt(F.fpn_add(deg, one))))
    I = _identity(n, p)
    zero = FPN.zero(p)
    T = [[t[i] if i == j else zero for j in range(n)] for i in range(n)]
    AI = [[F.fpn_add(A[i][j], I[i][j]) for j in range(n)] for i in range(n)]
    return matmul(matmul(T, AI), T)


def conv_gin(g: GraphInstance, eps: FPN) -> Matrix:
    p = eps.prec
    A = _fpn_adjacency(g.adjacency(), p)
    I = _identity(g.n, p)
    c = F.fpn_add(FPN.one(p), eps)
    return [[F.fpn_add(A[i][j], F.fpn_mul(c, I[i][j])) for j in range(g.n)] for i in range(g.n)]


def attention_scores(g: GraphInstance, X: Matrix, W: Matrix, a: Sequence[FPN], s: FPN) -> Matrix:
    """E_ij = a1 . LeakyReLU(W X_i) + a2 . LeakyReLU(W X_j) on edges, -inf elsewhere."""
    p = s.prec
    d = len(W)
    A = g.adjacency()
    H = [[dot(W[k], X[i]) for k in range(d)] for i in range(g.n)]
    Lk = leaky_relu(H, s)
    a1, a2 = list(a[:d]), list(a[d:])
    u = [dot(a1, Lk[i]) for i in range(g.n)]
    v = [dot(a2, Lk[j]) for j in range(g.n)]
    ninf = FPN.inf(p, -1)
    return [[F.fpn_add(u[i], v[j]) if A[i][j] else ninf for j in range(g.n)] for i in range(g.n)]


def conv_gat(g: GraphInstance, X: Matrix, W: Matrix, a: Sequence[FPN], s: FPN) -> Matrix:
    A = g.adjacency()
    for i, row in enumerate(A):
        if not any(row):
            raise GnnError(f"vertex {i + 1} has no neighbours: its attention row is empty "
                           "(add self-loops)")
    return softmax_rows(attention_scores(g, X, W, a, s))


def gnn_layer(C: Matrix, X: Matrix, W: Matrix) -> Matrix:
    return relu(matmul(matmul(C, X), W))


def readout_avg(X: Matrix, B: Sequence[int]) -> list[FPN]:
    if not B:
        raise GnnError("readout subset is empty")
    p = X[0][0].prec
    size = F.round_p(len(B), p)
    return [F.fpn_div(F.iterated_sum([X[i][k] for i in B]), size) for k in range(len(X[0]))]


def readout_max(X: Matrix, B: Sequence[int]) -> list[FPN]:
    if not B:
        raise GnnError("readout subset is empty")
    out = []
    for k in range(len(X[0])):
        best = X[B[0]][k]
        for i in B[1:]:
            best = F.fpn_max(best, X[i][k])
        out.append(best)
    return out


def head(x: Sequence[FPN], W: Matrix, b: Sequence[FPN], w: Sequence[FPN]) -> FPN:
    if len(W[0]) != len(x) or len(b) != len(W) or len(w) != len(W):
        raise GnnError("head shape mismatch")
    z = [F.fpn_add(dot(W[k], x), b[k]) for k in range(len(W))]
    r = [F.fpn_max(FPN.zero(v.prec), v) for v in z]
    return dot(w, r)


def forward(g: GraphInstance, cfg: GnnConfig, trace: dict | None = None) -> FPN:
    """GNN output for graph ``g``; ``trace`` (if given) collects every stage."""
    if g.d != cfg.d:
        raise GnnError(f"graph has {g.d} feature columns, config expects d = {cfg.d}")
    if any(x.prec != cfg.prec for row in g.features for x in row):
        raise GnnError(f"features must be FPNs at precision {cfg.prec}")
    X = [list(r) for r in g.features]
    C = None
    if cfg.conv == "GCN":
        C = conv_gcn(g, cfg.prec)
    elif cfg.conv == "GIN":
        C = conv_gin(g, cfg.eps)
    att = cfg.attention() if cfg.conv == "GAT" else None
    for i, W in enumerate(cfg.layers):
        if att is not None:
            C = conv_gat(g, X, att[i][0], att[i][1], cfg.slope)
        if trace is not None:
            trace[f"conv{i + 1}"] = C
        X = gnn_layer(C, X, W)
        if trace is not None:
            trace[f"layer{i + 1}"] = X
    B = cfg.readout_nodes(g.n)
    r = readout_avg(X, B) if cfg.readout == "AVG" else readout_max(X, B)
    out = head(r, cfg.head_W, cfg.head_b, cfg.head_w)
    if trace is not None:
        trace["readout"] = r
        trace["output"] = out
    return out


def format_trace(trace: dict) -> dict:
    def conv(v):
        if isinstance(v, FPN):
            return str(v)
        return [conv(x) for x in v]
    return {k: conv(v) for k, v in trace.items()}
