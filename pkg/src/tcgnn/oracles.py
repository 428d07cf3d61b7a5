"""Ground-truth deciders for connectivity and isomorphism, instance suites and GNN probes.

The deciders are deliberately simple and exact: breadth-first search for
reachability (cross-checked by union-find) and exhaustive search over vertex
bijections for isomorphism.  Colour refinement is only ever used to cut the
search down; it never decides on its own.
"""
from __future__ import annotations

import itertools
import json
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import fpn as F
from . import gnn
from .fpn import FPN
from .gnn import GnnConfig, GnnError, GraphInstance

PROBLEMS = ("CONN", "ST_CONN", "ISO")
BRUTE_FORCE_MAX_N = 8
ISO_MAX_N = 10


class OracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

def neighbours(g: GraphInstance) -> list[set[int]]:
    """0-based adjacency sets (self-loops included)."""
    nb = [set() for _ in range(g.n)]
    for u, v in g.edges:
        nb[u - 1].add(v - 1)
        nb[v - 1].add(u - 1)
    return nb


def _check_vertex(g, v, what):
    if not isinstance(v, int) or not 1 <= v <= g.n:
        raise OracleError(f"{what} = {v!r} is not a vertex of a graph on 1..{g.n}")


def st_connected(g: GraphInstance, s: int, t: int) -> bool:
    """Is there a path from s to t?  (s = t is joined by the empty path.)"""
    _check_vertex(g, s, "s")
    _check_vertex(g, t, "t")
    nb = neighbours(g)
    seen = {s - 1}
    queue = deque([s - 1])
    while queue:
        u = queue.popleft()
        if u == t - 1:
            return True
        for w in nb[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def _union_find(g: GraphInstance) -> UnionFind:
    uf = UnionFind(g.n)
    for u, v in g.edges:
        uf.union(u - 1, v - 1)
    return uf


def st_connected_uf(g: GraphInstance, s: int, t: int) -> bool:
    _check_vertex(g, s, "s")
    _check_vertex(g, t, "t")
    uf = _union_find(g)
    return uf.find(s - 1) == uf.find(t - 1)


def components(g: GraphInstance) -> int:
    uf = _union_find(g)
    return len({uf.find(v) for v in range(g.n)})


def connected(g: GraphInstance) -> bool:
    return all(st_connected(g, 1, t) for t in range(2, g.n + 1)) if g.n > 1 else True


# ---------------------------------------------------------------------------
# isomorphism
# ---------------------------------------------------------------------------

def _adjacency_sets(g):
    return [frozenset(s) for s in neighbours(g)]


def refine_colours(graphs: Sequence[GraphInstance], rounds: int | None = None) -> list[list[int]]:
    """Joint 1-WL colour refinement; colours are comparable across the graphs."""
    nbs = [neighbours(g) for g in graphs]
    cols = [[(len(nb[v]), v in nb[v]) for v in range(g.n)] for g, nb in zip(graphs, nbs)]
    palette = {c: i for i, c in enumerate(sorted({c for cs in cols for c in cs}))}
    cols = [[palette[c] for c in cs] for cs in cols]
    limit = rounds if rounds is not None else sum(g.n for g in graphs)
    for _ in range(limit):
        sigs = [[(cs[v], tuple(sorted(cs[w] for w in nb[v]))) for v in range(len(cs))]
                for cs, nb in zip(cols, nbs)]
        palette = {s: i for i, s in enumerate(sorted({s for ss in sigs for s in ss}))}
        new = [[palette[s] for s in ss] for ss in sigs]
        stable = len(palette) == len({c for cs in cols for c in cs})
        cols = new
        if stable:
            break
    return cols


def _consistent(a1, a2, mapping, v, w):
    """Can v (graph 1) map to w (graph 2) given the partial mapping?"""
    if (v in a1[v]) != (w in a2[w]):
        return False
    for x, y in mapping.items():
        if (x in a1[v]) != (y in a2[w]):
            return False
    return True


def _search(a1, a2, order, candidates, mapping, used):
    if len(mapping) == len(order):
        return True
    v = order[len(mapping)]
    for w in candidates(v):
        if w in used or not _consistent(a1, a2, mapping, v, w):
            continue
        mapping[v] = w
        used.add(w)
        if _search(a1, a2, order, candidates, mapping, used):
            return True
        del mapping[v]
        used.discard(w)
    return False


def isomorphic(g1: GraphInstance, g2: GraphInstance, prune: bool = True) -> bool:
    """Is there an edge-preserving bijection between the vertex sets?

    Without pruning every permutation is tried (n <= 8).  With pruning,
    degree sequences and colour-refinement histograms reject early and the
    bijection search only pairs vertices of equal colour.
    """
    if g1.n != g2.n or len(g1.edges) != len(g2.edges):
        return False
    n = g1.n
    a1, a2 = _adjacency_sets(g1), _adjacency_sets(g2)
    if not prune:
        if n > BRUTE_FORCE_MAX_N:
            raise OracleError(f"unpruned isomorphism search is limited to n <= {BRUTE_FORCE_MAX_N}")
        e2 = {(min(u, v) - 1, max(u, v) - 1) for u, v in g2.edges}
        for perm in itertools.permutations(range(n)):
            if all((min(perm[u - 1], perm[v - 1]), max(perm[u - 1], perm[v - 1])) in e2
                   for u, v in g1.edges):
                return True
        return False
    if n > ISO_MAX_N:
        raise OracleError(f"isomorphism oracle is limited to n <= {ISO_MAX_N}")
    if sorted(map(len, a1)) != sorted(map(len, a2)):
        return False
    c1, c2 = refine_colours([g1, g2])
    if Counter(c1) != Counter(c2):
        return False
    by_colour: dict[int, list[int]] = {}
    for w, c in enumerate(c2):
        by_colour.setdefault(c, []).append(w)
    # rarest colours first, then keep the ordering connected where possible
    order = sorted(range(n), key=lambda v: (len(by_colour[c1[v]]), v))
    return _search(a1, a2, order, lambda v: by_colour[c1[v]], {}, set())


# ---------------------------------------------------------------------------
# decision instances
# ---------------------------------------------------------------------------

def _decide(problem, graph, s, t, other) -> bool:
    if problem == "CONN":
        return connected(graph)
    if problem == "ST_CONN":
        return st_connected(graph, s, t)
    return isomorphic(graph, other)


@dataclass(frozen=True)
class DecisionInstance:
    """A labelled instance; the label always comes from the oracle."""

    problem: str
    graph: GraphInstance
    label: bool
    s: int | None = None
    t: int | None = None
    other: GraphInstance | None = None
    name: str = ""

    @classmethod
    def make(cls, problem: str, graph: GraphInstance, s: int | None = None, t: int | None = None,
             other: GraphInstance | None = None, name: str = "") -> DecisionInstance:
        if problem not in PROBLEMS:
            raise OracleError(f"problem must be one of {PROBLEMS}, got {problem!r}")
        if problem == "ST_CONN" and (s is None or t is None):
            raise OracleError("ST_CONN needs s and t")
        if problem == "ISO" and other is None:
            raise OracleError("ISO needs a second graph")
        return cls(problem, graph, _decide(problem, graph, s, t, other), s, t, other, name)

    def to_json(self) -> dict:
        out = {"problem": self.problem, "graph": self.graph.to_json(), "label": self.label}
        if self.name:
            out["name"] = self.name
        if self.problem == "ST_CONN":
            out["s"], out["t"] = self.s, self.t
        if self.problem == "ISO":
            out["other"] = self.other.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> DecisionInstance:
        try:
            g = GraphInstance.from_json(obj["graph"])
            other = GraphInstance.from_json(obj["other"]) if "other" in obj else None
            inst = cls.make(obj["problem"], g, obj.get("s"), obj.get("t"), other, obj.get("name", ""))
        except (KeyError, TypeError) as exc:
            raise OracleError(f"malformed instance: {exc}") from exc
        if "label" in obj and bool(obj["label"]) != inst.label:
            raise OracleError(f"stored label {obj['label']} disagrees with the oracle ({inst.label})")
        return inst


def write_suite(path, suite: Iterable[DecisionInstance]) -> None:
    with open(path, "w") as fh:
        for inst in suite:
            fh.write(json.dumps(inst.to_json(), sort_keys=True) + "\n")


def read_suite(path) -> list[DecisionInstance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(DecisionInstance.from_json(json.loads(line)))
            except (json.JSONDecodeError, OracleError, GnnError) as exc:
                raise OracleError(f"{path}:{lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def cycle_graph(n: int) -> GraphInstance:
    return GraphInstance.make(n, gnn.cycle(n))


def cycle_pair(k: int) -> GraphInstance:
    """Two disjoint k-cycles (2C_k)."""
    return GraphInstance.make(2 * k, gnn.cycle(k) + gnn.cycle(k, offset=k))


def _random_connected(rng, n, extra):
    edges = set()
    order = list(range(1, n + 1))
    rng.shuffle(order)
    for i in range(1, n):
        u, v = order[i], order[rng.randrange(i)]
        edges.add((min(u, v), max(u, v)))
    for _ in range(extra):
        u, v = rng.sample(range(1, n + 1), 2)
        edges.add((min(u, v), max(u, v)))
    return edges


def _random_disconnected(rng, n, extra):
    cut = rng.randint(1, n - 1)
    a = _random_connected(rng, cut, extra // 2) if cut > 1 else set()
    b = _random_connected(rng, n - cut, extra - extra // 2) if n - cut > 1 else set()
    edges = a | {(u + cut, v + cut) for u, v in b}
    perm = list(range(1, n + 1))
    rng.shuffle(perm)
    return {(min(perm[u - 1], perm[v - 1]), max(perm[u - 1], perm[v - 1])) for u, v in edges}


def _random_graph(rng, n, prob=0.4):
    return {(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1) if rng.random() < prob}


def _shuffled(rng, g):
    perm = list(range(1, g.n + 1))
    rng.shuffle(perm)
    return g.permuted(perm)


def _rewired(rng, g):
    """Same vertex and edge count, one edge moved."""
    edges = sorted(g.edges)
    free = [(u, v) for u in range(1, g.n + 1) for v in range(u + 1, g.n + 1) if (u, v) not in g.edges]
    if not edges or not free:
        return g
    edges.remove(rng.choice(edges))
    edges.append(rng.choice(free))
    return GraphInstance.make(g.n, edges)


def _canonical(kind, n):
    out = []
    if n >= 3:
        c = cycle_graph(n)
        if kind == "CONN":
            out.append(DecisionInstance.make("CONN", c, name=f"C{n}"))
        elif kind == "ST_CONN":
            out.append(DecisionInstance.make("ST_CONN", c, 1, n // 2 + 1, name=f"C{n}"))
        else:
            perm = list(range(2, n + 1)) + [1]
            out.append(DecisionInstance.make("ISO", c, other=c.permuted(perm), name=f"C{n}~C{n}"))
    if n % 2 == 0 and n >= 6:
        k = n // 2
        pair = cycle_pair(k)
        if kind == "CONN":
            out.append(DecisionInstance.make("CONN", pair, name=f"2C{k}"))
        elif kind == "ST_CONN":
            out.append(DecisionInstance.make("ST_CONN", pair, 1, k + 1, name=f"2C{k}"))
        else:
            out.append(DecisionInstance.make("ISO", cycle_graph(n), other=pair, name=f"C{n}/2C{k}"))
    return out


def _random_instance(kind, rng, n, want):
    if kind == "CONN":
        if n == 1 and not want:
            return None
        edges = _random_connected(rng, n, rng.randint(0, n)) if want or n == 1 else \
            _random_disconnected(rng, n, rng.randint(0, n))
        return DecisionInstance.make("CONN", GraphInstance.make(n, edges))
    if kind == "ST_CONN":
        g = GraphInstance.make(n, _random_connected(rng, n, rng.randint(0, n)) if want
                               else _random_disconnected(rng, n, rng.randint(0, n)))
        s = rng.randint(1, n)
        pool = [t for t in range(1, n + 1) if st_connected(g, s, t) == want]
        if not pool:
            return None
        return DecisionInstance.make("ST_CONN", g, s, rng.choice(pool))
    g = GraphInstance.make(n, _random_graph(rng, n))
    other = _shuffled(rng, g) if want else _shuffled(rng, _rewired(rng, g))
    return DecisionInstance.make("ISO", g, other=other)


def generate_suite(kind: str, sizes: Sequence[int], seed: int = 0, per_size: int = 4,
                   max_tries: int = 1000) -> list[DecisionInstance]:
    """Deterministic, label-balanced instances for each size.

    Each size gets the cycle C_n and, at even n >= 6, the pair 2C_{n/2}
    (for ISO: C_n against a relabelled C_n and against 2C_{n/2}), topped up
    with random instances until positives and negatives are equal and at
    least ``per_size`` instances exist.
    """
    if kind not in PROBLEMS:
        raise OracleError(f"problem must be one of {PROBLEMS}, got {kind!r}")
    if kind == "ISO" and any(n > ISO_MAX_N for n in sizes):
        raise OracleError(f"ISO suites are limited to sizes <= {ISO_MAX_N}")
    if any(n < 1 for n in sizes):
        raise OracleError("sizes must be >= 1")
    rng = random.Random(f"{kind}/{seed}")
    suite = []
    for n in sizes:
        batch = _canonical(kind, n)
        pos = sum(i.label for i in batch)
        neg = len(batch) - pos
        tries = 0
        while (pos != neg or pos + neg < per_size) and tries < max_tries:
            tries += 1
            want = pos <= neg
            inst = _random_instance(kind, rng, n, want)
            if inst is None or inst.label != want:
                continue
            batch.append(inst)
            pos, neg = pos + want, neg + (not want)
        suite += batch
    return suite


# ---------------------------------------------------------------------------
# probing a GNN
# ---------------------------------------------------------------------------

def encode_instance(cfg: GnnConfig, inst: DecisionInstance) -> GraphInstance:
    """The graph (with features) that the GNN sees for a decision instance.

    CONN: uniform features.  ST_CONN: column 0 flags s, column 1 flags t.
    ISO: the disjoint union, column 0 marking the second graph.  All other
    columns are one.  Self-loops are added when the config expects them.
    """
    p, d = cfg.prec, cfg.d
    one, zero = FPN.one(p), FPN.zero(p)
    if inst.problem == "ISO":
        g1, g2 = inst.graph, inst.other
        n = g1.n + g2.n
        edges = set(g1.edges) | {(u + g1.n, v + g1.n) for u, v in g2.edges}
        g = GraphInstance(n, frozenset(edges))
        flags = [[zero if v < g1.n else one] for v in range(n)]
    else:
        g = inst.graph
        n = g.n
        if inst.problem == "ST_CONN":
            if d < 2:
                raise OracleError("ST_CONN probes need d >= 2 (flags for s and t)")
            flags = [[one if v + 1 == inst.s else zero, one if v + 1 == inst.t else zero]
                     for v in range(n)]
        else:
            flags = [[] for _ in range(n)]
    if any(len(f) > d for f in flags):
        raise OracleError(f"{inst.problem} probes need d >= {len(flags[0])}")
    feats = [f + [one] * (d - len(f)) for f in flags]
    g = g.with_features(feats)
    if cfg.self_loops:
        g = g.with_self_loops()
    return g


@dataclass
class ProbeReport:
    threshold: str
    outputs: list = field(default_factory=list)       # FPN literal or None per instance
    predictions: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    collisions: list = field(default_factory=list)    # (i, j): labels differ, outputs equal

    @property
    def total(self) -> int:
        return len(self.labels)

    @property
    def correct(self) -> int:
        return sum(1 for p, y in zip(self.predictions, self.labels) if p is not None and p == y)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 1.0

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "total": self.total, "correct": self.correct,
                "accuracy": self.accuracy, "outputs": self.outputs,
                "predictions": self.predictions, "labels": self.labels,
                "errors": self.errors, "collisions": [list(c) for c in self.collisions]}


def probe_gnn(cfg: GnnConfig, suite: Sequence[DecisionInstance], threshold: FPN) -> ProbeReport:
    """Run the network on every instance and predict ``output >= threshold``.

    Collision pairs certify that the network cannot separate two
    instances: their labels differ but the outputs are bit-identical.
    """
    rep = ProbeReport(str(threshold))
    groups: dict[tuple, list[int]] = {}
    for i, inst in enumerate(suite):
        g = encode_instance(cfg, inst)
        rep.labels.append(inst.label)
        try:
            out = gnn.forward(g, cfg)
        except (F.FPNError, GnnError) as exc:
            rep.outputs.append(None)
            rep.predictions.append(None)
            rep.errors.append({"index": i, "error": str(exc)})
            continue
        rep.outputs.append(str(out))
        rep.predictions.append(F.fpn_le(threshold, out))
        groups.setdefault(tuple(F.encode(out)), []).append(i)
    for members in groups.values():
        for i, j in itertools.combinations(members, 2):
            if suite[i].label != suite[j].label:
                rep.collisions.append((i, j))
    rep.collisions.sort()
    return rep
