"""Threshold-circuit IR: unbounded fan-in NOT/AND/OR/MAJORITY DAGs.

Gates are numbered densely in creation order and every fan-in refers to an
earlier gate, so the gate list is always a topological order.  Besides real
gates a circuit may hold METERED nodes: opaque stand-ins for a whole FPN
primitive that carry one of the symbolic depth constants (``d_std``,
``d_plus`` ...).  Metered circuits exist for depth accounting and cannot be
evaluated.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .symbolic import Depth, frontier

INPUT = "INPUT"
CONST0 = "CONST0"
CONST1 = "CONST1"
NOT = "NOT"
AND = "AND"
OR = "OR"
MAJORITY = "MAJORITY"
METERED = "METERED"

KINDS = (INPUT, CONST0, CONST1, NOT, AND, OR, MAJORITY, METERED)
_SYMMETRIC = (AND, OR, MAJORITY)


class CircuitError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class Gate:
    id: int
    kind: str
    fanin: tuple[int, ...] = ()
    meter: tuple[str, int] | None = None


@dataclass(frozen=True)
class FpnWire:
    """Gate ids carrying one FPN encoding: [sign][p magnitude bits][p+2 exponent bits].

    Both bit groups are most significant first, matching :func:`fpn.encode`.
    """

    bits: tuple[int, ...]
    prec: int

    def __post_init__(self):
        if len(self.bits) != 2 * self.prec + 3:
            raise CircuitError(f"FPN wire needs {2 * self.prec + 3} bits, got {len(self.bits)}")

    @property
    def sign(self) -> int:
        return self.bits[0]

    @property
    def mag(self) -> tuple[int, ...]:
        return self.bits[1:self.prec + 1]

    @property
    def exp(self) -> tuple[int, ...]:
        return self.bits[self.prec + 1:]

    def mag_lsb(self) -> list[int]:
        return list(reversed(self.mag))

    def exp_lsb(self) -> list[int]:
        return list(reversed(self.exp))


class Circuit:
    """An immutable, topologically ordered gate list with designated inputs and outputs."""

    def __init__(self, kinds, fanins, meters, inputs, outputs, prec=0, purpose="",
                 labels=None):
        self.kinds: list[str] = list(kinds)
        self.fanins: list[tuple[int, ...]] = list(fanins)
        self.meters: dict[int, tuple[str, int]] = dict(meters)
        self.inputs: tuple[int, ...] = tuple(inputs)
        self.outputs: tuple[int, ...] = tuple(outputs)
        self.prec = prec
        self.purpose = purpose
        self.labels: list[str] = list(labels) if labels is not None else [""] * len(self.kinds)
        self._plan = None
        self._validate()

    def _validate(self):
        n = len(self.kinds)
        for g, (kind, fin) in enumerate(zip(self.kinds, self.fanins)):
            if kind not in KINDS:
                raise CircuitError(f"gate {g}: unknown kind {kind}")
            if kind in (INPUT, CONST0, CONST1):
                if fin:
                    raise CircuitError(f"gate {g}: {kind} takes no fan-in")
            elif kind == NOT:
                if len(fin) != 1:
                    raise CircuitError(f"gate {g}: NOT needs exactly one fan-in")
            elif kind != METERED and not fin:
                raise CircuitError(f"gate {g}: {kind} needs fan-in >= 1")
            if kind == METERED and g not in self.meters:
                raise CircuitError(f"gate {g}: METERED node without meter")
            for f in fin:
                if not 0 <= f < g:
                    raise CircuitError(f"gate {g}: fan-in {f} is not an earlier gate")
        for g in self.inputs:
            if not (0 <= g < n and self.kinds[g] == INPUT):
                raise CircuitError(f"input id {g} is not an INPUT gate")
        for g in self.outputs:
            if not 0 <= g < n:
                raise CircuitError(f"output id {g} out of range")

    def __len__(self) -> int:
        return len(self.kinds)

    def gate(self, g: int) -> Gate:
        return Gate(g, self.kinds[g], self.fanins[g], self.meters.get(g))

    @property
    def gates(self) -> list[Gate]:
        return [self.gate(g) for g in range(len(self.kinds))]

    @property
    def is_metered(self) -> bool:
        return bool(self.meters)

    @property
    def edges(self) -> int:
        return sum(len(f) for f in self.fanins)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

class CircuitBuilder:
    """Single-writer circuit construction with structural hashing.

    With ``simplify`` (the gate-level default) constant fan-ins are folded
    and trivial gates collapse onto their operands.  Metered construction
    turns it off so that every charged stage stays visible in the DAG.
    """

    def __init__(self, prec: int = 0, simplify: bool = True, purpose: str = ""):
        self.prec = prec
        self.simplify = simplify
        self.purpose = purpose
        self.kinds: list[str] = []
        self.fanins: list[tuple[int, ...]] = []
        self.meters: dict[int, tuple[str, int]] = {}
        self.labels: list[str] = []
        self.levels: list[int] = []
        self.inputs: list[int] = []
        self._cons: dict[tuple, int] = {}
        self._const: dict[int, int] = {}
        self._label: list[str] = []

    # bookkeeping -------------------------------------------------------------
    @contextlib.contextmanager
    def label(self, name: str):
        self._label.append(name)
        try:
            yield
        finally:
            self._label.pop()

    def _emit(self, kind: str, fanin: tuple[int, ...] = (), meter=None) -> int:
        g = len(self.kinds)
        self.kinds.append(kind)
        self.fanins.append(fanin)
        self.labels.append(self._label[-1] if self._label else "")
        # gate depth for padding; metered nodes count as leaves here
        lv = 0 if kind == METERED else max((self.levels[f] for f in fanin), default=-1) + 1
        self.levels.append(lv)
        if meter is not None:
            self.meters[g] = meter
        return g

    def _consed(self, kind: str, fanin: tuple[int, ...], meter=None) -> int:
        key = (kind, fanin, meter)
        g = self._cons.get(key)
        if g is None:
            g = self._emit(kind, fanin, meter)
            self._cons[key] = g
        return g

    def __len__(self) -> int:
        return len(self.kinds)

    # leaves ------------------------------------------------------------------
    def input(self) -> int:
        g = self._emit(INPUT)
        self.inputs.append(g)
        return g

    def inputs_(self, k: int) -> list[int]:
        return [self.input() for _ in range(k)]

    def const(self, bit: int) -> int:
        bit = 1 if bit else 0
        g = self._const.get(bit)
        if g is None:
            g = self._emit(CONST1 if bit else CONST0)
            self._const[bit] = g
        return g

    def const_value(self, g: int) -> int | None:
        k = self.kinds[g]
        if k == CONST0:
            return 0
        if k == CONST1:
            return 1
        return None

    # gates -------------------------------------------------------------------
    def not_(self, x: int) -> int:
        if self.simplify:
            v = self.const_value(x)
            if v is not None:
                return self.const(1 - v)
            if self.kinds[x] == NOT:
                return self.fanins[x][0]
        return self._consed(NOT, (x,))

    def and_(self, xs: Iterable[int]) -> int:
        return self._andor(AND, xs)

    def or_(self, xs: Iterable[int]) -> int:
        return self._andor(OR, xs)

    def _andor(self, kind: str, xs: Iterable[int]) -> int:
        xs = list(xs)
        if not xs:
            if self.simplify:
                return self.const(1 if kind == AND else 0)
            raise CircuitError(f"{kind} needs fan-in >= 1")
        if self.simplify:
            absorbing = 0 if kind == AND else 1
            keep = set()
            for x in xs:
                v = self.const_value(x)
                if v is None:
                    keep.add(x)
                elif v == absorbing:
                    return self.const(absorbing)
            if not keep:
                return self.const(1 - absorbing)
            if len(keep) == 1:
                return keep.pop()
            for x in keep:
                if self.kinds[x] == NOT and self.fanins[x][0] in keep:
                    return self.const(absorbing)
            return self._consed(kind, tuple(sorted(keep)))
        return self._consed(kind, tuple(sorted(xs)))

    def maj(self, xs: Iterable[int]) -> int:
        """1 iff strictly more than half of the fan-in bits are 1 (duplicates count)."""
        xs = list(xs)
        if not xs:
            raise CircuitError("MAJORITY needs fan-in >= 1")
        if self.simplify:
            k = len(xs)
            ones = sum(1 for x in xs if self.const_value(x) == 1)
            free = sum(1 for x in xs if self.const_value(x) is None)
            if 2 * ones > k:
                return self.const(1)
            if 2 * (ones + free) <= k:
                return self.const(0)
            if k == 1:
                return xs[0]
        return self._consed(MAJORITY, tuple(sorted(xs)))

    def threshold(self, xs: Sequence[int], t: int) -> int:
        """1 iff at least ``t`` of ``xs`` are 1, as one MAJORITY gate padded with constants."""
        k = len(xs)
        if t <= 0:
            return self.const(1)
        if t > k:
            return self.const(0)
        # ones + a > (k + a + b) / 2  <=>  ones >= t  when  k + b - a = 2t - 1
        pad = 2 * t - 1 - k
        if pad >= 0:
            return self.maj(list(xs) + [self.const(0)] * pad)
        return self.maj(list(xs) + [self.const(1)] * (-pad))

    def buf(self, x: int) -> int:
        """Single-input OR: a depth-one pass-through (never folded)."""
        return self._consed(OR, (x,))

    def pad(self, x: int, level: int) -> int:
        """``x`` delayed by buffers until it sits at gate depth ``level`` (constants stay)."""
        if self.const_value(x) is not None:
            return x
        while self.levels[x] < level:
            x = self.buf(x)
        return x

    def metered(self, tag: str, fanin: Iterable[int], width: int) -> int:
        # not hash-consed: two metered ops over the same operands may differ
        # (le(a, b) versus le(b, a)) and each is charged separately
        return self._emit(METERED, tuple(sorted(set(fanin))), (tag, width))

    def build(self, outputs: Sequence[int]) -> Circuit:
        return Circuit(self.kinds, self.fanins, self.meters, self.inputs, outputs,
                       prec=self.prec, purpose=self.purpose, labels=self.labels)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def size(c: Circuit) -> int:
    """Number of nodes, inputs and constants included."""
    return len(c.kinds)


def gate_depths(c: Circuit) -> list:
    """Per-gate longest path from any leaf: ints for real circuits, frontiers otherwise."""
    if not c.meters:
        d = [0] * len(c.kinds)
        for g, fin in enumerate(c.fanins):
            if fin:
                d[g] = 1 + max(d[f] for f in fin)
        return d
    fr: list[list[Depth]] = []
    zero = [Depth()]
    for g, (kind, fin) in enumerate(zip(c.kinds, c.fanins)):
        if kind in (INPUT, CONST0, CONST1):
            fr.append(zero)
            continue
        step = Depth.tag(c.meters[g][0]) if kind == METERED else Depth(const=1)
        if fin:
            incoming = frontier(x for f in fin for x in fr[f])
        else:
            incoming = zero
        fr.append([x + step for x in incoming])
    return fr


def depth(c: Circuit, outputs: Sequence[int] | None = None) -> Depth:
    """Longest input-to-output path, weighting METERED nodes by their symbol.

    Raises if two incomparable symbolic paths compete for the maximum.
    """
    outs = c.outputs if outputs is None else outputs
    d = gate_depths(c)
    if not c.meters:
        return Depth(const=max((d[g] for g in outs), default=0))
    best = frontier(x for g in outs for x in d[g])
    if not best:
        return Depth()
    if len(best) > 1:
        raise CircuitError("longest path is not unique: " + ", ".join(map(str, best)))
    return best[0]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(c: Circuit, inputs: Sequence[int]) -> list[int]:
    """Reference single-vector evaluation."""
    if len(inputs) != len(c.inputs):
        raise CircuitError(f"expected {len(c.inputs)} input bits, got {len(inputs)}")
    if c.meters:
        raise CircuitError("metered circuits cannot be evaluated")
    val = [0] * len(c.kinds)
    for g, bit in zip(c.inputs, inputs):
        val[g] = 1 if bit else 0
    for g, (kind, fin) in enumerate(zip(c.kinds, c.fanins)):
        if kind == INPUT:
            continue
        if kind == CONST0:
            val[g] = 0
        elif kind == CONST1:
            val[g] = 1
        elif kind == NOT:
            val[g] = 1 - val[fin[0]]
        elif kind == AND:
            val[g] = int(all(val[f] for f in fin))
        elif kind == OR:
            val[g] = int(any(val[f] for f in fin))
        elif kind == MAJORITY:
            val[g] = int(2 * sum(val[f] for f in fin) > len(fin))
    return [val[g] for g in c.outputs]


@dataclass
class _Plan:
    steps: list = field(default_factory=list)
    const1: list = field(default_factory=list)


def _plan(c: Circuit) -> _Plan:
    if c._plan is not None:
        return c._plan
    n = len(c.kinds)
    level = [0] * n
    groups: dict[tuple, list[int]] = {}
    plan = _Plan()
    for g, (kind, fin) in enumerate(zip(c.kinds, c.fanins)):
        if kind == CONST1:
            plan.const1.append(g)
        if not fin:
            continue
        lv = 1 + max(level[f] for f in fin)
        level[g] = lv
        key = (lv, kind, len(fin) if kind == MAJORITY else 0)
        groups.setdefault(key, []).append(g)
    for key in sorted(groups):
        _, kind, k = key
        ids = np.array(groups[key], dtype=np.int64)
        if kind == NOT:
            src = np.array([c.fanins[g][0] for g in groups[key]], dtype=np.int64)
            plan.steps.append((NOT, ids, src, None))
        elif kind == MAJORITY:
            mat = np.array([c.fanins[g] for g in groups[key]], dtype=np.int64)
            plan.steps.append((MAJORITY, ids, mat, k))
        else:
            fl = [c.fanins[g] for g in groups[key]]
            flat = np.fromiter((f for fin in fl for f in fin), dtype=np.int64)
            lens = np.fromiter((len(fin) for fin in fl), dtype=np.int64, count=len(fl))
            starts = np.zeros(len(fl), dtype=np.int64)
            np.cumsum(lens[:-1], out=starts[1:])
            plan.steps.append((kind, ids, flat, (starts, lens)))
    c._plan = plan
    return plan


_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


def _majority_words(x: np.ndarray, k: int) -> np.ndarray:
    """x: (G, k, W) packed bits -> (G, W) words of [popcount > k/2]."""
    planes: list[np.ndarray] = []
    for i in range(k):
        carry = x[:, i, :]
        for j in range(len(planes)):
            pj = planes[j]
            planes[j] = pj ^ carry
            carry = pj & carry
        planes.append(carry)
    # planes beyond bit_length(k) are always zero
    planes = planes[:k.bit_length()]
    t = k // 2 + 1
    gt = np.zeros_like(planes[0])
    eq = np.full_like(planes[0], _ALL)
    for j in range(len(planes) - 1, -1, -1):
        pj = planes[j]
        if (t >> j) & 1:
            eq &= pj
        else:
            gt |= eq & pj
            eq &= ~pj
    if t >> len(planes):
        return gt & 0
    return gt | eq


def simulate_words(c: Circuit, words: np.ndarray, mem_budget: int = 1 << 28) -> np.ndarray:
    """Bit-parallel evaluation: ``words`` is (n_inputs, W) uint64, result (n_outputs, W)."""
    if c.meters:
        raise CircuitError("metered circuits cannot be evaluated")
    if words.shape[0] != len(c.inputs):
        raise CircuitError(f"expected {len(c.inputs)} inputs, got {words.shape[0]}")
    plan = _plan(c)
    n = len(c.kinds)
    total = words.shape[1]
    chunk = max(1, min(total, mem_budget // (8 * max(n, 1))))
    out = np.empty((len(c.outputs), total), dtype=np.uint64)
    inputs = np.array(c.inputs, dtype=np.int64)
    outputs = np.array(c.outputs, dtype=np.int64)
    for lo in range(0, total, chunk):
        hi = min(total, lo + chunk)
        w = hi - lo
        vals = np.zeros((n, w), dtype=np.uint64)
        vals[inputs] = words[:, lo:hi]
        if plan.const1:
            vals[plan.const1] = _ALL
        cap = max(1, (1 << 24) // w)  # gathered rows per numpy call
        for kind, ids, src, extra in plan.steps:
            if kind == NOT:
                vals[ids] = ~vals[src]
            elif kind == MAJORITY:
                k = extra
                step = max(1, cap // k)
                for a in range(0, len(ids), step):
                    vals[ids[a:a + step]] = _majority_words(vals[src[a:a + step]], k)
            else:
                starts, lens = extra
                red = np.bitwise_and if kind == AND else np.bitwise_or
                a = 0
                while a < len(ids):
                    b = a
                    acc = 0
                    while b < len(ids) and (acc == 0 or acc + lens[b] <= cap):
                        acc += lens[b]
                        b += 1
                    s0 = starts[a]
                    seg = src[s0:s0 + acc]
                    vals[ids[a:b]] = red.reduceat(vals[seg], starts[a:b] - s0, axis=0)
                    a = b
        out[:, lo:hi] = vals[outputs]
    return out


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(batch, k) 0/1 matrix -> (k, ceil(batch/64)) uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    batch, k = bits.shape
    nw = max(1, -(-batch // 64))
    padded = np.zeros((k, nw * 64), dtype=np.uint8)
    padded[:, :batch] = bits.T
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(k, nw)


def unpack_bits(words: np.ndarray, batch: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`: (k, W) words -> (batch, k) uint8 matrix."""
    k = words.shape[0]
    b = np.unpackbits(np.ascontiguousarray(words).view(np.uint8).reshape(k, -1),
                      axis=1, bitorder="little")
    return b[:, :batch].T.copy()


def simulate(c: Circuit, inputs: np.ndarray) -> np.ndarray:
    """Evaluate a batch: (batch, n_inputs) 0/1 matrix -> (batch, n_outputs) uint8."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != len(c.inputs):
        raise CircuitError(f"expected (batch, {len(c.inputs)}) inputs, got {inputs.shape}")
    return unpack_bits(simulate_words(c, pack_bits(inputs)), inputs.shape[0])


# ---------------------------------------------------------------------------
# netlists
# ---------------------------------------------------------------------------

def to_netlist(c: Circuit, comments: bool = True) -> str:
    lines = [f"PREC {c.prec}"]
    if c.purpose:
        lines.append(f"PURPOSE {c.purpose}")
    lines.append("INPUTS " + " ".join(map(str, c.inputs)))
    lines.append("OUTPUTS " + " ".join(map(str, c.outputs)))
    last = None
    for g, (kind, fin) in enumerate(zip(c.kinds, c.fanins)):
        if comments and c.labels[g] != last:
            last = c.labels[g]
            if last:
                lines.append(f"# {last}")
        if kind == METERED:
            tag, width = c.meters[g]
            head = f"{g} METERED {tag} {width}"
        else:
            head = f"{g} {kind}"
        lines.append(" ".join([head, *map(str, fin)]) if fin else head)
    return "\n".join(lines) + "\n"


def from_netlist(text: str) -> Circuit:
    kinds: list[str] = []
    fanins: list[tuple[int, ...]] = []
    meters: dict[int, tuple[str, int]] = {}
    labels: list[str] = []
    inputs: list[int] = []
    outputs: list[int] = []
    prec, purpose, label = 0, "", ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            label = line[1:].strip()
            continue
        head, *rest = line.split()
        try:
            if head == "PREC":
                prec = int(rest[0])
            elif head == "PURPOSE":
                purpose = " ".join(rest)
            elif head == "INPUTS":
                inputs = [int(x) for x in rest]
            elif head == "OUTPUTS":
                outputs = [int(x) for x in rest]
            else:
                g = int(head)
                if g != len(kinds):
                    raise CircuitError(f"gate ids must be dense, got {g}")
                kind = rest[0]
                if kind == METERED:
                    meters[g] = (rest[1], int(rest[2]))
                    fin = tuple(int(x) for x in rest[3:])
                else:
                    fin = tuple(int(x) for x in rest[1:])
                kinds.append(kind)
                fanins.append(fin)
                labels.append(label)
        except (IndexError, ValueError) as exc:
            raise CircuitError(f"netlist line {lineno}: {exc}") from exc
    return Circuit(kinds, fanins, meters, inputs, outputs, prec, purpose, labels)


# ---------------------------------------------------------------------------
# families and scaling
# ---------------------------------------------------------------------------

@dataclass
class CircuitFamily:
    """Deterministic generator n -> Circuit (stand-in for a uniform family)."""

    generator: Callable[[int], Circuit]
    name: str = ""

    def __call__(self, n: int) -> Circuit:
        return self.generator(n)


@dataclass
class ScalingReport:
    name: str
    ns: list[int]
    depths: list[str]
    sizes: list[int]
    depth_constant: bool
    slope: float
    r2: float

    def to_json(self) -> dict:
        return {
            "name": self.name, "ns": self.ns, "depths": self.depths,
            "sizes": self.sizes, "depth_constant": self.depth_constant,
            "size_loglog_slope": round(self.slope, 6), "size_fit_r2": round(self.r2, 6),
        }


def loglog_fit(ns: Sequence[int], sizes: Sequence[int]) -> tuple[float, float]:
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(sizes, dtype=float))
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return float(slope), r2


def check_family_scaling(f: CircuitFamily, ns: Sequence[int]) -> ScalingReport:
    ns = list(ns)
    if len(set(ns)) < 3:
        raise ValueError("scaling needs at least 3 distinct values of n")
    depths, sizes = [], []
    for n in ns:
        try:
            c = f(n)
        except Exception as exc:
            raise CircuitError(f"family {f.name!r} failed to generate n={n}: {exc}") from exc
        depths.append(depth(c))
        sizes.append(size(c))
    slope, r2 = loglog_fit(ns, sizes)
    return ScalingReport(f.name, ns, [str(d) for d in depths], sizes,
                         len(set(depths)) == 1, slope, r2)


def mutate(c: Circuit, g: int) -> Circuit:
    """Copy of ``c`` with gate ``g`` corrupted (AND<->OR, MAJORITY->OR, NOT->buffer)."""
    kinds = list(c.kinds)
    k = kinds[g]
    swap = {AND: OR, OR: AND, MAJORITY: OR}
    fanins = list(c.fanins)
    if k in swap:
        kinds[g] = swap[k]
    elif k == NOT:
        kinds[g] = OR
    elif k in (CONST0, CONST1):
        kinds[g] = CONST1 if k == CONST0 else CONST0
    else:
        raise CircuitError(f"gate {g} ({k}) cannot be mutated")
    return Circuit(kinds, fanins, c.meters, c.inputs, c.outputs, c.prec, c.purpose, c.labels)
