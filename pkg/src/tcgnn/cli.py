"""Command line front end: ``tcgnn {eval,compile,verify,scaling,suite,probe,fpn}``.

Every report is a JSON object with sorted keys and an embedded run
manifest; FPN values always travel as literals such as ``5*2^-3@4``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import compiler as C
from . import fpn as F
from . import gnn
from . import oracles as O
from .circuit import (AND, MAJORITY, NOT, OR, CircuitError, from_netlist, mutate, simulate,
                      to_netlist)
from .gnn import GnnConfig, GnnError, GraphInstance
from .lowering import GATE, METERED


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# manifest and I/O
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    subcommand: str
    config: dict | None = None
    seed: int | None = None
    version: str = __version__
    inputs: dict = field(default_factory=dict)       # path -> sha256
    args: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"subcommand": self.subcommand, "config": self.config, "seed": self.seed,
                "version": self.version, "inputs": dict(sorted(self.inputs.items())),
                "args": dict(sorted(self.args.items()))}

    @classmethod
    def from_json(cls, obj: dict) -> RunManifest:
        return cls(obj["subcommand"], obj.get("config"), obj.get("seed"), obj["version"],
                   dict(obj.get("inputs", {})), dict(obj.get("args", {})))


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path, manifest: RunManifest):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    manifest.inputs[str(path)] = hashlib.sha256(text.encode()).hexdigest()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def load_config(path, manifest: RunManifest) -> GnnConfig:
    obj = _load_json(path, manifest)
    try:
        cfg = GnnConfig.from_json(obj)
    except (GnnError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from exc
    manifest.config = cfg.to_json()
    return cfg


def load_graph(path, manifest: RunManifest) -> GraphInstance:
    obj = _load_json(path, manifest)
    try:
        return GraphInstance.from_json(obj)
    except (GnnError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from exc


def emit(obj: dict, out=None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _backend(name: str):
    return METERED if name == "metered" else GATE


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_eval(args, man: RunManifest) -> int:
    cfg = load_config(args.config, man)
    g = load_graph(args.graph, man)
    if args.add_self_loops:
        g = g.with_self_loops()
    trace: dict = {}
    try:
        out = gnn.forward(g, cfg, trace)
    except (F.FPNError, GnnError) as exc:
        raise CliError(f"evaluation failed: {exc}") from exc
    emit({"manifest": man.to_json(), "output": str(out), "stages": gnn.format_trace(trace)},
         args.out)
    return 0


def cmd_compile(args, man: RunManifest) -> int:
    cfg = load_config(args.config, man)
    backend = _backend(args.backend)
    try:
        c = C.compile_gnn(cfg, args.n, backend)
        rep = C.depth_report(cfg, args.n, gate_circuit=c if backend is GATE else None)
    except (CircuitError, GnnError) as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        Path(args.out).write_text(to_netlist(c))
    emit({"manifest": man.to_json(), "backend": args.backend, "size": len(c.kinds),
          "depth": str(C.depth(c)), "report": rep.to_json()}, args.report)
    return 0 if rep.ok else 1


def _mutation_target(c, cfg: GnnConfig, n: int, probes: int = 64) -> int:
    """A gate driving an output whose corruption is visible on random valid instances."""
    rng = random.Random(0)
    X = np.array([C.instance_bits(cfg, C.random_instance(cfg, n, rng)) for _ in range(probes)],
                 dtype=np.uint8)
    base = simulate(c, X)
    for o in c.outputs:
        g = o
        while c.kinds[g] == OR and len(c.fanins[g]) == 1:
            g = c.fanins[g][0]
        if c.kinds[g] in (AND, OR, MAJORITY, NOT) and (simulate(mutate(c, g), X) != base).any():
            return g
    raise CliError("no output-driving gate changes the output when mutated")


def cmd_verify(args, man: RunManifest) -> int:
    cfg = load_config(args.config, man)
    try:
        if args.netlist:
            man.inputs[str(args.netlist)] = digest(args.netlist)
            c = from_netlist(Path(args.netlist).read_text())
        else:
            c = C.compile_gnn(cfg, args.n, GATE)
        if args.mutate is not None:
            g = _mutation_target(c, cfg, args.n) if args.mutate == "auto" else int(args.mutate)
            c = mutate(c, g)
            man.args["mutated_gate"] = g
        rep = C.verify_equivalence(cfg, args.n, args.trials, seed=args.seed, circuit=c,
                                   exhaustive=args.exhaustive)
    except (CircuitError, GnnError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    emit({"manifest": man.to_json(), "report": rep.to_json()}, args.out)
    return 0 if rep.ok else 1


def cmd_scaling(args, man: RunManifest) -> int:
    cfg = load_config(args.config, man)
    try:
        rep = C.scaling_report(cfg, args.ns, _backend(args.backend))
    except C.ScalingError as exc:
        emit({"manifest": man.to_json(), "error": str(exc)}, args.out)
        return 1
    except (CircuitError, GnnError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    emit({"manifest": man.to_json(), "report": rep.to_json()}, args.out)
    return 0


def cmd_suite(args, man: RunManifest) -> int:
    try:
        suite = O.generate_suite(args.kind, args.sizes, seed=args.seed, per_size=args.per_size)
    except O.OracleError as exc:
        raise CliError(str(exc)) from exc
    O.write_suite(args.out, suite)
    emit({"manifest": man.to_json(), "instances": len(suite),
          "positives": sum(i.label for i in suite), "out": str(args.out)})
    return 0


def cmd_probe(args, man: RunManifest) -> int:
    cfg = load_config(args.config, man)
    man.inputs[str(args.suite)] = digest(args.suite)
    try:
        suite = O.read_suite(args.suite)
        threshold = F.parse(args.threshold)
        rep = O.probe_gnn(cfg, suite, threshold)
    except (O.OracleError, GnnError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    emit({"manifest": man.to_json(), "report": rep.to_json()}, args.out)
    return 0


FPN_OPS = {
    "add": (2, F.fpn_add), "sub": (2, F.fpn_sub), "mul": (2, F.fpn_mul), "div": (2, F.fpn_div),
    "le": (2, F.fpn_le), "max": (2, F.fpn_max), "min": (2, F.fpn_min),
    "neg": (1, F.fpn_neg), "exp": (1, F.fpn_exp), "sqrt": (1, F.fpn_sqrt),
    "sum": (None, F.iterated_sum), "prod": (None, F.iterated_prod),
}


def cmd_fpn(args, man: RunManifest) -> int:
    if args.op == "round":
        if len(args.operands) != 2:
            raise CliError("round takes a rational and a precision: round 1/3 4")
        try:
            x = F.round_p(F.ExactRational(args.operands[0]), int(args.operands[1]))
        except (ValueError, ZeroDivisionError) as exc:
            raise CliError(str(exc)) from exc
        print(x)
        return 0
    arity, fn = FPN_OPS[args.op]
    if arity is not None and len(args.operands) != arity:
        raise CliError(f"{args.op} takes {arity} operand(s), got {len(args.operands)}")
    try:
        xs = [F.parse(t) for t in args.operands]
        res = fn(xs) if arity is None else fn(*xs)
    except (F.FPNError, ValueError) as exc:
        raise CliError(f"{args.op}: {exc}") from exc
    print(str(res).lower() if isinstance(res, bool) else res)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcgnn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"tcgnn {__version__}")
    ap.add_argument("--manifest", help="also write the run manifest to this file")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("eval", help="forward pass with a per-stage dump")
    p.add_argument("graph")
    p.add_argument("config")
    p.add_argument("--add-self-loops", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("compile", help="compile to a netlist and report depths")
    p.add_argument("config")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--backend", choices=("metered", "gate"), default="metered")
    p.add_argument("--out", help="netlist file")
    p.add_argument("--report", help="write the report here instead of stdout")

    p = sub.add_parser("verify", help="gate circuit against the reference")
    p.add_argument("config")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--netlist", help="verify this netlist instead of compiling")
    p.add_argument("--mutate", help="corrupt a gate first (gate id or 'auto')")
    p.add_argument("--out")

    p = sub.add_parser("scaling", help="depth and size across n")
    p.add_argument("config")
    p.add_argument("--ns", type=_int_list, default=[4, 8, 16, 32])
    p.add_argument("--backend", choices=("metered", "gate"), default="metered")
    p.add_argument("--out")

    p = sub.add_parser("suite", help="generate a labelled decision suite (JSON lines)")
    p.add_argument("kind", choices=O.PROBLEMS)
    p.add_argument("--sizes", type=_int_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-size", type=int, default=4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="threshold a GNN on a decision suite")
    p.add_argument("config")
    p.add_argument("suite")
    p.add_argument("--threshold", required=True, help="FPN literal")
    p.add_argument("--out")

    p = sub.add_parser("fpn", help="FPN calculator")
    p.add_argument("op", choices=sorted([*FPN_OPS, "round"]))
    p.add_argument("operands", nargs="*")
    return ap


COMMANDS = {"eval": cmd_eval, "compile": cmd_compile, "verify": cmd_verify,
            "scaling": cmd_scaling, "suite": cmd_suite, "probe": cmd_probe, "fpn": cmd_fpn}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    man_args = {k: v for k, v in vars(args).items() if k not in ("cmd", "manifest")}
    man = RunManifest(args.cmd, seed=getattr(args, "seed", None), args=man_args)
    try:
        code = COMMANDS[args.cmd](args, man)
    except CliError as exc:
        print(f"tcgnn {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    if args.manifest:
        emit(man.to_json(), args.manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
