"""Command-line interface: ``cachepersist analyze|compare|oracle-check|gen``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 soundness
violation found by ``compare``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .cfg import CacheConfig, CfgError, ControlFlowGraph, parse_cfg, print_cfg
from .generators import gen_hamiltonian_cfg, gen_random_cfg, parse_edge_list
from .oracle import DEFAULT_BUDGET, BudgetExceeded, OracleUnsupported, find_witness
from .solver import (DOMAINS, FORMAT_VERSION, PROGRAM_SCOPE, AnalysisError,
                     analyze_program, differential_check, emit_persistence_constraints)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_UNSOUND = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _domain_list(text: str) -> list[str]:
    names = [d.strip() for d in text.split(",") if d.strip()]
    if not names:
        raise argparse.ArgumentTypeError("no domain selected")
    for d in names:
        if d not in DOMAINS:
            raise argparse.ArgumentTypeError(
                f"unknown domain {d!r}; choose from {', '.join(DOMAINS)}")
    return names


def _add_cache_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-k", "--assoc", type=_positive, default=8,
                   help="cache associativity (default: 8)")
    p.add_argument("--sets", type=_positive, default=None,
                   help="number of cache sets (default: 32 if every block has an "
                        "address, else 1)")
    p.add_argument("--line-size", type=_positive, default=16,
                   help="cache line size in bytes, a power of two (default: 16)")
    p.add_argument("--scopes", choices=["explicit", "auto", "whole"], default="auto",
                   help="explicit: file scopes only; auto: file scopes or detected "
                        "loops; whole: whole program only (default: auto)")
    p.add_argument("--format", choices=["text", "json", "json-like"], default="text",
                   help="output format (default: text)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cachepersist",
                     description="Exact and classical LRU cache persistence analysis.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("analyze", help="classify blocks per scope and domain")
    p.add_argument("cfg", help="CFG file ('-' for stdin)")
    _add_cache_flags(p)
    p.add_argument("-d", "--domains", type=_domain_list, default=["exact"],
                   help=f"comma-separated domains from: {', '.join(DOMAINS)} "
                        "(default: exact)")
    p.add_argument("--constraints", action="store_true",
                   help="also print miss constraints for persistent blocks")
    p.add_argument("--dump-zdd-dot", metavar="PATH",
                   help="write the exact analysis' whole-program ZDDs as a DOT graph")

    p = sub.add_parser("compare", help="run a domain in lockstep with a reference")
    p.add_argument("cfg", help="CFG file ('-' for stdin)")
    _add_cache_flags(p)
    p.add_argument("-d", "--domains", type=_domain_list, default=["product"],
                   help="subject domain(s) to check (default: product)")
    p.add_argument("--reference", default="exact", choices=sorted(DOMAINS),
                   help="reference domain (default: exact)")

    p = sub.add_parser("oracle-check", help="search for a path on which a block misses twice")
    p.add_argument("cfg", help="CFG file ('-' for stdin)")
    p.add_argument("block", help="block to check")
    p.add_argument("-k", "--assoc", type=_positive, default=8,
                   help="cache associativity (default: 8)")
    p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET,
                   help=f"largest |V|*|E| the search accepts (default: {DEFAULT_BUDGET})")
    p.add_argument("--format", choices=["text", "json", "json-like"], default="text",
                   help="output format (default: text)")

    p = sub.add_parser("gen", help="generate CFG documents")
    gen = p.add_subparsers(dest="generator", metavar="GENERATOR", parser_class=_Parser)
    gen.required = True
    h = gen.add_parser("hamiltonian", help="reduction from a Hamiltonian-circuit instance")
    h.add_argument("--graph", required=True, help="edge-list file, one 'u v' pair per line")
    r = gen.add_parser("random", help="seeded random reducible CFG")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--nodes", type=_positive, default=5)
    r.add_argument("--blocks", type=_positive, default=3)
    r.add_argument("--branch", type=_positive, default=2, help="max successors per node")
    r.add_argument("--loop-prob", type=_probability, default=0.3)
    r.add_argument("--many-rate", type=_probability, default=0.0)
    r.add_argument("--unknown-rate", type=_probability, default=0.0)
    r.add_argument("--empty-rate", type=_probability, default=0.2)
    return parser


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load(path: str) -> ControlFlowGraph:
    return parse_cfg(_read(path))


def _config(args, cfg: ControlFlowGraph) -> CacheConfig:
    sets = args.sets
    if sets is None:
        has_addresses = cfg.blocks and all(b.address is not None for b in cfg.blocks)
        sets = 32 if has_addresses else 1
    return CacheConfig(args.assoc, sets, args.line_size)


def _emit(args, text_fn, data_fn, out) -> None:
    if args.format == "text":
        out.write(text_fn())
    else:
        out.write(json.dumps(data_fn(), indent=2) + "\n")


def cmd_analyze(args, out) -> int:
    if args.dump_zdd_dot and "exact" not in args.domains:
        raise UsageError("--dump-zdd-dot needs the exact domain")
    cfg = _load(args.cfg)
    config = _config(args, cfg)
    dumps = []

    def keep_dot(name, idx, res, domain):
        if (args.dump_zdd_dot and name == "exact"
                and res.scope.name == PROGRAM_SCOPE and res.fixpoint):
            dumps.append(domain.to_dot(res.fixpoint.states))

    report = analyze_program(cfg, config, args.domains, args.scopes,
                             on_result=keep_dot if args.dump_zdd_dot else None)
    constraints = emit_persistence_constraints(report, cfg) if args.constraints else None

    def text():
        body = report.to_text()
        if constraints is not None:
            body += "constraints:\n" + constraints
        return body

    def data():
        d = report.to_dict()
        if constraints is not None:
            d["constraints"] = [ln for ln in constraints.splitlines()
                                if ln and not ln.startswith("#")]
        return d

    _emit(args, text, data, out)
    if args.dump_zdd_dot:
        with open(args.dump_zdd_dot, "w", encoding="utf-8") as fh:
            fh.write("".join(dumps))
    return EXIT_OK


def cmd_compare(args, out) -> int:
    cfg = _load(args.cfg)
    config = _config(args, cfg)
    reports = [differential_check(cfg, config, d, args.reference, args.scopes)
               for d in args.domains]
    _emit(args, lambda: "".join(r.to_text() for r in reports),
          lambda: {"format_version": FORMAT_VERSION,
                   "comparisons": [r.to_dict() for r in reports]}, out)
    return EXIT_OK if all(r.sound for r in reports) else EXIT_UNSOUND


def cmd_oracle_check(args, out) -> int:
    cfg = _load(args.cfg)
    if args.block not in cfg.block_map:
        raise CfgError(f"unknown block {args.block!r}")
    witness = find_witness(cfg, args.block, args.assoc, args.budget)

    def text():
        if witness is None:
            return "PERSISTENT\n"
        return ("NOT-PERSISTENT\n"
                f"witness: {witness.describe()}\n"
                f"trace: {' '.join(witness.trace())}\n"
                f"misses at path positions: {witness.miss_positions[0]}, "
                f"{witness.miss_positions[1]}\n")

    def data():
        d = {"format_version": FORMAT_VERSION, "block": args.block, "k": args.assoc,
             "persistent": witness is None}
        if witness is not None:
            d["witness"] = [{"source": e.source, "access": str(e.access),
                             "target": e.target} for e in witness.path]
            d["miss_positions"] = list(witness.miss_positions)
        return d

    _emit(args, text, data, out)
    return EXIT_OK


def cmd_gen(args, out) -> int:
    if args.generator == "hamiltonian":
        graph = parse_edge_list(_read(args.graph))
        if graph.n < 2:
            raise UsageError("the graph needs at least two vertices")
        cfg, block, k = gen_hamiltonian_cfg(graph)
        out.write(f"# block {block} is persistent at k={k} iff the graph "
                  "has no Hamiltonian circuit\n")
        out.write(print_cfg(cfg))
    else:
        cfg = gen_random_cfg(args.seed, args.nodes, args.blocks, args.branch,
                             args.loop_prob, args.many_rate, args.unknown_rate,
                             args.empty_rate)
        out.write(print_cfg(cfg))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "oracle-check": cmd_oracle_check,
    "gen": cmd_gen,
}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"cachepersist: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CfgError, AnalysisError, BudgetExceeded, OracleUnsupported,
            OSError, ValueError) as exc:
        print(f"cachepersist: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
