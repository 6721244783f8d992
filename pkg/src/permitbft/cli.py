"""Command line entry point.

Exit codes: 0 all checks pass, 1 usage or parse error, 2 oracle violation,
3 liveness failure, 4 replay divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

from .fuzz import fuzz
from .liveness import lemma_b5_enumeration, liveness_check
from .report import dumps, plot_data, run_record
from .scenario import ConstraintError, ParseError, load_scenario, scenario_digest
from .simnet import run

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_LIVENESS, EXIT_DIVERGED = 0, 1, 2, 3, 4
SEED_ENV = "PERMITBFT_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(arg: str) -> int:
    value = int(arg, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permitbft", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", type=Path, required=scenario_required)
        sp.add_argument("--seed", type=_seed, help=f"overrides the file and ${SEED_ENV}")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.add_argument("--trace", type=Path)
    r.add_argument("--report", type=Path)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--plot-data", type=Path)

    fz = sub.add_parser("fuzz", help="seeded adversarial safety runs")
    fz.add_argument("--runs", type=int, default=1000)
    fz.add_argument("--seed", type=_seed, default=0, help="first seed")
    fz.add_argument("--sizes", default="4,7")
    fz.add_argument("--workers", type=int, default=1)
    fz.add_argument("--report", type=Path)
    fz.add_argument("--format", choices=("json", "csv"), default="json")

    b5 = sub.add_parser("check-lemma-b5", help="enumerate creator placements")
    b5.add_argument("--n", type=int, nargs="+", default=[4, 7, 10, 13])

    rp = sub.add_parser("replay", help="re-run a trace's scenario and compare digests")
    common(rp)
    rp.add_argument("--trace", type=Path, required=True)

    ex = sub.add_parser("export-dag", help="run a scenario and print a block graph")
    common(ex)
    ex.add_argument("--node", type=int, help="a node's local dag instead of the global one")
    ex.add_argument("--out", type=Path)
    return p


def _load(args):
    sc = load_scenario(args.scenario)
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        seed = _seed(os.environ[SEED_ENV])
    if seed is not None:
        sc = sc.with_seed(seed)
    return sc, scenario_digest(args.scenario)


def cmd_run(args) -> int:
    sc, digest = _load(args)
    res = run(sc, scenario_digest=digest)
    live = liveness_check(res) if sc.checks.liveness else None
    rec = run_record(res, live)
    if args.trace:
        args.trace.write_text(res.trace.text())
    if args.report:
        args.report.write_text(dumps([rec], args.format))
    if args.plot_data:
        args.plot_data.write_text(plot_data([rec]))
    print(f"seed={sc.seed} blocks={rec['blocks']} committed_txs={rec['txs_committed']} "
          f"trace={res.trace_digest[:16]}")
    if res.violation is not None:
        print(f"oracle violation: {res.violation}", file=sys.stderr)
        return EXIT_VIOLATION
    if live is not None:
        print(f"liveness: {'ok' if live.ok else 'FAILED'} rounds_to_commit={live.rounds_to_commit}")
        if not live.ok:
            print(f"liveness failure: {live.detail}", file=sys.stderr)
            return EXIT_LIVENESS
    return EXIT_OK


def cmd_fuzz(args) -> int:
    sizes = tuple(int(x) for x in args.sizes.split(","))
    outcomes = fuzz(range(args.seed, args.seed + args.runs), sizes, args.workers)
    bad = [o for o in outcomes if o.violation]
    for o in bad:
        print(f"seed {o.seed}: {o.violation}", file=sys.stderr)
    print(f"{len(outcomes)} runs, {len(bad)} violations")
    if args.report:
        recs = [{"seed": o.seed, "n": o.n, "strategies": "+".join(o.strategies), "blocks": o.blocks,
                 "committed_txs": o.committed_txs, "unsafe_honest_permits": o.unsafe_honest_permits,
                 "violation": o.violation, "trace_digest": o.trace_digest} for o in outcomes]
        args.report.write_text(dumps(recs, args.format))
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_b5(args) -> int:
    ok = True
    for n in args.n:
        total, passed = lemma_b5_enumeration(n)
        ok &= total == passed
        print(f"n={n} f={(n - 1) // 3} placements={total} passing={passed}")
    return EXIT_OK if ok else EXIT_LIVENESS


def cmd_replay(args) -> int:
    recorded = args.trace.read_text()
    header = recorded.splitlines()[0] if recorded else ""
    fields = dict(tok.split("=", 1) for tok in header.split() if "=" in tok)
    if args.seed is None and "seed" in fields:
        args.seed = int(fields["seed"])
    sc, digest = _load(args)
    if fields.get("scenario", digest) != digest:
        print("scenario file differs from the one recorded in the trace", file=sys.stderr)
        return EXIT_DIVERGED
    fresh = run(sc, scenario_digest=digest).trace.text()
    if hashlib.sha256(fresh.encode()).digest() == hashlib.sha256(recorded.encode()).digest():
        print(f"identical ({hashlib.sha256(fresh.encode()).hexdigest()[:16]})")
        return EXIT_OK
    for i, (a, b) in enumerate(zip(recorded.splitlines(), fresh.splitlines())):
        if a != b:
            print(f"first difference at line {i + 1}:\n- {a}\n+ {b}", file=sys.stderr)
            break
    else:
        print("traces differ in length", file=sys.stderr)
    return EXIT_DIVERGED


def cmd_export(args) -> int:
    sc, digest = _load(args)
    res = run(sc, scenario_digest=digest)
    if args.node is None:
        dag = res.global_dag
    else:
        node = res.nodes.get(args.node)
        if node is None:
            print(f"no node {args.node}", file=sys.stderr)
            return EXIT_USAGE
        dag = node.dag if hasattr(node, "dag") else node.shadow.dag
    text = dag.export()
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_VIOLATION if res.violation is not None else EXIT_OK


COMMANDS = {"run": cmd_run, "fuzz": cmd_fuzz, "check-lemma-b5": cmd_b5, "replay": cmd_replay,
            "export-dag": cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (ParseError, ConstraintError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
