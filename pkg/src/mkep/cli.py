"""Command-line entry point: ``mkep run|solve|validate|oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .config import REPORT_FORMATS, ConfigError, fixture_path, parse_config
from .domain import ContractError, Solution
from .generator import CrossTissue, ExplicitCrossTissue
from .graph import build_graph
from .pools import PoolFormatError, read_pool
from .report import ReportError, blood_group_row, comparison_row, emit_report, render_text
from .simulator import SimulationError, run_experiment
from .solver import (
    CycleCapacityError,
    InfeasibleError,
    OracleRefusal,
    SolveSpec,
    brute_force,
    independent_solutions,
    solve,
    verify_compact,
)

log = logging.getLogger("mkep")


def _available_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _resolve_config(ref: str):
    path = Path(ref)
    if not path.exists() and not ref.endswith(".json") and os.sep not in ref:
        path = fixture_path(ref)
    return parse_config(path)


def _formats(text: str) -> List[str]:
    items = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in items if f not in REPORT_FORMATS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"formats must be a comma list from {list(REPORT_FORMATS)}")
    return items


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkep", description="Multi-registry kidney exchange clearing and simulation."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more experiments and write reports")
    run.add_argument("configs", nargs="+", help="config files or shipped config names")
    run.add_argument("--seed", type=int, help="override the base seed")
    run.add_argument("--replications", type=_positive, help="override the replication count")
    run.add_argument("--workers", type=_positive, default=None,
                     help="parallel replications (default: available CPUs)")
    run.add_argument("--format", type=_formats, dest="formats", help="comma list of csv,json")
    run.add_argument("--output", help="output directory (default: the first config's)")

    val = sub.add_parser("validate", help="parse and check configs without running")
    val.add_argument("configs", nargs="+")

    for name, text in (("solve", "clear a pool file exactly"), ("oracle", "clear a small pool by brute force")):
        p = sub.add_parser(name, help=text)
        p.add_argument("pool", help="pool file (CSV, see docs)")
        p.add_argument("--bounds", help="comma list of per-registry cycle bounds (default 3 each)")
        p.add_argument("--global-bound", type=int, help="merged cycle bound (default: largest registry bound)")
        p.add_argument("--no-ir", action="store_true", help="drop the individual-rationality floors")
        p.add_argument("--seed", type=int, default=0, help="seed for generated crossmatches")
        p.add_argument("--crossmatch-probability", type=float, default=0.3)
        p.add_argument("--format", choices=("text", "json"), default="text", dest="out_format")
    return parser


def _cmd_validate(args) -> int:
    for ref in args.configs:
        config = _resolve_config(ref)
        print(f"ok: {config.name} ({len(config.registries)} registries, "
              f"{config.rounds} rounds, {config.replications} replications)")
    return 0


def _cmd_run(args) -> int:
    configs = [
        _resolve_config(ref).with_overrides(
            seed=args.seed, replications=args.replications,
            formats=tuple(args.formats) if args.formats else None,
        )
        for ref in args.configs
    ]
    workers = args.workers or _available_workers()
    summaries = []
    for config in configs:
        log.info("running %s: %d replications x %d rounds", config.name, config.replications, config.rounds)
        summaries.append(run_experiment(config, workers=workers))
    out_dir = args.output or configs[0].output_dir
    written = emit_report(summaries, out_dir, configs[0].formats)
    print(render_text([comparison_row(s) for s in summaries], "Transplants and optimal score (mKEP/Ind)"))
    print(render_text([blood_group_row(s) for s in summaries], "Patients matched by blood group (mKEP/Ind)"))
    for path in written:
        print(f"wrote {path}")
    return 0


def _solution_dict(solution: Solution) -> dict:
    return {
        "cycles": [
            {"pairs": list(c.vertices), "length": c.length, "weight": c.weight} for c in solution.cycles
        ],
        "matched_per_registry": {str(k + 1): n for k, n in solution.matched_per_registry.items()},
        "total_transplants": solution.total_transplants,
        "total_score": solution.total_score,
    }


def _cmd_clear(args, oracle: bool) -> int:
    pairs, arcs = read_pool(args.pool)
    if not pairs:
        raise PoolFormatError(f"{args.pool}: pool is empty")
    if arcs is not None:
        cross = ExplicitCrossTissue(arcs)
    else:
        cross = CrossTissue(args.seed, args.crossmatch_probability)
    graph = build_graph(pairs, cross)
    registries = sorted({p.registry for p in pairs})
    if args.bounds:
        values = [int(x) for x in args.bounds.split(",")]
        if len(values) < max(registries) + 1:
            raise ContractError(f"--bounds lists {len(values)} registries, pool uses {max(registries) + 1}")
        bounds = {k: values[k] for k in registries}
    else:
        bounds = {k: 3 for k in registries}
    global_bound = args.global_bound or max(bounds.values())
    floors = None
    if not args.no_ir:
        alone = independent_solutions({k: graph.registry_subgraph(k) for k in registries}, bounds)
        floors = {k: s.total_transplants for k, s in alone.items()}
    spec = SolveSpec(graph, bounds, global_bound, floors)
    solution = brute_force(spec) if oracle else solve(spec)
    report = verify_compact(solution, spec)

    doc = {
        "solution": _solution_dict(solution),
        "ir_floor": None if floors is None else {str(k + 1): v for k, v in floors.items()},
        "check": report.as_dict(),
    }
    if args.out_format == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(f"pairs: {len(pairs)}  arcs: {len(graph.arcs)}  bounds: "
              + ", ".join(f"R{k + 1}={b}" for k, b in bounds.items()) + f"  global: {global_bound}")
        if floors is not None:
            print("IR floors: " + ", ".join(f"R{k + 1}={v}" for k, v in floors.items()))
        print(f"transplants: {solution.total_transplants}  score: {solution.total_score}")
        for k, n in solution.matched_per_registry.items():
            print(f"  registry {k + 1}: {n} transplants")
        for c in solution.cycles:
            print("  cycle " + " -> ".join(map(str, c.vertices + c.vertices[:1])) + f"  (weight {c.weight})")
        status = "all constraints satisfied" if report.ok else "VIOLATIONS"
        print(f"compact formulation check ({report.copies} copies): {status}")
        for name, where, detail in report.violations:
            print(f"  {name} @ {where}: {detail}")
    return 0 if report.ok else 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_clear(args, oracle=args.command == "oracle")
    except ConfigError as exc:
        print(f"mkep: {exc}", file=sys.stderr)
        return 2
    except (PoolFormatError, ContractError, OracleRefusal, InfeasibleError, CycleCapacityError) as exc:
        print(f"mkep: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, ReportError) as exc:
        print(f"mkep: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
