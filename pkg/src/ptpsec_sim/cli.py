"""Command line entry point.

    ptpsec-sim run <scenario> [<scenario> ...] [--out DIR] [--mode ptp|ptpsec] [--seed N] [--jobs N]
    ptpsec-sim paths <scenario>
    ptpsec-sim validate <scenario>
    ptpsec-sim list

``<scenario>`` is a JSON file or the name of a bundled scenario. Exit codes:
0 ran, 2 validation failure, 3 the scenario expects detection and the
attack went undetected (or was detected later than ``max_latency_rounds``).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ptpsec_sim.output import emit_outputs
from ptpsec_sim.runner import plan_paths, run_scenario
from ptpsec_sim.scenario import Scenario, ScenarioError, bundled_names, load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNDETECTED = 3


def _load(ref: str, args: argparse.Namespace) -> Scenario:
    s = load_scenario(ref)
    return s.with_overrides(mode=getattr(args, "mode", None), seed=getattr(args, "seed", None))


def check_expectations(summary: dict, scenario: Scenario) -> list[str]:
    """Human-readable failures of the scenario's detection assertions."""
    if not scenario.expect.detection:
        return []
    failures = []
    for slave, entry in summary["slaves"].items():
        latency = entry["detection_latency_start_rounds"]
        if latency is None:
            failures.append(f"{slave}: attack never detected")
        elif scenario.expect.max_latency_rounds is not None and latency > scenario.expect.max_latency_rounds:
            failures.append(
                f"{slave}: detected after {latency} rounds (limit {scenario.expect.max_latency_rounds})"
            )
    return failures


def _run_one(ref: str, out_root: str | None, mode: str | None, seed: int | None) -> tuple[int, str]:
    ns = argparse.Namespace(mode=mode, seed=seed)
    try:
        scenario = _load(ref, ns)
        out = run_scenario(scenario)
    except ScenarioError as exc:
        return EXIT_INVALID, f"{ref}: invalid scenario: {exc}"
    if out_root is not None:
        directory = Path(out_root) / scenario.name
    else:
        directory = Path(scenario.output_dir or Path("out") / scenario.name)
    emit_outputs(out, directory)
    lines = [f"{scenario.name}: wrote {directory}"]
    for slave, entry in out.summary["slaves"].items():
        lines.append(
            f"  {slave}: {entry['rounds']} rounds, flagged {entry['rounds_flagged']}, "
            f"latency start={entry['detection_latency_start_rounds']} end={entry['detection_latency_end_rounds']}, "
            f"steady theta_act={entry['steady_theta_act_us']} us"
        )
    failures = check_expectations(out.summary, scenario)
    lines += [f"  FAILED: {f}" for f in failures]
    return (EXIT_UNDETECTED if failures else EXIT_OK), "\n".join(lines)


def cmd_run(args: argparse.Namespace) -> int:
    jobs = [(ref, args.out, args.mode, args.seed) for ref in args.scenario]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]
    for _, text in results:
        print(text)
    return max(code for code, _ in results)


def cmd_paths(args: argparse.Namespace) -> int:
    try:
        scenario = _load(args.scenario, args)
        plans = plan_paths(scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for slave, pathset in plans.items():
        print(f"{pathset.source} -> {slave}: {pathset.count} edge-disjoint path(s)")
        for i, path in enumerate(pathset):
            nodes = " - ".join(path.nodes(scenario.graph))
            print(f"  P{i}: {nodes}  [{', '.join(path.edge_ids)}]")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = _load(args.scenario, args)
        plan_paths(scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{scenario.name}: ok")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptpsec-sim", description="PTP / PTPsec delay attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and write CSV/JSON results")
    run.add_argument("scenario", nargs="+")
    run.add_argument("--out", help="output root; each scenario writes to OUT/<name>")
    run.add_argument("--mode", choices=["ptp", "ptpsec"])
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int, default=1, help="run scenarios in parallel processes")
    run.set_defaults(func=cmd_run)

    paths = sub.add_parser("paths", help="print the edge-disjoint path set per slave")
    paths.add_argument("scenario")
    paths.set_defaults(func=cmd_paths)

    validate = sub.add_parser("validate", help="check a scenario without running it")
    validate.add_argument("scenario")
    validate.set_defaults(func=cmd_validate)

    lst = sub.add_parser("list", help="list bundled scenarios")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
