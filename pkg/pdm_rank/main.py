#!/usr/bin/env python3
"""
PDM planning tool

Validates Product Data Models, plans and simulates their execution under the
operation-ordering heuristics, enumerates complete paths, and runs the full
experiment matrix into a CSV report.
"""

import argparse
import sys
from pathlib import Path

from pdm_rank import __commit_message__, __version__
from pdm_rank.experiment_utils import (
    BUILTIN_MODELS,
    DEFAULT_CASES,
    EmptyInputError,
    UnknownModelError,
    builtin_path,
    run_experiment,
)
from pdm_rank.model_utils import (
    PDMFormatError,
    PDMValidationError,
    load_pdm,
    normalize,
    parse_pdm,
    read_pdm_text,
    validate,
)
from pdm_rank.path_utils import (
    DEFAULT_ENUMERATION_CAP,
    EnumerationCapError,
    LivenessRule,
    NoRootPathError,
    enumerate_complete_paths,
    write_paths_csv,
)
from pdm_rank.planner_utils import ALL_PLANNERS
from pdm_rank.print_manager import print_manager
from pdm_rank.simulation_utils import (
    SETTING_KINDS,
    SettingConfig,
    SettingError,
    execute,
    forced_instance,
    write_traces_csv,
)

MODULE_ERRORS = (
    PDMFormatError,
    PDMValidationError,
    NoRootPathError,
    EnumerationCapError,
    SettingError,
    UnknownModelError,
    EmptyInputError,
    KeyError,
    OSError,
)


def source_name(source):
    source = str(source)
    if source.startswith("builtin:"):
        return source.split(":", 1)[1]
    return Path(source).stem


def source_path(source):
    source = str(source)
    if source.startswith("builtin:"):
        return builtin_path(source.split(":", 1)[1])
    return Path(source)


def _add_liveness(parser):
    parser.add_argument("--liveness", choices=[rule.value for rule in LivenessRule],
                        default=LivenessRule.PAIRWISE.value,
                        help="Meaningless-operation rule for the extended planners (default: pairwise)")


def _add_setting(parser):
    parser.add_argument("--setting", choices=SETTING_KINDS, default="gaussian",
                        help="Attribute sampling setting (default: gaussian)")
    parser.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    parser.add_argument("--sigma", type=float, default=None,
                        help="Gaussian sigma as a fraction of the mean, for every model")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    parser.add_argument("--traces", type=str, default=None, help="Write every execution trace to this CSV file")


def build_parser():
    """Argument parser with one subparser per command"""
    parser = argparse.ArgumentParser(prog="pdm_rank", description="PDM planning tool")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}\n{__commit_message__}")
    parser.add_argument("--quiet", action="store_true", help="Reduce output verbosity")
    parser.add_argument("--verbose", action="store_true", help="Show detailed numbers while running")
    commands = parser.add_subparsers(dest="command", required=True)

    validate_parser = commands.add_parser("validate", help="Check a model file")
    validate_parser.add_argument("source", help="PDM file or builtin:NAME")

    plan_parser = commands.add_parser("plan", help="Run one instance with file attributes and print its steps")
    plan_parser.add_argument("source", help="PDM file or builtin:NAME")
    plan_parser.add_argument("--heuristic", choices=ALL_PLANNERS, required=True)
    plan_parser.add_argument("--seed", type=int, default=0, help="Seed for outcomes and the random planner")
    plan_parser.add_argument("--fail", nargs="+", metavar="OP", default=None,
                             help="Operations that fail; all others succeed")
    plan_parser.add_argument("--explain", action="store_true", help="Print candidate scores at every step")
    _add_liveness(plan_parser)

    simulate_parser = commands.add_parser("simulate", help="Simulate sampled cases under one heuristic")
    simulate_parser.add_argument("source", help="PDM file or builtin:NAME")
    simulate_parser.add_argument("--heuristic", choices=ALL_PLANNERS, required=True)
    simulate_parser.add_argument("--cases", type=int, default=DEFAULT_CASES)
    _add_setting(simulate_parser)
    _add_liveness(simulate_parser)

    enumerate_parser = commands.add_parser("enumerate", help="List the minimal complete paths")
    enumerate_parser.add_argument("source", help="PDM file or builtin:NAME")
    enumerate_parser.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP)

    report_parser = commands.add_parser("report", help="Run every heuristic on the given models")
    report_parser.add_argument("--models", type=str, default=",".join(BUILTIN_MODELS),
                               help="Comma separated built-in model names or files")
    report_parser.add_argument("--cases", type=int, default=DEFAULT_CASES)
    report_parser.add_argument("--out", type=str, default="report.csv")
    _add_setting(report_parser)
    _add_liveness(report_parser)
    return parser


def _model(source):
    """(name, model) for a file path or builtin:NAME"""
    return source_name(source), load_pdm(source)


def run_validate(args):
    path = source_path(args.source)
    pdm = parse_pdm(read_pdm_text(path), name=source_name(args.source))
    violations = validate(pdm)
    if violations:
        for violation in violations:
            print(f"❌ [{violation.kind}] {violation.message}")
        return 1
    print("OK")
    return 0


def run_plan(args):
    name, pdm = _model(args.source)
    graph = normalize(pdm)
    instance = forced_instance(pdm, fail_ops=args.fail, seed=args.seed)
    print_manager.show_steps = args.explain or print_manager.show_steps
    trace = execute(pdm, graph, args.heuristic, instance, liveness_rule=args.liveness, explain=args.explain)

    print(f"Plan for {name} with {args.heuristic}")
    for number, step in enumerate(trace.steps, start=1):
        mark = "ok" if step.success else "failed"
        print(f"{number:3d}. {step.op:<8} {mark:<6} cost={step.cum_cost:.3f} time={step.cum_time:.3f}")
    print(f"status: {trace.status}")
    print(f"total_cost: {trace.total_cost:.6f}")
    print(f"total_time: {trace.total_time:.6f}")
    return 0


def run_simulate(args):
    name, pdm = _model(args.source)
    setting = SettingConfig(kind=args.setting, cases=args.cases, master_seed=args.seed)
    report = run_experiment([(name, pdm)], setting, planners=[args.heuristic], liveness_rule=args.liveness,
                            workers=args.workers, optimal_models=(), sigma_override=args.sigma,
                            keep_traces=args.traces is not None)
    results = report.results
    produced = results[results["status"] == "root_produced"]
    failed = results[~results["feasible"]]

    print(f"Simulation of {name} with {args.heuristic} ({args.setting}, {args.cases} cases, seed {args.seed})")
    print(f"root produced:     {len(produced)} / {len(results)}")
    for status, count in results["status"].value_counts().sort_index().items():
        print(f"  {status:<17} {count}")
    print(f"mean cost:         {results['cost'].mean():.6f}")
    print(f"mean time:         {results['time'].mean():.6f}")
    if not produced.empty:
        print(f"mean cost (ok):    {produced['cost'].mean():.6f}")
        print(f"mean time (ok):    {produced['time'].mean():.6f}")
    if not failed.empty:
        print(f"mean cost (failed): {failed['cost'].mean():.6f}")
        print(f"mean time (failed): {failed['time'].mean():.6f}")
    print(f"wall time per case: {report.wall_per_case[name] * 1000:.4f} ms")

    if args.traces:
        write_traces_csv(report.traces, args.traces)
        print_manager.print_file(f"✅ Traces written to {args.traces}")
    return 0


def run_enumerate(args):
    _, pdm = _model(args.source)
    paths = enumerate_complete_paths(pdm, cap=args.cap)
    write_paths_csv(paths, sys.stdout)
    return 0


def run_report(args):
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    named = [_model(m if m.endswith(".pdm") or m.startswith("builtin:") else f"builtin:{m}") for m in models]
    setting = SettingConfig(kind=args.setting, cases=args.cases, master_seed=args.seed)
    report = run_experiment(named, setting, liveness_rule=args.liveness, workers=args.workers,
                            sigma_override=args.sigma, keep_traces=args.traces is not None)

    report.to_csv(args.out)
    print_manager.print_file(f"✅ Report written to {args.out}")
    if args.traces:
        write_traces_csv(report.traces, args.traces)
        print_manager.print_file(f"✅ Traces written to {args.traces}")

    print(f"\nNormalized performance ({args.setting} setting, {args.cases} cases per model)")
    print(report.summary_table())
    for name, seconds in report.wall_per_case.items():
        print(f"{name}: {seconds * 1000:.4f} ms per case (all planners)")
    return 0


COMMANDS = {
    "validate": run_validate,
    "plan": run_plan,
    "simulate": run_simulate,
    "enumerate": run_enumerate,
    "report": run_report,
}


def main(argv=None):
    """
    Entry point of the command line tool

    Args:
        argv (list, optional): Arguments without the program name

    Returns:
        int: 0 on success, 1 for model/data errors, 2 for usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    print_manager.set_quiet(args.quiet)
    print_manager.set_verbose(args.verbose and not args.quiet)
    try:
        return COMMANDS[args.command](args)
    except MODULE_ERRORS as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
