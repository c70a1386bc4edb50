"""
ftcbench CLI - Command-line interface
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from ftcbench.config.settings import CASES, WorkbenchConfig, config_hash, load_config
from ftcbench.core.errors import FTCBenchError, RunAborted
from ftcbench.core.models import Axis, design_points
from ftcbench.core.parser import load_fixture, read_json
from ftcbench.modules.allocator import CHANNELS as ACTUATOR_CHANNELS, ControlAllocator
from ftcbench.modules.evaluation import (
    CHANNELS,
    TrackingReport,
    VARIANT_ORDER,
    acceptance_gates,
    bar_chart_rows,
    compare,
    convergence_check,
    report_table,
)
from ftcbench.modules.robustness import CSV_HEADER, MuReport, build_mu_report, nominal_pole_report
from ftcbench.modules.scheduler import GainSchedule, shif_gains
from ftcbench.modules.simulator import ControllerSet, SimLog, Variant, load_scenario, run_comparison
from ftcbench.modules.synthesis import (
    export_document,
    import_document,
    load_weights,
    lqr_baseline,
    synthesize_all,
)
from ftcbench.modules.uncertainty import envelope_rows, uncertainty_weight
from ftcbench.storage.artifacts import read_simlog, write_csv, write_json, write_simlog, write_text

logger = logging.getLogger("ftcbench")

EXIT_SYNTH = 2
EXIT_ANALYZE = 3
EXIT_SIMULATE = 4
EXIT_EVALUATE = 5

SYNTHESIS_FILE = "synthesis.json"
UNCERTAINTY_FILE = "uncertainty.csv"
POLES_FILE = "poles.csv"
MU_FILE = "mu.csv"
MU_TABLE_FILE = "mu.txt"
ALLOCATION_FILE = "allocation.csv"
TRACKING_FILE = "tracking.csv"
TRACKING_TABLE_FILE = "tracking.txt"
LOG_DIR = "logs"
COMPARISON_CASES = ("1", "2")


class StageError(Exception):
    """A failed stage with the exit code it maps to"""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _point_list(value: str) -> Tuple[int, ...]:
    valid = {pt.index for pt in design_points()}
    try:
        points = tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated design points, got {value!r}")
    if not points or not set(points) <= valid:
        raise argparse.ArgumentTypeError(f"design points must be drawn from {sorted(valid)}")
    return points


def _load(args) -> Tuple[WorkbenchConfig, str]:
    config = load_config(args.config).with_overrides(args.out, args.seed, args.points)
    return config, config_hash(config)


def log_path(config: WorkbenchConfig, case: str, variant: str) -> Path:
    return config.output_dir / LOG_DIR / f"case_{case}_{variant}.csv"


def _load_export(config: WorkbenchConfig, code: int):
    path = config.output_dir / SYNTHESIS_FILE
    if not path.is_file():
        raise StageError(f"synthesis export not found: {path} (run 'ftcbench synth' first)", code)
    return import_document(read_json(path))


# Stages

def run_synth(config: WorkbenchConfig, digest: str):
    p, a = load_fixture(config.fixture)
    table = load_weights(config.weights)
    grid = config.grid()
    results = synthesize_all(p, a, table, grid, points=config.design_points, budget=config.budget,
                             starts=config.starts, seed=config.seed)
    lqr = lqr_baseline(p, table)
    path = write_json(config.output_dir / SYNTHESIS_FILE, export_document(results, lqr), digest, config.seed)
    print(f"Synthesis export saved to {path}")

    rows = []
    for axis, index in sorted(results, key=lambda k: (k[0].value, k[1])):
        point = next(pt for pt in design_points() if pt.index == index)
        env, weight = uncertainty_weight(axis, point, p, a, grid)
        rows.extend((axis.value, index) + row for row in envelope_rows(env, weight))
    path = write_csv(config.output_dir / UNCERTAINTY_FILE, ("axis", "point", "omega", "l", "W_t"),
                     rows, digest, config.seed)
    print(f"Uncertainty envelopes saved to {path}")
    return results, lqr


def run_analyze(config: WorkbenchConfig, digest: str) -> MuReport:
    results, _ = _load_export(config, EXIT_ANALYZE)
    p, a = load_fixture(config.fixture)
    table = load_weights(config.weights)

    poles = nominal_pole_report(results, p, a, table.omega_a)
    rows = [(r.axis.value, r.point, repr(pole.real), repr(pole.imag), int(r.stable))
            for r in poles for pole in r.poles]
    path = write_csv(config.output_dir / POLES_FILE, ("axis", "point", "real", "imag", "stable"),
                     rows, digest, config.seed)
    print(f"Nominal poles saved to {path}")
    unstable = [f"{r.axis.value} point {r.point}" for r in poles if not r.stable]
    if unstable:
        raise StageError("unstable nominal closed loops: " + ", ".join(unstable), EXIT_ANALYZE)

    report = build_mu_report(results, p, a, table, config.grid())
    write_csv(config.output_dir / MU_FILE, CSV_HEADER, report.rows(), digest, config.seed)
    path = write_text(config.output_dir / MU_TABLE_FILE, report.summary_table(), digest, config.seed)
    print(report.summary_table())
    print(f"Mu report saved to {path}")
    return report


def controller_set(config: WorkbenchConfig, code: int = EXIT_SIMULATE) -> ControllerSet:
    results, lqr = _load_export(config, code)
    p, _ = load_fixture(config.fixture)
    table = load_weights(config.weights)
    return ControllerSet(
        scheduled=GainSchedule.from_results(results),
        constant=shif_gains(results, config.shif_point),
        lqr=lqr if set(lqr) == set(Axis) else lqr_baseline(p, table),
        altitude_bandwidth=table.altitude_bandwidth,
    )


def run_simulate(config: WorkbenchConfig, digest: str, cases: Sequence[str],
                 variants: Optional[Sequence[Variant]] = None) -> Dict[Tuple[str, str], SimLog]:
    p, a = load_fixture(config.fixture)
    controllers = controller_set(config)
    scenarios = {case: load_scenario(config.scenario_path(case)) for case in cases}
    if variants is None:
        pinned = {s.variant for s in scenarios.values()}
        variants = [pinned.pop()] if len(pinned) == 1 and None not in pinned else list(Variant)

    allocator = ControlAllocator(p, a)
    rows = [(f"V={V:g}",) + row for V in (0.0, p.stall_speed) for row in allocator.matrix_rows(V)]
    write_csv(config.output_dir / ALLOCATION_FILE, ("airspeed", "wrench") + ACTUATOR_CHANNELS[:11],
              rows, digest, config.seed)

    try:
        logs = run_comparison(scenarios, p, a, controllers, variants)
    except RunAborted as e:
        if e.log is not None:
            partial = config.output_dir / LOG_DIR / f"{e.log.name}_{e.log.variant}_partial.csv"
            path = write_simlog(partial, e.log, digest, config.seed)
            print(f"Partial log saved to {path}")
        raise StageError(str(e), EXIT_SIMULATE) from e

    for (case, variant), log in sorted(logs.items()):
        path = write_simlog(log_path(config, case, variant), log, digest, config.seed)
        print(f"Log saved to {path} ({log.t[-1]:.2f} s, final airspeed {log.airspeed[-1]:.2f} m/s)")
    return logs


def _read_logs(config: WorkbenchConfig, case: str) -> Dict[str, SimLog]:
    logs = {}
    for variant in VARIANT_ORDER:
        path = log_path(config, case, variant)
        if not path.is_file():
            raise StageError(f"simulation log not found: {path} (run 'ftcbench simulate' first)", EXIT_EVALUATE)
        logs[variant] = read_simlog(path, name=case, variant=variant)
    return logs


def run_evaluate(config: WorkbenchConfig, digest: str, cases: Sequence[str]) -> List[TrackingReport]:
    reports = [compare(case, _read_logs(config, case)) for case in cases]
    rows = [row for report in reports for row in report.rows()]
    write_csv(config.output_dir / TRACKING_FILE, ("case", "variant") + tuple(f"e_{ch}" for ch in CHANNELS),
              rows, digest, config.seed)
    for channel in CHANNELS:
        write_csv(config.output_dir / f"bars_{channel}.csv", ("case",) + VARIANT_ORDER,
                  bar_chart_rows(reports, channel), digest, config.seed)
    table = report_table(reports)
    path = write_text(config.output_dir / TRACKING_TABLE_FILE, table, digest, config.seed)
    print(table)
    print(f"Tracking report saved to {path}")
    return reports


# Handlers

def _run(stage, code: int):
    try:
        return stage()
    except StageError as e:
        logger.error("%s", e)
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(e.code)
    except (FTCBenchError, OSError, ValueError) as e:
        logger.error("%s", e)
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(code)


def cmd_synth(args):
    """Tune every (axis, design point) controller and the LQR baseline"""
    def stage():
        config, digest = _load(args)
        run_synth(config, digest)
    _run(stage, EXIT_SYNTH)


def cmd_analyze(args):
    """Nominal poles and mu-analysis of the synthesis export"""
    def stage():
        config, digest = _load(args)
        report = run_analyze(config, digest)
        if not report.rp_gate():
            raise StageError("robust performance fails at one of design points 3-6", EXIT_ANALYZE)
    _run(stage, EXIT_ANALYZE)


def cmd_simulate(args):
    """Run one case with one or all controller variants"""
    def stage():
        config, digest = _load(args)
        variants = [Variant(args.variant)] if args.variant else None
        run_simulate(config, digest, [args.case or "1"], variants)
    _run(stage, EXIT_SIMULATE)


def cmd_evaluate(args):
    """Tracking RMSE comparison from saved logs"""
    def stage():
        config, digest = _load(args)
        run_evaluate(config, digest, [args.case] if args.case else COMPARISON_CASES)
    _run(stage, EXIT_EVALUATE)


def cmd_all(args):
    """synth, analyze, six simulations, evaluate; nonzero exit if a gate fails"""
    config, digest = _run(lambda: _load(args), EXIT_SYNTH)
    _run(lambda: run_synth(config, digest), EXIT_SYNTH)
    mu = _run(lambda: run_analyze(config, digest), EXIT_ANALYZE)
    logs = _run(lambda: run_simulate(config, digest, COMPARISON_CASES, list(Variant)), EXIT_SIMULATE)
    reports = _run(lambda: run_evaluate(config, digest, COMPARISON_CASES), EXIT_EVALUATE)

    checks = [convergence_check(logs[key]) for key in sorted(logs)]
    gates = acceptance_gates(reports, checks, mu.rp_gate())
    print("Acceptance gates:")
    for name, ok in gates.items():
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
    if not mu.rp_gate():
        sys.exit(EXIT_ANALYZE)
    if not all(check.passed() for check in checks):
        sys.exit(EXIT_SIMULATE)
    if not all(report.passed for report in reports):
        sys.exit(EXIT_EVALUATE)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='Workbench config (JSON); packaged default when omitted')
    parser.add_argument('--out', help='Output directory')
    parser.add_argument('--seed', type=int, help='Optimizer seed')
    parser.add_argument('--points', type=_point_list, help='Comma-separated design points, e.g. 3 or 3,4')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ftcbench',
        description="ftcbench - Gain-scheduled passive FTC workbench for dual-system VTOL transition flight",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    parser_synth = subparsers.add_parser('synth', help='Synthesize scheduled controllers and the LQR baseline')
    _add_common(parser_synth)
    parser_synth.set_defaults(func=cmd_synth)

    parser_analyze = subparsers.add_parser('analyze', help='Pole report and mu-analysis')
    _add_common(parser_analyze)
    parser_analyze.set_defaults(func=cmd_analyze)

    parser_simulate = subparsers.add_parser('simulate', help='Nonlinear transition-flight simulation')
    _add_common(parser_simulate)
    parser_simulate.add_argument('--case', choices=CASES, help='Fault case (default: 1)')
    parser_simulate.add_argument('--variant', choices=[v.value for v in Variant],
                                 help='Controller variant (default: all three)')
    parser_simulate.set_defaults(func=cmd_simulate)

    parser_evaluate = subparsers.add_parser('evaluate', help='Tracking RMSE comparison')
    _add_common(parser_evaluate)
    parser_evaluate.add_argument('--case', choices=CASES, help='Fault case (default: 1 and 2)')
    parser_evaluate.set_defaults(func=cmd_evaluate)

    parser_all = subparsers.add_parser('all', help='Full pipeline with acceptance gates')
    _add_common(parser_all)
    parser_all.set_defaults(func=cmd_all)
    return parser


def main(argv: Optional[Sequence[str]] = None):
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if not args.command:
        parser.print_help()
        sys.exit(1)

    args.func(args)


if __name__ == '__main__':
    main()
