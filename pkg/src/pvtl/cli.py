"""Command-line entry point: ``pvtl run|sweep|metrics|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .metrics import (
    UnknownNodeError,
    compare_receivers,
    compute_metrics,
    format_summary,
    sweep_csv,
    write_report,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .simengine import TraceParseError, read_trace_csv, run, sweep

log = logging.getLogger("pvtl")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID_SCENARIO = 4
EXIT_OUTPUT = 5
EXIT_BAD_TRACE = 6
EXIT_UNKNOWN_NODE = 7

EPILOG = """\
exit codes:
  0  success
  1  unexpected failure
  2  bad command-line usage
  3  scenario or trace file not found
  4  invalid scenario (every violation is listed)
  5  output directory not writable
  6  malformed trace CSV (line number reported)
  7  node named in compare is not in the trace
"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load(path: str, seed) -> Scenario:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING_FILE, f"scenario file not found: {path}")
    try:
        scenario = load_scenario(p)
        if seed is not None:
            scenario = scenario.with_seed(seed)
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID_SCENARIO, f"{path}: {exc}") from None
    return scenario


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".pvtl-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write to output directory {path}: {exc.strerror}") from None
    return out


def _sweep_spec(scenario: Scenario, flag: str | None):
    if flag is None:
        if scenario.sweep is None:
            return None
        s = scenario.sweep
        return s.parameter, list(s.values), s.label
    param, sep, raw = flag.partition("=")
    if not sep or not param:
        raise CliError(EXIT_USAGE, f"--sweep expects <param>=<v1,v2,...>, got {flag!r}")
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise CliError(EXIT_USAGE, f"--sweep values must be numbers: {raw!r}") from None
    label = scenario.sweep.label if scenario.sweep and scenario.sweep.parameter == param else (
        param.replace(":", "_").replace(".", "_"))
    return param, values, label


def _do_sweep(scenario: Scenario, spec, out: Path, workers: int) -> None:
    param, values, label = spec
    try:
        points = sweep(scenario, param, values, workers=workers)
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID_SCENARIO, str(exc)) from None
    reports = []
    for value, trace in points:
        trace.write_csv(out / f"trace_{label}_{value:g}.csv")
        reports.append((value, compute_metrics(trace)))
    (out / f"psr_vs_{label}.csv").write_text(sweep_csv(reports), encoding="utf-8", newline="")
    lines = [f"sweep {param} ({label}) over {len(values)} values, base seed {scenario.seed}"]
    for value, report in reports:
        lines.append("")
        lines.append(format_summary(report, title=f"== {label} = {value:g}").rstrip())
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(points)} traces and psr_vs_{label}.csv to {out}")


def cmd_run(args) -> int:
    scenario = _load(args.scenario, args.seed)
    out = _out_dir(args.out)
    spec = _sweep_spec(scenario, args.sweep)
    if spec is not None:
        _do_sweep(scenario, spec, out, args.workers)
        return EXIT_OK
    trace = run(scenario)
    trace.write_csv(out / "trace.csv")
    report = compute_metrics(trace)
    write_report(report, out, title=f"scenario {args.scenario} seed {scenario.seed}")
    print(format_summary(report), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario, args.seed)
    spec = _sweep_spec(scenario, args.sweep)
    if spec is None:
        raise CliError(EXIT_USAGE, "no sweep given: pass --sweep or add a [sweep] section")
    _do_sweep(scenario, spec, _out_dir(args.out), args.workers)
    return EXIT_OK


def _trace_report(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING_FILE, f"trace file not found: {path}")
    try:
        return compute_metrics(read_trace_csv(p))
    except TraceParseError as exc:
        raise CliError(EXIT_BAD_TRACE, f"{path}: {exc}") from None


def cmd_metrics(args) -> int:
    report = _trace_report(args.trace)
    if args.out:
        write_report(report, _out_dir(args.out), title=f"trace {args.trace}")
    print(format_summary(report), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.trace:
        report = _trace_report(args.trace)
    elif args.scenario:
        report = compute_metrics(run(_load(args.scenario, args.seed)))
    else:
        raise CliError(EXIT_USAGE, "compare needs --trace or --scenario")
    try:
        cmp = compare_receivers(report, args.node_a, args.node_b)
    except UnknownNodeError as exc:
        raise CliError(EXIT_UNKNOWN_NODE, f"node {exc.args[0]!r} not found in trace") from None
    a, b = report.node(args.node_a), report.node(args.node_b)
    diff = "" if cmp.mean_interval_diff_us is None else f"{cmp.mean_interval_diff_us / 1000:.3f}"
    print(f"{args.node_a}: rx_ok={a.rx_ok} mean_update_ms={'' if a.mean_interval is None else f'{a.mean_interval / 1000:.3f}'}")
    print(f"{args.node_b}: rx_ok={b.rx_ok} mean_update_ms={'' if b.mean_interval is None else f'{b.mean_interval / 1000:.3f}'}")
    print(f"count_ratio={cmp.count_ratio:.4f} mean_update_diff_ms={diff}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvtl", description="Virtual traffic light broadcast simulator",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, out_required=True):
        p.add_argument("--scenario", required=out_required, help="scenario file")
        p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("run", help="run a scenario (or its [sweep]) and write trace + metrics",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    scenario_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sweep", help="<param>=<v1,v2,...>, e.g. receiver:monitor.x=0,20,40")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one trace per parameter value",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    scenario_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--sweep", help="<param>=<v1,v2,...>; default: the scenario's [sweep] section")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="compute metrics from a trace CSV",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="write metrics.csv and summary.txt here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="compare two receiving nodes",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--trace")
    scenario_args(p, out_required=False)
    p.add_argument("node_a")
    p.add_argument("node_b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"pvtl: error: {exc}", file=sys.stderr)
        return exc.code
    except Exception:
        log.exception("unexpected failure")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
