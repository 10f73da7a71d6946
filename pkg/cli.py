"""Command line for the circle IFS toolkit: run, sweep, verify and catalog."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from config.logging_config import configure_logging
from models.errors import InvalidSystem, PreconditionViolation
from models.schemas import RunConfig
from services.catalog_service import get_catalog_service
from services.report_service import dumps, get_report_service
from services.run_service import CATALOG_PREFIX, ExitCode, TimedRun, exit_code, get_run_service

logger = logging.getLogger(__name__)

INPUT_ERRORS = (ValidationError, InvalidSystem, PreconditionViolation, ValueError, OSError)
CONFIG_KEYS = ("rng_seed", "expect")


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def build_config(source: str, overrides: List[str], expect: Optional[str] = None) -> RunConfig:
    """A RunConfig from a JSON file or ``catalog:<name>``, with ``key=value`` overrides on top."""
    if source.startswith(CATALOG_PREFIX):
        data: Dict[str, Any] = {"system": source, "probe": {}}
    else:
        data = json.loads(Path(source).read_text())
        data.setdefault("probe", {})

    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise PreconditionViolation(f"override {item!r} is not of the form key=value")
        if key == "probe":
            data["probe"]["name"] = raw
        elif key in CONFIG_KEYS:
            data[key] = _parse_value(raw) if key == "rng_seed" else raw
        else:
            data["probe"][key] = _parse_value(raw)
    if expect is not None:
        data["expect"] = expect
    return RunConfig.model_validate(data)


def _emit(run: TimedRun, report_path: Optional[str], clouds_path: Optional[str],
          certificate_path: Optional[str]) -> None:
    reports = get_report_service()
    config = run.report.config
    report_path = report_path or config.output.report
    clouds_path = clouds_path or config.output.clouds
    if report_path:
        reports.write_report(run, report_path)
    else:
        sys.stdout.write(dumps(run.report))
    if clouds_path and run.clouds:
        reports.write_clouds(run.clouds, clouds_path)
    if certificate_path:
        if run.certificate is None:
            logger.warning("✗ probe %s produces no certificate", config.probe.name.value)
        else:
            reports.save_certificate(run.certificate, certificate_path)


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args.config, args.overrides, args.expect)
    run = get_run_service().execute(config)
    _emit(run, args.report, args.clouds, args.certificate)
    return exit_code(run.report)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = build_config(args.config, args.overrides, args.expect)
    runs = get_run_service().sweep(config, args.parameter, [float(v) for v in args.values])
    reports = get_report_service()
    if args.output:
        target = Path(args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as f:
            reports.write_sweep(args.parameter, runs, f)
    else:
        reports.write_sweep(args.parameter, runs, sys.stdout)
    return max(exit_code(run.report) for _, run in runs)


def cmd_verify(args: argparse.Namespace) -> int:
    reports = get_report_service()
    result = reports.replay(reports.load_certificate(args.certificate))
    sys.stdout.write(dumps(result))
    return ExitCode.EXPECTED if result.passed else ExitCode.UNEXPECTED


def cmd_catalog_list(args: argparse.Namespace) -> int:
    entries = [e.model_dump(mode="json") for e in get_catalog_service().list_entries()]
    sys.stdout.write(json.dumps(entries, sort_keys=True, indent=2) + "\n")
    return ExitCode.EXPECTED


def cmd_catalog_run(args: argparse.Namespace) -> int:
    service = get_run_service()
    codes, summary = [], []
    for index, config in enumerate(service.catalog_configs(args.name, args.rng_seed)):
        run = service.execute(config)
        if args.report_dir:
            get_report_service().write_report(run, str(Path(args.report_dir) / f"{index:02d}-{config.probe.name.value}.json"))
        codes.append(exit_code(run.report))
        summary.append({
            "probe": config.probe.name.value,
            "verdict": run.report.outcome.verdict,
            "expected": run.report.expected,
            "matched": run.report.matched,
            "metric": run.report.outcome.metric,
        })
    sys.stdout.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return max(codes, default=ExitCode.EXPECTED)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser("circle-ifs", description="Probes and certificates for iterated function systems on the circle.")
    p.add_argument("--log-level", default=None, help="Override CIRCLE_IFS_LOG_LEVEL.")
    commands = p.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one probe and score its verdict.")
    run.add_argument("config", help="JSON config file or catalog:<name>.")
    run.add_argument("overrides", nargs="*", help="key=value overrides (probe=<name>, depth=20, ...).")
    run.add_argument("--report", default=None, help="JSON report path; stdout when absent.")
    run.add_argument("--clouds", default=None, help="CSV path for point clouds.")
    run.add_argument("--certificate", default=None, help="Write the probe's certificate here.")
    run.add_argument("--expect", default=None, help="Expected verdict.")
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="Run a probe over values of one numeric parameter.")
    sweep.add_argument("config", help="JSON config file or catalog:<name>.")
    sweep.add_argument("overrides", nargs="*", help="key=value overrides.")
    sweep.add_argument("--parameter", required=True, help="Numeric probe parameter to vary.")
    sweep.add_argument("--values", nargs="*", default=[], help="Values to run.")
    sweep.add_argument("--output", default=None, help="CSV path; stdout when absent.")
    sweep.add_argument("--expect", default=None, help="Expected verdict for every run.")
    sweep.set_defaults(handler=cmd_sweep)

    verify = commands.add_parser("verify", help="Replay a certificate file.")
    verify.add_argument("certificate", help="Certificate JSON file.")
    verify.set_defaults(handler=cmd_verify)

    catalog = commands.add_parser("catalog", help="Named systems.")
    catalog_commands = catalog.add_subparsers(dest="catalog_command", required=True)
    listing = catalog_commands.add_parser("list", help="Print the catalog as JSON.")
    listing.set_defaults(handler=cmd_catalog_list)
    replay = catalog_commands.add_parser("run", help="Reproduce every expected verdict of a system.")
    replay.add_argument("name")
    replay.add_argument("--rng-seed", type=int, default=0)
    replay.add_argument("--report-dir", default=None)
    replay.set_defaults(handler=cmd_catalog_run)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return int(args.handler(args))
    except INPUT_ERRORS as e:
        logger.error("✗ input error: %s", e)
        return int(ExitCode.INPUT)


if __name__ == "__main__":
    sys.exit(main())
