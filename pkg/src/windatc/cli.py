"""Command line entry point: ``windatc <study> [--config ...] [--out ...]``.

Exit codes: 0 when every solve converged, 1 when any solve failed (or a
study produced no rows), 2 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, write_scenarios
from .grid_model import CaseFormatError
from .report import emit_outputs
from .studies import (AtcRunner, multi_farm_specs, run_all, run_capacity_sweep,
                      run_correlation_sweep, run_integration_method_study,
                      run_location_study, run_time_series, scenarios_for)

log = logging.getLogger("windatc")

STUDIES = ["correlation", "capacity", "location", "method", "timeseries", "all"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="study TOML file (default: bundled IEEE 39-bus study)")
    common.add_argument("--out", type=Path, default=Path("results"),
                        help="output directory (default: ./results)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--resolution", type=int, default=None,
                        help="time-series step in minutes (default from config)")
    common.add_argument("--verbose", action="store_true",
                        help="log progress and write per-solve iteration traces")

    parser = argparse.ArgumentParser(
        prog="windatc",
        description="Available transfer capability studies with correlated wind power.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "correlation": "sweep the spatial correlation coefficient",
        "capacity": "sweep wind farm capacity and detect the ATC plateau",
        "location": "compare farm connection buses",
        "method": "wind replacing sending- or receiving-side conventional capacity",
        "timeseries": "ATC over one day at a fixed step",
        "all": "run every study",
        "scenarios": "write the generated wind speed scenarios only",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.resolution is not None:
        config = config.replace(resolution_min=args.resolution)
    out = args.out

    if args.command == "scenarios":
        out.mkdir(parents=True, exist_ok=True)
        path = out / "scenarios.csv"
        write_scenarios(scenarios_for(config, len(config.farms)), path)
        print(path)
        return 0

    runner = AtcRunner.from_config(config, trace_dir=out / "traces" if args.verbose else None)
    cmd = args.command
    if cmd == "all":
        results = run_all(config, runner)
    elif cmd == "correlation":
        results = [run_correlation_sweep(config, runner=runner)]
        if len(config.multi_farm_buses) >= 2:
            results.append(run_correlation_sweep(config, multi_farm_specs(config),
                                                 "correlation_multi", runner))
    elif cmd == "capacity":
        results = [run_capacity_sweep(config, runner=runner)]
    elif cmd == "location":
        results = [run_location_study(config, runner=runner)]
    elif cmd == "method":
        results = [run_integration_method_study(config, runner=runner)]
    else:
        results = [run_time_series(config, runner=runner)]

    ok = True
    for res in results:
        for path in emit_outputs(res, out):
            print(path)
        failed = sum(r.status != "converged" for r in res.rows)
        if failed or not res.rows:
            ok = False
            log.warning("%s: %d of %d solves did not converge", res.study, failed, len(res.rows))
        if res.study == "capacity_sweep":
            plateau = res.summary.get("plateau_capacity_mw")
            log.info("capacity plateau: %s", "none" if plateau is None else f"{plateau:g} MW")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, CaseFormatError, OSError) as exc:
        print(f"windatc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
