"""Command-line entry point: ``subthz-sounder <stage> [options]``.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 numeric or validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import __version__
from .config import ConfigError, Scenario, load_scenario, preset_path
from .workflow import STAGES, StageDependencyError, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERIC = 4

_HELP = {
    "trace": "trace propagation paths (paths.csv/json)",
    "simulate": "simulate raw IQ captures for every angle bin",
    "process": "turn IQ captures into calibrated CIRs",
    "analyze": "noise floor, path extraction, rose and gain report",
    "sweep": "strongest-path gain against distance",
    "plot": "render CIR overlay, rose and sweep figures as SVG",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="scenario YAML (default: bundled street-canyon preset)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--band", choices=["158", "300", "both"], default="both")
    common.add_argument("--scale", choices=["desk", "full"], help="override the scenario scale")
    common.add_argument("--out", metavar="DIR", help="run directory (default: scenario output_dir)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit timings and SVG dates so reruns are byte-identical")

    parser = argparse.ArgumentParser(prog="subthz-sounder", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for stage in STAGES:
        p = sub.add_parser(stage, parents=[common], help=_HELP[stage])
        if stage == "sweep":
            p.add_argument("--los-only", action="store_true", help="trace the direct path only")
            p.add_argument("--noiseless", action="store_true", help="disable receiver noise")
    return parser


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.config or preset_path("canyon"))
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**63:
            raise ConfigError(f"--seed must be in [0, 2^63), got {args.seed}")
        changes["seed"] = args.seed
    if args.scale is not None:
        if args.scale not in scenario.scales:
            raise ConfigError(f"scale {args.scale!r} is not defined in the scenario")
        changes["scale"] = args.scale
    return dataclasses.replace(scenario, **changes) if changes else scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _scenario(args)
        bands = sorted(scenario.bands) if args.band == "both" else [args.band]
        for band in bands:
            if band not in scenario.bands:
                raise ConfigError(f"band {band!r} is not defined in the scenario")
        options = {}
        if args.stage == "sweep":
            options = dict(los_only=args.los_only, noiseless=args.noiseless)
        manifest = run_stage(args.stage, scenario, bands, args.out,
                             timestamp=not args.no_timestamp, **options)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageDependencyError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (ValueError, ArithmeticError) as exc:
        print(f"{args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in manifest["stages"][args.stage]["outputs"]:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
