# src/runner/cli.py
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.runner.refine_study import refine_study
from src.runner.run_scenario import EXIT_CONFIG, EXIT_OK, run_scenario
from src.runner.scenario_loader import ScenarioLoader, load_scenario_file
from src.shared.errors import ConfigError, ValidationError
from src.shared.settings import Settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.runner.cli",
        description="Balayage experiments for Riesz kernels on finite grids.",
    )
    parser.add_argument("--tol-scale", type=float, default=None, help="multiply every tolerance by this factor")
    parser.add_argument("--output-root", type=str, default=None, help="directory for outputs/<scenario>/")
    parser.add_argument("--threads", type=int, default=None, help="worker pool bound (default POTENTIA_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true", help="library log messages at INFO")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("config", type=str, help="path to a scenario JSON file or a built-in scenario name")

    refine = sub.add_parser("refine", help="rerun a sphere-grid scenario at several grid sizes")
    refine.add_argument("config", type=str, help="path to a scenario JSON file or a built-in scenario name")
    refine.add_argument("--levels", type=int, nargs="*", default=[], help="sphere point counts, coarse to fine")

    sub.add_parser("suite", help="run every built-in scenario")
    sub.add_parser("list", help="list built-in scenarios")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = Settings().with_overrides(
            threads=args.threads, output_root=args.output_root, tol_scale=args.tol_scale
        )
    except ValueError as exc:
        print(f"[FAIL] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    loader = ScenarioLoader(settings.scenario_dir)

    if args.command == "list":
        for name in loader.list_names():
            print(name)
        return EXIT_OK

    if args.command == "run":
        return run_scenario(_resolve(args.config, loader), settings).exit_code

    if args.command == "refine":
        try:
            config = load_scenario_file(_resolve(args.config, loader))
            return refine_study(config, args.levels, settings).exit_code
        except (ConfigError, ValidationError) as exc:
            print(f"[FAIL] refine {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    return run_suite(loader, settings)


def run_suite(loader: ScenarioLoader, settings: Settings) -> int:
    """Every built-in scenario; the exit code is the worst one seen."""
    paths = loader.list_scenario_paths()
    if not paths:
        print(f"[WARN] no scenarios under {settings.scenario_dir}")
        return EXIT_OK
    worst = EXIT_OK
    summary = []
    for path in paths:
        run = run_scenario(path, settings)
        summary.append((run.scenario, run.exit_code))
        worst = max(worst, run.exit_code)
    for name, code in summary:
        tag = "[OK]" if code == EXIT_OK else "[FAIL]"
        print(f"{tag} suite {name}: exit {code}")
    print(f"[DONE] suite: {len(summary)} scenario(s), exit {worst}")
    return worst


def _resolve(config: str, loader: ScenarioLoader) -> Path:
    """A path when it exists, otherwise a built-in scenario name."""
    p = Path(config)
    if p.exists() or p.suffix == ".json":
        return p
    builtin = loader.scenario_path(config)
    return builtin if builtin.exists() else p


if __name__ == "__main__":
    sys.exit(main())
