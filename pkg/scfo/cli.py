"""Command-line runner for simulated scenarios.

Usage: ``scfo run <config.json> [--seed N] [--iters N] [--out DIR] [--sweep key=a..b] [--jobs N] [-v]``
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .core import ProblemValidationError
from .simharness import ScenarioConfig, Trajectory, run_scenario

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
OUT_DIR_ENV = "SCFO_OUT_DIR"


def parse_sweep(text: str) -> tuple[str, list[Any]]:
    """``key=a..b`` sweeps the integers a to b inclusive, ``key=v1,v2,...`` the listed JSON values."""
    key, sep, spec = text.partition("=")
    if not sep or not key or not spec:
        raise ValueError(f"sweep must look like key=a..b or key=v1,v2, got {text!r}")
    if ".." in spec:
        start, _, stop = spec.partition("..")
        first, last = int(start), int(stop)
        if last < first:
            raise ValueError(f"empty sweep range {spec!r}")
        return key, list(range(first, last + 1))
    return key, [json.loads(item) for item in spec.split(",")]


def load_config(path: Path, overrides: dict[str, Any]) -> ScenarioConfig:
    with path.open() as file:
        data = json.load(file)
    if not isinstance(data, dict):
        raise ProblemValidationError(["config: top level must be an object"])
    data.update(overrides)
    return ScenarioConfig.from_dict(data)


def format_value(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    return str(value)


def write_trajectory(trajectory: Trajectory, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(trajectory.columns)
        for row in trajectory.rows:
            writer.writerow([format_value(v) for v in row])


def aggregate(summaries: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Statistics of a sweep across runs."""
    final_costs = np.array([s["final_cost"] for s in summaries])
    gaps = np.array([s["oracle_gap"] for s in summaries])
    names = list(summaries[0]["violation_integrals"])
    return {
        "runs": len(summaries),
        "final_cost_mean": float(final_costs.mean()),
        "final_cost_std": float(final_costs.std()),
        "oracle_gap_mean": float(gaps.mean()),
        "oracle_gap_max": float(gaps.max()),
        "violation_integral_max": {n: max(s["violation_integrals"][n] for s in summaries) for n in names},
        "slack_exceedances": {n: sum(s["slack_exceedances"][n] for s in summaries) for n in names},
    }


def output_dir(option: Optional[str]) -> Path:
    return Path(option or os.environ.get(OUT_DIR_ENV) or ".")


def _fail(code: int, errors: Sequence[str]) -> int:
    print(json.dumps({"errors": list(errors)}), file=sys.stderr)
    return code


def run(args: argparse.Namespace) -> int:
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iters is not None:
        overrides["iterations"] = args.iters
    try:
        sweep_key, sweep_values = parse_sweep(args.sweep) if args.sweep else (None, [None])
        configs = []
        for value in sweep_values:
            run_overrides = dict(overrides) if sweep_key is None else {**overrides, sweep_key: value}
            configs.append(load_config(Path(args.config), run_overrides))
    except ProblemValidationError as error:
        return _fail(EXIT_INVALID, error.errors)
    except OSError as error:
        return _fail(EXIT_IO, [f"io: {error}"])
    except (ValueError, KeyError, TypeError) as error:
        return _fail(EXIT_INVALID, [f"config: {error}"])

    _log.info("running %d scenario(s) of plant %s", len(configs), configs[0].plant)
    try:
        if len(configs) == 1:
            trajectories = [run_scenario(configs[0])]
        else:
            trajectories = Parallel(n_jobs=args.jobs)(delayed(run_scenario)(c) for c in configs)
    except ProblemValidationError as error:
        return _fail(EXIT_INVALID, error.errors)

    out = output_dir(args.out)
    try:
        for value, config, trajectory in zip(sweep_values, configs, trajectories):
            folder = out if sweep_key in (None, "seed") else out / f"{sweep_key}={value}"
            write_trajectory(trajectory, folder / f"trajectory_{config.seed}.csv")
        summaries = [t.summary for t in trajectories]
        document = summaries[0] if sweep_key is None else {
            "sweep": {"key": sweep_key, "values": sweep_values},
            "aggregate": aggregate(summaries),
            "runs": summaries,
        }
        out.mkdir(parents=True, exist_ok=True)
        with (out / "summary.json").open("w") as file:
            json.dump(document, file, indent=2)
    except OSError as error:
        return _fail(EXIT_IO, [f"io: {error}"])
    _log.info("results written to %s", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scfo", description="Safe experimental optimization scenarios.")
    commands = parser.add_subparsers(dest="command", required=True)
    run_parser = commands.add_parser("run", help="run a scenario configuration")
    run_parser.add_argument("config", help="path of the JSON scenario configuration")
    run_parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run_parser.add_argument("--iters", type=int, default=None, help="override the iteration count")
    run_parser.add_argument("--out", default=None, help=f"output directory, defaults to ${OUT_DIR_ENV} or .")
    run_parser.add_argument("--sweep", default=None, help="sweep one key, e.g. seed=1..50 or alpha_sigma=0.05,0.15")
    run_parser.add_argument("--jobs", type=int, default=1, help="parallel runs of a sweep")
    run_parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    run_parser.set_defaults(handler=run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    code: int = args.handler(args)
    return code


if __name__ == "__main__":
    sys.exit(main())
