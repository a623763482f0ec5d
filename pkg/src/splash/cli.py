"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench.config import ExperimentConfig, load_config
from .bench.rate import rate_experiment
from .bench.report import ExperimentResult, MetricRow, dat_table, write_outputs
from .bench.tasks import run_task
from .bench.toy import VARIANTS, ranking_checks, toy_experiment
from .dataio import open_text, parse_bow, parse_libsvm, parse_ratings
from .errors import ConfigError, DataError, FormatError

log = logging.getLogger("splash")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def _threads(value: str):
    if value == "auto":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    return n


def _u64(value: str) -> int:
    n = int(value)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML experiment config")
    common.add_argument("--seed", type=_u64)
    common.add_argument("--threads", type=_threads, help="worker count or 'auto'")
    common.add_argument("--iterations", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--format", choices=("libsvm", "ratings", "bow"))
    common.add_argument("--log-level", default="WARNING")
    common.add_argument(
        "--record-timing", action="store_true", help="fill elapsed_ms in metrics.csv"
    )
    parser = argparse.ArgumentParser(prog="splash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("toy", parents=[common], help="compare combine strategies on a 2-d problem")
    sub.add_parser("rate", parents=[common], help="Monte-Carlo MSE-vs-sample-size lab")
    run = sub.add_parser("run", parents=[common], help="train one task")
    run.add_argument("task", choices=("lr", "cf", "lda"))
    tune = sub.add_parser("tune", parents=[common], help="train one task with the autotuner")
    tune.add_argument("task", choices=("lr", "cf", "lda"))
    pc = sub.add_parser("parse-check", parents=[common], help="validate a data file")
    pc.add_argument("path", type=Path)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    threads = args.threads
    env = os.environ.get("SPLASH_THREADS")
    if env:
        try:
            threads = _threads(env)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"SPLASH_THREADS: {exc}") from None
    return cfg.with_overrides(
        seed=args.seed,
        threads=threads,
        iterations=args.iterations,
        out=str(args.out) if args.out else None,
        format=args.format,
        record_timing=True if args.record_timing else None,
    )


def cmd_toy(cfg: ExperimentConfig) -> list:
    seeds = [cfg.seed + k for k in range(cfg.toy_seeds)]
    summary = toy_experiment(seeds, cfg.toy_n, cfg.toy_m, cfg.toy_stepsize)
    summary["checks"] = ranking_checks(summary)
    rows = [
        MetricRow(i, f"L_{v}", run["losses"][v], cfg.toy_m)
        for i, run in enumerate(summary["runs"])
        for v in VARIANTS
    ]
    rows += [MetricRow(0, f"median_L_{v}", summary["median_loss"][v], cfg.toy_m) for v in VARIANTS]
    result = ExperimentResult("toy", cfg.to_dict(), metrics=rows, extra=summary)
    pts = []
    for run in summary["runs"]:
        for v in VARIANTS:
            sol = run["solutions"][v]
            for w in sol if isinstance(sol[0], list) else [sol]:
                pts.append((run["seed"], v, w[0], w[1], run["losses"][v]))
    dat = {"toy_solutions.dat": dat_table(("seed", "variant", "w1", "w2", "loss"), pts)}
    return write_outputs(Path(cfg.out), "toy", result, cfg.record_timing, dat)


def cmd_rate(cfg: ExperimentConfig) -> list:
    table = rate_experiment(
        cfg.rate_T, cfg.rate_m, cfg.rate_n, cfg.rate_trials, cfg.seed, cfg.rate_budget_seconds
    )
    rows = [
        MetricRow(c["T"], f"mse_m{c['m']}_n{c['n']}", c["mse"], c["m"]) for c in table["cells"]
    ]
    rows.append(MetricRow(0, "slope", table["slope"], 0))
    result = ExperimentResult("rate", cfg.to_dict(), metrics=rows, extra=table)
    dat = {
        "rate.dat": dat_table(
            ("T", "m", "n", "Tmn", "mse", "se"),
            [(c["T"], c["m"], c["n"], c["Tmn"], c["mse"], c["se"]) for c in table["cells"]],
        )
    }
    return write_outputs(Path(cfg.out), "rate", result, cfg.record_timing, dat)


def cmd_run(cfg: ExperimentConfig, task: str, name: str) -> list:
    result = run_task(task, cfg)
    dat = {
        f"{task}_metric.dat": dat_table(
            ("iteration", "value", "baseline", "m"),
            [
                (r.iteration, r.value, b.value, r.m)
                for r, b in zip(result.metrics, result.baseline)
            ],
        )
    }
    return write_outputs(Path(cfg.out), name, result, cfg.record_timing, dat)


def cmd_parse_check(cfg: ExperimentConfig, path: Path) -> dict:
    fmt = cfg.format
    if fmt is None:
        raise ConfigError("parse-check needs --format")
    if not path.exists():
        raise DataError(f"{path} not found")
    parser = {"libsvm": parse_libsvm, "ratings": parse_ratings, "bow": parse_bow}[fmt]
    with open_text(path) as fh:
        parsed = parser(fh)
    if fmt == "bow":
        return {"format": fmt, "D": parsed.D, "W": parsed.W, "triples": len(parsed),
                "tokens": parsed.num_tokens}
    return {"format": fmt, "records": len(parsed)}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "toy":
            written = cmd_toy(cfg)
        elif args.command == "rate":
            written = cmd_rate(cfg)
        elif args.command == "run":
            written = cmd_run(cfg, args.task, args.task)
        elif args.command == "tune":
            written = cmd_run(cfg.with_overrides(threads="auto"), args.task, "tune")
        else:
            print(json.dumps(cmd_parse_check(cfg, args.path), sort_keys=True))
            return EXIT_OK
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, FormatError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.error("failed: %s", exc, exc_info=log.isEnabledFor(logging.DEBUG))
        return EXIT_RUNTIME
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
