"""Command line entry point.

Subcommands:

* ``generate``: write a scene JSON for a config and seed.
* ``run``: simulate trials for a list of seeds, write logs, bookkeeping
  rows, and a metrics report.
* ``replay``: recompute metrics from a bookkeeping table (the bundled
  18-trial field reference by default).

Exit codes: 0 success, 2 usage errors, 3 configuration or model errors,
4 data errors in replayed tables.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import gpr, metrics, teaching
from .config import ConfigError, config_to_json, default_config, load_config
from .orchestrator import run_trial, trial_log_to_json
from .scene import generate_scene, scene_to_json

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4

THREADS_ENV = "ROBOFRUIT_SIM_THREADS"


def _parse_seeds(text: str) -> list:
    """Seed list syntax: comma separated values and/or start:stop ranges."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":", 1)
            lo, hi = int(lo), int(hi)
            if hi <= lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        cap = int(env)
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def _resolve_model(cfg):
    g = cfg.gpr
    if g.mode == "off":
        return None
    if g.mode == "file":
        try:
            with open(g.path, encoding="utf-8") as fh:
                return gpr.model_from_json(fh.read())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load corrector model: {exc}") from exc
    return teaching.fit_corrector(g.teach_samples, cfg.trial, cfg.scene,
                                  cfg.rig, seed=g.teach_seed,
                                  sigma0_sq=g.sigma0_sq, jitter=g.jitter)


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    scene = generate_scene(cfg.scene, args.seed)
    text = scene_to_json(scene) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    model = _resolve_model(cfg)

    def one(seed: int):
        scene = generate_scene(cfg.scene, seed)
        return run_trial(scene, cfg.trial, seed, correction=model, rig=cfg.rig)

    workers = _worker_count(len(seeds))
    if workers == 1:
        logs = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(one, seeds))

    rows = [metrics.TrialCounts.from_log(log, i + 1) for i, log in enumerate(logs)]
    m = metrics.compute_metrics(rows)
    report = metrics.emit_report(m, args.format)
    if args.timestamps:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        report = f"# generated_at {stamp}\n{report}" if args.format != "json" else report

    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trials.jsonl", "w", encoding="utf-8") as fh:
            for log in logs:
                fh.write(trial_log_to_json(log) + "\n")
        (out / "attempts.csv").write_text(metrics.counts_to_csv(rows),
                                          encoding="utf-8")
        ext = {"json": "json", "csv": "csv", "text": "txt"}[args.format]
        (out / f"report.{ext}").write_text(report, encoding="utf-8")
    sys.stdout.write(report if report.endswith("\n") else report + "\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    m = metrics.replay_reference_table(args.table)
    sys.stdout.write(metrics.emit_report(m, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robofruit-sim",
        description="Deterministic strawberry-harvest simulator.")
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the default config JSON and exit")
    sub = parser.add_subparsers(dest="command")

    p_gen = sub.add_parser("generate", help="generate a scene JSON")
    p_gen.add_argument("--config", help="config JSON path (defaults built in)")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", help="output path (stdout when omitted)")
    p_gen.set_defaults(func=cmd_generate)

    p_run = sub.add_parser("run", help="run harvest trials")
    p_run.add_argument("--config", help="config JSON path (defaults built in)")
    p_run.add_argument("--seeds", required=True,
                       help="e.g. 1,2,3 or 0:100 or 5,10:20")
    p_run.add_argument("--out-dir", help="directory for logs and reports")
    p_run.add_argument("--format", choices=metrics.REPORT_FORMATS, default="text")
    p_run.add_argument("--timestamps", action="store_true",
                       help="stamp reports (off by default for reproducibility)")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("replay", help="recompute metrics from a table")
    p_rep.add_argument("--table", help="bookkeeping CSV (bundled table by default)")
    p_rep.add_argument("--format", choices=metrics.REPORT_FORMATS, default="text")
    p_rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(config_to_json(default_config()))
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (metrics.ParseError, metrics.InconsistentTotals) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
