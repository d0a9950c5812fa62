"""Command-line experiment runner.

    fedgroup run --config exp.cfg [--seed N] [--strategy S] [--case C] [--out PATH]
    fedgroup sweep --config exp.cfg --strategies fedavg,fldg --cases 1,2 --seeds 0..9
    fedgroup grouping-report --config exp.cfg

Each run writes one CSV: a ``# config:`` echo line, a header, then one row
per round, flushed as the round finishes.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .clustering import purity
from .config import ExperimentConfig, parse_config, parse_strategy
from .data import NonIidCase
from .errors import ConfigurationError, FedGroupError
from .orchestrator import GROUPED, RoundRecord, group_devices, run_experiment, setup

log = logging.getLogger("fedgroup")

CSV_HEADER = ("round,strategy,case,selected_count,test_accuracy,test_loss,"
              "uplink_bytes,downlink_bytes")


def csv_row(cfg: ExperimentConfig, rec: RoundRecord) -> str:
    return (f"{rec.round},{cfg.strategy},{cfg.case},{len(rec.selected)},"
            f"{rec.test_accuracy!r},{rec.test_loss!r},{rec.uplink_bytes},{rec.downlink_bytes}\n")


def run_to_csv(cfg: ExperimentConfig, out: str | Path | None = None,
               threads: int | None = None) -> list[RoundRecord]:
    """Run ``cfg`` and stream its metrics to ``out`` (defaults to ``cfg.out``)."""
    path = Path(out if out is not None else cfg.out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.comment_line() + "\n")
        fh.write(CSV_HEADER + "\n")
        fh.flush()

        def emit(rec):
            fh.write(csv_row(cfg, rec))
            fh.flush()

        return run_experiment(cfg, on_round=emit, threads=threads)


def summary(cfg: ExperimentConfig, records: list[RoundRecord]) -> str:
    head = f"{cfg.strategy} {cfg.case} seed={cfg.seed}"
    if not records:
        return f"{head}: no rounds run"
    last = records[-1]
    best = max(r.test_accuracy for r in records)
    return (f"{head}: final accuracy {last.test_accuracy:.4f} after {last.round} rounds "
            f"(best {best:.4f}, loss {last.test_loss:.4f})")


# --- argument parsing helpers ------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """``0..9`` (inclusive range) or a comma list such as ``1,4,7``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"seeds: expected 'a..b' or a comma list, got {text!r}") from None


def parse_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def sweep_path(base: Path, strategy: str, case: str, seed: int) -> Path:
    return base.with_name(f"{base.stem}_{strategy}_{case}_s{seed}.csv")


def _sweep_job(args):
    cfg, path = args
    records = run_to_csv(cfg, path)
    return summary(cfg, records)


# --- subcommands -------------------------------------------------------------

def _overrides(args) -> dict:
    return {"seed": args.seed, "strategy": args.strategy, "case": args.case, "out": args.out}


def cmd_run(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    records = run_to_csv(cfg)
    print(summary(cfg, records))
    return 0


def cmd_sweep(args) -> int:
    base_cfg = parse_config(args.config, {"out": args.out})
    strategies = [parse_strategy(s) for s in parse_list(args.strategies)]
    cases = [NonIidCase.parse(c).value for c in parse_list(args.cases)]
    seeds = parse_seeds(args.seeds)
    if not strategies or not cases or not seeds:
        raise ConfigurationError("sweep needs at least one strategy, case and seed")
    base = Path(base_cfg.out)
    jobs = []
    for strategy, case, seed in itertools.product(strategies, cases, seeds):
        # rebuild through parse_config so every combination is validated
        cfg = parse_config(args.config, {"out": args.out, "strategy": strategy,
                                         "case": case, "seed": seed})
        jobs.append((cfg, sweep_path(base, strategy, case, seed)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            lines = list(pool.map(_sweep_job, jobs))
    else:
        lines = [_sweep_job(j) for j in jobs]
    for (_, path), line in zip(jobs, lines):
        print(f"{line} -> {path}")
    return 0


def cmd_grouping_report(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    if cfg.strategy not in GROUPED:
        # the report is about device grouping; fall back to plain features
        cfg = parse_config(args.config, {**_overrides(args), "strategy": "fldg"})
    s = setup(cfg)
    groups = group_devices(s)
    labels = np.array([d.majority_label() for d in s.devices])
    mode = f"lsh h={cfg.h} r={cfg.r!r}" if cfg.strategy == "fldg-l" else "plain features"
    print(f"{cfg.N} devices, {cfg.K} groups, {cfg.case}, {mode}")
    for g, members in enumerate(groups.groups()):
        counts = np.bincount(labels[members], minlength=cfg.classes)
        mix = " ".join(f"{c}:{n}" for c, n in enumerate(counts) if n)
        print(f"group {g}: devices {','.join(str(int(m)) for m in members)} labels {mix}")
    print(f"purity {purity(groups, labels):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedgroup", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every round")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, single=True):
        sp.add_argument("--config", help="key=value config file (defaults apply if omitted)")
        if single:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--strategy")
            sp.add_argument("--case")
        sp.add_argument("--out", help="CSV path (sweep uses it as a name prefix)")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run every strategy x case x seed combination")
    common(sweep, single=False)
    sweep.add_argument("--strategies", required=True, help="comma list, e.g. fedavg,fldg")
    sweep.add_argument("--cases", required=True, help="comma list, e.g. 1,2,iid")
    sweep.add_argument("--seeds", default="0", help="range 0..9 or comma list")
    sweep.add_argument("--jobs", type=int, default=1, help="experiments to run at once")
    sweep.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("grouping-report", help="group devices and report purity")
    common(rep)
    rep.set_defaults(func=cmd_grouping_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"fedgroup: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FedGroupError, OSError) as exc:
        print(f"fedgroup: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
