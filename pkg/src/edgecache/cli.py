"""Command-line entry point: ``edgecache <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .caching import Policy
from .config import SCALES, ExperimentConfig, config_to_dict, load_config
from .experiments import ALL_POLICIES, run_beta_sweep, run_cache_ratio_sweep, run_drift_experiment, run_single
from .workload import read_trace, write_trace

log = logging.getLogger("edgecache")

POLICY_CHOICES = ["marl", "lru", "lfu", "fifo", "all"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file overlaid on the scale preset")
    common.add_argument("--scale", choices=sorted(SCALES), default="desk")
    common.add_argument("--seed", type=int, default=None,
                        help="base seed; sweeps use seed, seed+1, ... (one per configured seed)")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--policy", choices=POLICY_CHOICES, default="all")
    common.add_argument("--cycles", type=int, default=None, help="override n_cycles")
    common.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("--no-plot", action="store_true", help="skip SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="edgecache", description="Edge caching simulator and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep-beta", parents=[common], help="eta against the Zipf exponent")
    sub.add_parser("sweep-cache", parents=[common], help="eta against the cache ratio")
    sub.add_parser("drift", parents=[common], help="running-mean eta under popularity drift")
    sub.add_parser("train", parents=[common], help="one run per policy with logs, trace and checkpoints")
    rp = sub.add_parser("replay", parents=[common], help="run policies on a recorded request trace")
    rp.add_argument("--trace", type=Path, required=True, help="CSV with cycle,user_id,file_id")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.scale) if args.config else SCALES[args.scale]()
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise SystemExit("--seed must be non-negative")
        changes["seeds"] = tuple(args.seed + k for k in range(len(cfg.seeds)))
    if args.cycles is not None:
        changes["n_cycles"] = args.cycles
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    return cfg.replace(**changes) if changes else cfg


def policies_of(args):
    return None if args.policy == "all" else [args.policy]


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_sweep(args, cfg: ExperimentConfig, kind: str) -> None:
    if kind == "beta":
        result, stem, xlabel = run_beta_sweep(cfg, policies_of(args)), "sweep_beta", "Zipf exponent"
    else:
        result, stem, xlabel = run_cache_ratio_sweep(cfg, policies_of(args)), "sweep_cache", "cache ratio"
    result.write_csv(args.out / f"{stem}.csv")
    if not args.no_plot:
        result.plot(args.out / f"{stem}.svg", xlabel)
    for a in result.axis_values():
        means = ", ".join(f"{p.value}={result.mean(a, p):.2f}" for p in result.policies())
        print(f"{result.axis_name}={a:g}: {means}")


def cmd_drift(args, cfg: ExperimentConfig) -> None:
    result = run_drift_experiment(cfg, policies_of(args))
    result.write_csv(args.out / "drift.csv", args.out / "drift_per_seed.csv")
    result.write_epochs(args.out / "drift_epochs.csv")
    if not args.no_plot:
        result.plot(args.out / "drift.svg")
    for p in dict.fromkeys(p for p, _ in result.eta_bar):
        print(f"{p.value}: final eta_bar={result.mean_series(p)[-1]:.2f}")


def _policy_list(args):
    return list(ALL_POLICIES) if args.policy == "all" else [args.policy]


def cmd_train(args, cfg: ExperimentConfig) -> None:
    seed = cfg.seeds[0]
    rows, trace_written = [], False
    for policy in _policy_list(args):
        ckpt = args.out / "checkpoints"
        is_marl = Policy(policy) is Policy.MARL
        if is_marl:
            ckpt.mkdir(parents=True, exist_ok=True)
        r = run_single(cfg, policy, seed, keep_state=True, checkpoint_dir=ckpt if is_marl else None)
        rows += [(t, r.policy.value, repr(float(e))) for t, e in enumerate(r.eta)]
        if is_marl:
            _write_rows(args.out / "training_log.csv", ["cycle", "reward", "delta", "eta"],
                        [(e.cycle, repr(e.reward), repr(e.delta), repr(e.eta)) for e in r.training_log])
        if not trace_written:
            write_trace(args.out / "trace.csv", r.env.trace_rows())
            trace_written = True
        print(f"{r.policy.value}: evaluation eta={r.eval_eta:.2f} over {r.n_eval or len(r.eta)} cycles")
    _write_rows(args.out / "eta.csv", ["cycle", "policy", "eta"], rows)


def cmd_replay(args, cfg: ExperimentConfig) -> None:
    trace = read_trace(args.trace)
    cycles = sorted(trace)
    if cycles != list(range(len(cycles))):
        raise SystemExit(f"{args.trace}: cycles must run 0..n-1 without gaps")
    cfg = cfg.replace(n_cycles=len(cycles) - 1)
    rows = []
    for policy in _policy_list(args):
        r = run_single(cfg, policy, cfg.seeds[0], replay=trace)
        rows += [(t, r.policy.value, repr(float(e))) for t, e in enumerate(r.eta)]
        print(f"{r.policy.value}: evaluation eta={r.eval_eta:.2f}")
    _write_rows(args.out / "replay.csv", ["cycle", "policy", "eta"], rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"edgecache: bad configuration: {exc}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    log.info("config: %s", config_to_dict(cfg))
    if args.command == "sweep-beta":
        cmd_sweep(args, cfg, "beta")
    elif args.command == "sweep-cache":
        cmd_sweep(args, cfg, "cache")
    elif args.command == "drift":
        cmd_drift(args, cfg)
    elif args.command == "train":
        cmd_train(args, cfg)
    else:
        cmd_replay(args, cfg)
    return 0
