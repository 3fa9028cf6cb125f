"""Command-line entry point: ``python -m deqn <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import phy
from .agent import DeqnAgent, DivergenceError, save_agent
from .config import ConfigError
from .harness import (
    ExperimentConfig,
    config_from_mapping,
    load_config,
    make_agent,
    run_experiment,
    run_pu_only_baseline,
    run_toy_mdp,
    timing_probe,
    toy_mdp_oracle,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2

CLI_AGENTS = ("deqn1", "deqn2", "random", "threshold", "dqn0")


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "agent", None):
        overrides["agent_kind"] = args.agent
    if getattr(args, "samples", None) is not None:
        overrides["total_samples"] = args.samples
    return config_from_mapping(overrides, base=config) if overrides else config


def _print(msg: str) -> None:
    print(msg, flush=True)


def cmd_run(args) -> int:
    config = _resolve_config(args)
    out = Path(args.out)
    agents = [make_agent(config, n) for n in range(config.scenario.num_sus)]

    def progress(q, result):
        if not args.quiet:
            _print(f"round {q + 1}/{config.num_rounds}  eps={result.epsilons[0]:.4f}  "
                   f"reward={result.mean_rewards.mean():+.3f}")

    metrics = run_experiment(config, out_dir=out, write_trace=not args.no_trace, agents=agents, progress=progress)
    for n, ag in enumerate(agents):
        if isinstance(ag, DeqnAgent):
            save_agent(ag, out / f"agent_su{n}.npz")
    tail = slice(-min(20, len(metrics.rounds)), None)
    _print(f"final PU throughput {metrics.pu_throughput[tail].mean() / 1e6:.2f} Mb/s, "
           f"SU throughput {metrics.su_throughput[tail].mean() / 1e6:.2f} Mb/s, "
           f"mean reward {metrics.mean_reward[tail].mean():+.3f}")
    _print(f"outputs written to {out}")
    return EXIT_OK


def cmd_pu_baseline(args) -> int:
    config = _resolve_config(args)
    tp = run_pu_only_baseline(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = config.scenario
    period_s = sc.period_T * sc.slot_s
    Z = config.agent.buffer_Z
    first = config.calibration_samples
    with (out / "pu_baseline.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "sim_seconds", "pu_system_throughput"])
        for q, v in enumerate(tp):
            w.writerow([q, repr((first + (q + 1) * Z) * period_s), repr(float(v))])
    _print(f"mean PU-only throughput {tp.mean() / 1e6:.2f} Mb/s over {len(tp)} rounds")
    return EXIT_OK


def cmd_timing(args) -> int:
    config = _resolve_config(args)
    res = timing_probe(config, mean_index=args.mean_index, seed=config.seed)
    _print(f"mean index {res.mean_index:.1f}, {res.iterations} iterations")
    _print(f"cached    {res.train_time_cached:.4f} s")
    _print(f"recompute {res.train_time_recompute:.4f} s")
    _print(f"speedup   {res.speedup:.1f}x")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "timing.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mean_index", "iterations", "train_time_cached", "train_time_recompute", "speedup"])
            w.writerow([res.mean_index, res.iterations, res.train_time_cached, res.train_time_recompute, res.speedup])
    return EXIT_OK


def cmd_oracle_test(args) -> int:
    q_star = toy_mdp_oracle()
    optimal = np.argmax(q_star, axis=1)
    _print("Q* =\n" + np.array2string(q_star, precision=4))
    _print(f"optimal policy {optimal.tolist()}")
    seed0 = args.seed if args.seed is not None else 0
    hits = 0
    for s in range(seed0, seed0 + args.trials):
        policy = run_toy_mdp(s, rounds=args.rounds)
        ok = np.array_equal(policy, optimal)
        hits += ok
        _print(f"seed {s}: {policy.tolist()} {'match' if ok else 'MISMATCH'}")
    _print(f"{hits}/{args.trials} seeds match")
    return EXIT_OK if hits >= args.trials - args.trials // 20 else EXIT_DIVERGENCE


def cmd_dump_cqi(args) -> int:
    text = phy.cqi_table_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cqi_table.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deqn", description="DEQN spectrum-sharing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, agent=False, out_required=False):
        p.add_argument("--config", help="flat key/value YAML config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", required=out_required, help="output directory")
        if agent:
            p.add_argument("--agent", choices=CLI_AGENTS, help="agent kind for every SU")

    p = sub.add_parser("run", help="full training experiment")
    common(p, agent=True, out_required=True)
    p.add_argument("--samples", type=int, help="total samples (multiple of buffer_Z)")
    p.add_argument("--no-trace", action="store_true", help="skip the per-period trace CSV")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pu-baseline", help="PU throughput with every SU silent")
    common(p, out_required=True)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_pu_baseline)

    p = sub.add_parser("timing", help="cached vs recomputed hidden-state training time")
    common(p)
    p.add_argument("--mean-index", type=int, default=150)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("oracle-test", help="DEQN vs value iteration on the toy MDP")
    common(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--rounds", type=int, default=50)
    p.set_defaults(func=cmd_oracle_test)

    p = sub.add_parser("dump-cqi", help="print the CQI table as CSV")
    common(p)
    p.set_defaults(func=cmd_dump_cqi)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
