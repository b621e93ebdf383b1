"""Command-line interface.

Subcommands: simulate, train, infer, diagnose, report, reproduce.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from graphabi import diagnostics as diag
from graphabi.config import (ConfigFileError, ExperimentConfig, config_help,
                             load_config)
from graphabi.engine import (TrainConfig, config_hash, posterior_for,
                             train_offline, train_online, write_run_manifest)
from graphabi.experiments import (build_networks, build_report,
                                  evaluate_posteriors, load_networks,
                                  make_setup, rail_records, run_conjugate,
                                  run_mice, run_rail, run_toy, save_networks,
                                  simulate_records)
from graphabi.simulators.dataset import (DatasetFormatError, DatasetRecord,
                                         read_dataset, write_dataset)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class DataError(Exception):
    pass


def _load(args) -> ExperimentConfig:
    return load_config(args.config)


def _networks(cfg: ExperimentConfig):
    setup = make_setup(cfg.experiment, mice_days=cfg.mice_days)
    nets = build_networks(setup, cfg.encoder, flow_layers=cfg.flow.num_layers,
                          flow_bins=cfg.flow.num_bins, flow_bound=cfg.flow.bound,
                          flow_hidden=cfg.flow.hidden_dim)
    return setup, nets


def cmd_simulate(args) -> int:
    cfg = _load(args)
    setup = make_setup(cfg.experiment, mice_days=cfg.mice_days)
    seed = args.seed if args.seed is not None else cfg.seed
    if cfg.experiment == "rail":
        pairs = rail_records(args.count, 1, seed)
    else:
        pairs = simulate_records(setup, args.count, seed)
    records = [DatasetRecord(theta=theta, graph=graph, seed=seed + i)
               for i, (theta, graph) in enumerate(pairs)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(records, out, cfg.experiment,
                  store_adjacency=setup.with_adjacency)
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    setup, nets = _networks(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    tc = TrainConfig(**{**cfg.training.__dict__, "seed": seed})
    out = cfg.resolved_out_dir() if args.out is None else Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if tc.regime == "online":
        if cfg.experiment == "rail":
            raise ConfigFileError("rail training is offline; set "
                                  "training.regime = 'offline' and pass --data")
        run = train_online(setup.simulator, nets, tc, log_every=1)
    else:
        if args.data is None:
            raise ConfigFileError("offline training requires --data DATASET")
        _, records = read_dataset(args.data)
        pairs = [(r.theta, r.graph) for r in records]
        n_val = max(1, int(len(pairs) * 0.05))
        run = train_offline(pairs[n_val:], pairs[:n_val], nets, tc, log_every=1)
    save_networks(nets, out / "checkpoint.bin")
    write_run_manifest(out / "run_manifest.txt",
                       config_hash({"experiment": cfg.experiment,
                                    "encoder": cfg.encoder.__dict__,
                                    "flow": cfg.flow.__dict__,
                                    "training": tc.__dict__}),
                       seed, run)
    print(f"trained {cfg.experiment}; checkpoint at {out / 'checkpoint.bin'}")
    return 0


def cmd_infer(args) -> int:
    cfg = _load(args)
    _, nets = _networks(cfg)
    load_networks(nets, args.checkpoint)
    _, records = read_dataset(args.data)
    if not records:
        raise DataError(f"dataset {args.data} is empty")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.seed
    with open(out, "w") as fh:
        fh.write("record,draw," +
                 ",".join(nets.prior.names) + "\n")
        for i, rec in enumerate(records):
            draws, _ = posterior_for(rec.graph, nets, args.draws, seed + i)
            for d in range(draws.shape[0]):
                fh.write(f"{i},{d}," +
                         ",".join(f"{x:.8g}" for x in draws[d]) + "\n")
    print(f"wrote {len(records) * args.draws} posterior draws to {out}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load(args)
    setup, nets = _networks(cfg)
    load_networks(nets, args.checkpoint)
    seed = args.seed if args.seed is not None else cfg.seed
    out = cfg.resolved_out_dir() if args.out is None else Path(args.out)

    cases = simulate_records(setup, args.test_cases, seed + 101) \
        if cfg.experiment != "rail" else rail_records(args.test_cases, 1, seed + 101)
    ev = evaluate_posteriors(cases, nets, num_draws=250, seed=seed + 202)
    if cfg.experiment == "rail":
        from graphabi.experiments import _rail_sbc_ranks
        ranks = _rail_sbc_ranks(nets, args.sbc_reps, args.sbc_draws, seed + 303)
    else:
        ranks = diag.sbc_ranks(setup.prior, setup.simulator,
                               diag.nets_sampler(nets), args.sbc_reps,
                               args.sbc_draws, seed + 303)
    sbc = diag.sbc_evaluate(ranks, args.sbc_draws, seed=seed + 404)
    report = build_report(setup, ev, sbc, {"experiment": cfg.experiment,
                                           "seed": seed})
    paths = diag.emit_report(report, sbc, out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_report(args) -> int:
    metrics = diag.parse_metrics(args.metrics)
    if not metrics:
        raise DataError(f"no rows in {args.metrics}")
    cols = ["recovery", "contraction", "log_gamma", "clamp_count"]
    width = max(len(name) for name in metrics) + 2
    print("parameter".ljust(width) + "".join(c.rjust(14) for c in cols))
    for name, row in metrics.items():
        print(name.ljust(width) +
              "".join(f"{row[c]:14.4f}" for c in cols))
    return 0


def cmd_reproduce(args) -> int:
    out_root = Path(args.out)
    runs = {
        "conjugate": lambda: run_conjugate(out_root / "conjugate",
                                           seed=args.seed, full=args.full,
                                           log_every=5),
        "toy": lambda: run_toy(out_root / "toy", seed=args.seed,
                               full=args.full, log_every=5),
        "mice": lambda: run_mice(out_root / "mice", seed=args.seed,
                                 full=args.full, log_every=1),
        "rail": lambda: run_rail(out_root / "rail", seed=args.seed,
                                 full=args.full, log_every=1),
    }
    targets = list(runs) if args.experiment == "all" else [args.experiment]
    for name in targets:
        print(f"=== reproducing {name} ===", flush=True)
        report, sbc, _ = runs[name]()
        for j, pname in enumerate(report.parameter_names):
            print(f"  {pname}: recovery={report.recovery[j]:.3f} "
                  f"contraction={report.contraction[j]:.3f} "
                  f"log_gamma={report.log_gamma[j]:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphabi",
        description="Amortized Bayesian inference on graph-structured data.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="TOML experiment configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("simulate", help="write a simulated dataset file")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train summary + flow networks")
    common(p)
    p.add_argument("--data", default=None,
                   help="dataset file (required for offline training)")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sample posteriors for a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--draws", type=int, default=250)
    p.add_argument("--out", required=True, help="output CSV of draws")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("diagnose", help="run calibration + recovery diagnostics")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sbc-reps", type=int, default=300)
    p.add_argument("--sbc-draws", type=int, default=100)
    p.add_argument("--test-cases", type=int, default=100)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("report", help="print a metrics table")
    p.add_argument("--metrics", required=True, help="metrics.csv path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("reproduce", help="rerun a built-in experiment")
    p.add_argument("--experiment", default="all",
                   choices=["conjugate", "toy", "mice", "rail", "all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full", action="store_true",
                   help="paper-scale budgets instead of desk-scale")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigFileError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetFormatError, DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
