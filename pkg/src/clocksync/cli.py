"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import harness as hs
from . import multihop as mh
from .exchange import DatasetError, SlotOverflowError, read_dataset, write_dataset
from .neural import TrainConfig, TrainingDivergedError, load_model, save_model
from .splines import SplineRankError
from .streams import TRAIN_SEED_OFFSET

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


def load_scenario(args) -> hs.ScenarioConfig:
    """Scenario from a JSON file or a delay-scenario name, then flag overrides."""
    source = args.scenario
    if source is None:
        cfg = hs.ScenarioConfig()
    elif Path(source).is_file():
        cfg = hs.ScenarioConfig.load(source)
    else:
        cfg = hs.ScenarioConfig(delay=source)
    over = {}
    for name in ("tau", "steps", "seed", "thermal", "n_mu", "n_sigma", "train_steps"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v[-1] if name == "tau" and isinstance(v, list) else v
    if getattr(args, "k", None):
        over["K"] = tuple(args.k)
    if getattr(args, "estimator", None):
        over["estimators"] = tuple(args.estimator)
    return replace(cfg, **over) if over else cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="JSON config file or delay scenario name (sw_wifi, hw_wifi, sw_wsn, hw_wsn, "
                                      "exp, composite)")
    p.add_argument("--thermal", help="thermal profile name")
    p.add_argument("--steps", type=int)
    p.add_argument("--train-steps", dest="train_steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-mu", dest="n_mu", type=float)
    p.add_argument("--n-sigma", dest="n_sigma", type=float)
    p.add_argument("--k", type=int, action="append", help="window size; repeatable")
    p.add_argument("--estimator", action="append", choices=hs.ESTIMATORS, help="repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clocksync", description="Two-way exchange clock synchronization simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="phase 1 (simulate) or phase 2 (estimate)")
    _common(run)
    run.add_argument("--phase", type=int, choices=(1, 2), required=True)
    run.add_argument("--tau", type=float)
    run.add_argument("--data", help="phase-2 input dataset")
    run.add_argument("--model", action="append", default=[], help="trained network file; repeatable")
    run.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train a network on a freshly simulated database")
    _common(tr)
    tr.add_argument("--tau", type=float)
    tr.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    tr.add_argument("--out", required=True)

    sw = sub.add_parser("sweep-tau", help="K curves and best-K errors over synchronization periods")
    _common(sw)
    sw.add_argument("--tau", type=float, action="append", required=True)
    sw.add_argument("--out", required=True, help="output directory")

    mhp = sub.add_parser("multihop", help="per-hop error table for a five-hop line")
    mhp.add_argument("--steps", type=int, default=100_000)
    mhp.add_argument("--seed", type=int, default=0)
    mhp.add_argument("--hops", type=int, default=5)
    mhp.add_argument("--link-steps", type=int, default=100_000)
    mhp.add_argument("--gen-steps", type=int, default=20_000)
    mhp.add_argument("--method", action="append", choices=mh.HOP_METHODS)
    mhp.add_argument("--out", required=True)
    return ap


def cmd_run(args) -> None:
    cfg = load_scenario(args)
    out = Path(args.out)
    if args.phase == 1:
        hs.run_phase1(cfg, out)
        print(f"wrote {cfg.steps} exchanges to {out}")
        return
    if not args.data:
        raise hs.ConfigError("phase 2 needs --data")
    data = read_dataset(args.data)
    models = {}
    for path in args.model:
        m = load_model(path)
        for est in cfg.estimators:
            if est in hs.NN_FITTERS:
                models[(est, m.K)] = m
    Ks = sorted(set(cfg.K) | {k for _, k in models})
    report = hs.run_phase2(data, cfg.estimators, Ks, models, cfg.tau)
    report.write_csv(out)
    for r in report.rows:
        print(f"{r.estimator:>12} K={r.K:<4} sigma={r.sigma * 1e6:.3f} us  p99.9={r.p999 * 1e6:.3f} us  "
              f"max={r.max * 1e6:.3f} us")


def cmd_train(args) -> None:
    cfg = load_scenario(args)
    est = next((e for e in cfg.estimators if e in hs.NN_FITTERS), "NN")
    tc = TrainConfig(epochs=args.epochs, seed=cfg.train_seed)
    model = hs.train_nn(cfg, cfg.K[0], est, tc)
    save_model(model, args.out)
    print(f"trained {est} K={cfg.K[0]}; final loss {model.loss_history[-1]:.6g} s^2 -> {args.out}")


def cmd_sweep(args) -> None:
    cfg = load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep = hs.sweep_tau(cfg, args.tau)
    for tau, rep in sweep.reports.items():
        hs.emit_plot_data(rep, out / f"k_curve_tau{tau:g}.csv")
    best = sweep.best()
    hs.emit_plot_data(best, out / "best_k_vs_tau.csv", x="tau")
    sweep.all_rows().write_csv(out / "report.csv")
    for r in best.rows:
        print(f"tau={r.tau:g} {r.estimator:>12} K*={r.K:<4} p99.9={r.p999 * 1e6:.3f} us")


def cmd_multihop(args) -> None:
    cfg = mh.HopChainConfig().with_seed(args.seed).truncated(args.hops)
    results = mh.hop_comparison(cfg, args.steps, args.seed + TRAIN_SEED_OFFSET, args.link_steps, args.gen_steps,
                                methods=args.method or mh.HOP_METHODS)
    rows = [row for m, res in results.items() for row in mh.hop_table(m, res)]
    mh.write_hop_table(rows, args.out)
    for r in rows:
        print(f"{r.method:>8} hop {r.hop} K={r.K:<3} sigma={r.sigma * 1e6:.3f}  p99.9={r.p999 * 1e6:.3f}  "
              f"max={r.max * 1e6:.3f} us")


COMMANDS = {"run": cmd_run, "train": cmd_train, "sweep-tau": cmd_sweep, "multihop": cmd_multihop}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (hs.ConfigError, hs.MissingModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergedError, SlotOverflowError, SplineRankError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
