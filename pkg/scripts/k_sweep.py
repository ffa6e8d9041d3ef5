"""p99.9 against window size K for every estimator on one dataset.

    python scripts/k_sweep.py --steps 100000 --out k_sweep.csv
"""

import argparse

from clocksync import harness as hs

p = argparse.ArgumentParser()
p.add_argument("--delay", default="sw_wifi")
p.add_argument("--thermal", default="omega_norm")
p.add_argument("--steps", type=int, default=100_000)
p.add_argument("--seed", type=int, default=1)
p.add_argument("--k", type=int, nargs="+", default=[2, 5, 10, 15, 20, 30, 40, 50, 60, 70, 80])
p.add_argument("--nn-k", type=int, nargs="+", default=[10, 20, 40, 60, 80])
p.add_argument("--out", default="k_sweep.csv")
args = p.parse_args()

cfg = hs.ScenarioConfig(thermal=args.thermal, delay=args.delay, steps=args.steps, seed=args.seed,
                        K=tuple(args.k), estimators=("S1", "S2", "S3"))
report, _ = hs.run_experiment(cfg)
nn_cfg = hs.ScenarioConfig(thermal=args.thermal, delay=args.delay, steps=args.steps, seed=args.seed,
                           K=tuple(args.nn_k), estimators=("NN", "NN-minfilter"))
report.rows += hs.run_experiment(nn_cfg)[0].rows
hs.emit_plot_data(report, args.out)
for est in report.estimators:
    b = report.best(est)
    print(f"{est:>12}: best K={b.K:<3} p99.9={b.p999 * 1e6:.3f} us")
