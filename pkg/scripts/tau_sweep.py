"""Best-K error against the synchronization period.

    python scripts/tau_sweep.py --steps 100000 --out tau_sweep
"""

import argparse
from pathlib import Path

from clocksync import harness as hs

p = argparse.ArgumentParser()
p.add_argument("--delay", default="sw_wsn")
p.add_argument("--steps", type=int, default=100_000)
p.add_argument("--seed", type=int, default=1)
p.add_argument("--tau", type=float, nargs="+", default=[1, 10, 60])
p.add_argument("--s1-k", type=int, nargs="+", default=[2, 3, 4, 6, 8, 10, 12, 16, 20, 30, 40, 50, 60, 80])
p.add_argument("--nn-k", type=int, nargs="+", default=[4, 8, 16, 20, 40, 60, 80])
p.add_argument("--out", default="tau_sweep")
args = p.parse_args()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
best = hs.ErrorReport()
for tau in args.tau:
    cfg = hs.ScenarioConfig(delay=args.delay, tau=tau, steps=args.steps, seed=args.seed)
    rep = hs.run_phase2(hs.simulate(cfg), ["S1", "S2"], args.s1_k, tau=tau)
    rep.rows += hs.run_experiment(hs.replace(cfg, K=tuple(args.nn_k), estimators=("NN",)))[0].rows
    hs.emit_plot_data(rep, out / f"k_curve_tau{tau:g}.csv")
    for est in rep.estimators:
        b = rep.best(est)
        best.rows.append(b)
        print(f"tau={tau:>5g} {est:>3}: K*={b.K:<3} p99.9={b.p999 * 1e6:.3f} us", flush=True)
hs.emit_plot_data(best, out / "best_k_vs_tau.csv", x="tau")
