"""Systematic error of the splines under asymmetric receiver latency, and the NN's compensation.

    python scripts/asymmetry.py --n-mu 1.5
"""

import argparse

from clocksync import harness as hs
from clocksync.measure import asymmetry_bias

p = argparse.ArgumentParser()
p.add_argument("--n-mu", type=float, default=1.5)
p.add_argument("--steps", type=int, default=100_000)
p.add_argument("--seed", type=int, default=1)
p.add_argument("--k", type=int, nargs="+", default=[20, 60])
p.add_argument("--out", default="asymmetry.csv")
args = p.parse_args()

rows = hs.ErrorReport()
for n_mu in (1.0, args.n_mu):
    cfg = hs.ScenarioConfig(n_mu=n_mu, steps=args.steps, seed=args.seed, K=tuple(args.k),
                            estimators=("S1", "S2", "S3", "NN"))
    print(f"n_mu={n_mu}: predicted delay bias {asymmetry_bias(cfg.delay_profile()) * 1e6:.3f} us")
    rep, _ = hs.run_experiment(cfg)
    for r in rep.rows:
        print(f"  {r.estimator:>3} K={r.K:<3} p99.9={r.p999 * 1e6:.3f} us  mean error={r.mean * 1e6:+.3f} us")
        rows.rows.append(hs.replace(r, estimator=f"{r.estimator}@n_mu={n_mu:g}"))
hs.emit_plot_data(rows, args.out)
