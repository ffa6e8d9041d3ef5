"""Per-hop sigma / p99.9 / max for S1 and the three network training schemes.

    python scripts/multihop_table.py --steps 100000 --out multihop.csv
"""

import argparse

from clocksync import multihop as mh
from clocksync.streams import TRAIN_SEED_OFFSET

p = argparse.ArgumentParser()
p.add_argument("--steps", type=int, default=100_000)
p.add_argument("--seed", type=int, default=1)
p.add_argument("--link-steps", type=int, default=100_000)
p.add_argument("--gen-steps", type=int, default=20_000)
p.add_argument("--out", default="multihop.csv")
args = p.parse_args()

cfg = mh.HopChainConfig().with_seed(args.seed)
results = mh.hop_comparison(cfg, args.steps, args.seed + TRAIN_SEED_OFFSET, args.link_steps, args.gen_steps)
rows = [row for m, res in results.items() for row in mh.hop_table(m, res)]
mh.write_hop_table(rows, args.out)
print(f"{'hop':>3} " + " ".join(f"{m:>22}" for m in results))
for h in range(cfg.H):
    cells = []
    for m in results:
        s = results[m].hops[h].stats
        cells.append(f"{s.sigma * 1e6:6.3f}/{s.p999 * 1e6:6.3f}/{s.max * 1e6:6.3f}")
    print(f"{h + 1:>3} " + " ".join(f"{c:>22}" for c in cells))
