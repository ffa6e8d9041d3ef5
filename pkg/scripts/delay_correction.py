"""Effect of subtracting a known delay from t2/t3 on the order-1 fit, averaged over seeds.

    python scripts/delay_correction.py --seeds 50
"""

import argparse
from dataclasses import replace

import numpy as np

from clocksync.clockdyn import OMEGA_NORM, NoiseProfile, simulate_states
from clocksync.exchange import SW_WIFI, Delay, simulate_exchanges
from clocksync.splines import InfoWindow, delay_correction_gap

p = argparse.ArgumentParser()
p.add_argument("--seeds", type=int, default=50)
p.add_argument("--steps", type=int, default=400)
p.add_argument("--k", type=int, nargs="+", default=[60, 120])
args = p.parse_args()

prop = 334e-9
profile = replace(SW_WIFI, prop_sr=Delay("const", prop), prop_rs=Delay("const", prop), hold_r=Delay("const", 0.5))
d = prop + SW_WIFI.r_rec.mean - SW_WIFI.s_send.mean
for K in args.k:
    dq, dm, worst, refit = [], [], 0.0, 0.0
    for seed in range(args.seeds):
        data = simulate_exchanges(simulate_states(args.steps, 1.0, OMEGA_NORM, NoiseProfile(seed=seed)),
                                  profile, seed=seed)
        for end in range(K, len(data)):
            g = delay_correction_gap(InfoWindow.from_dataset(data, end, K), d)
            dq.append(g.delta_q)
            dm.append(g.delta_m)
            worst = max(worst, abs(g.delta_m - g.delta_m_closed_form) / abs(g.delta_m_closed_form))
            refit = max(refit, abs(g.delta_m_refit - g.delta_m) / abs(g.delta_m))
    print(f"K={K}: mean dm={np.mean(dm):.3e}  mean |dq|={np.mean(np.abs(dq)) * 1e9:.2f} ns  "
          f"closed-form rel. gap {worst:.1e}  refit rel. gap {refit:.1e}")
