"""Median parameter error against sample size for the two-node example.

Run: python3 demos/consistency_sweep.py [runs]
"""
import sys

from mixnet import ModelStructure, net2
from mixnet.montecarlo import MonteCarloConfig, run_montecarlo

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
m = net2()
s = ModelStructure.from_model(m)
cfg = MonteCarloConfig(N_list=(1000, 4000, 16000, 64000), runs=runs, seed=0,
                       weightings=("identity", "inv-lambda"), workers=4)
rep = run_montecarlo(m, s, cfg)
print(f"{'N':>6s} {'weighting':>11s} {'theta median':>13s} {'q25':>8s} {'q75':>8s} failed")
for r in rep.summary:
    print(f"{r['N']:6d} {r['weighting']:>11s} {r['theta_median']:13.4f} "
          f"{r['theta_q25']:8.4f} {r['theta_q75']:8.4f} {r['failed']}")
