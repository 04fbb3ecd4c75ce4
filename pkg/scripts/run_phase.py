"""Clustered phase-tuning demo: one-phase training split, fixed-lambda sweep and full Bayes."""
import argparse
import logging

import numpy as np

from graphfuse.experiments import ChainSettings, PhaseConfig, run_phase_demo

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/phase")
    ap.add_argument("--replications", type=int, default=1)
    ap.add_argument("--concentration", type=float, default=2.0)
    ap.add_argument("--iterations", type=int, default=2500)
    ap.add_argument("--burn-in", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = PhaseConfig(replications=a.replications, concentration=a.concentration, seed=a.seed, threads=a.threads,
                      chain=ChainSettings(iterations=a.iterations, burn_in=a.burn_in))
    res = run_phase_demo(cfg, a.out)
    methods = list(res.replications[0].test_error)
    raw = np.mean([r.raw_error for r in res.replications])
    print(f"raw error {raw:.2f} deg")
    for m in methods:
        test = np.mean([r.test_error[m] for r in res.replications])
        print(f"{m:>12}: test error {test:.2f} deg, beats raw in {res.wins(m)}/{len(res.replications)}")
