"""Heteroscedastic 1-D demo: robust Bayes vs Bayesian network lasso over replications."""
import argparse
import logging

from graphfuse.experiments import ChainSettings, HeteroConfig, run_hetero_demo

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/hetero")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--iterations", type=int, default=2500)
    ap.add_argument("--burn-in", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = HeteroConfig(n=a.n, replications=a.replications, seed=a.seed, threads=a.threads,
                       chain=ChainSettings(iterations=a.iterations, burn_in=a.burn_in))
    res = run_hetero_demo(cfg, a.out)
    for mode in cfg.noise_modes:
        print(f"{mode:>13}: median rmse robust={res.median('robust', mode):.4f} bnl={res.median('bnl', mode):.4f}")
