"""Per-sweep wall time on L x L lattices (m = 2) for each solver path.

``decoupled``: shared design, eigen-rotated into m independent sparse systems.
``coupled``: the same data in stacked form, one nm x nm sparse Cholesky.
``cg``: preconditioned conjugate gradients on the stacked form.
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from graphfuse.gibbs import GibbsSampler
from graphfuse.graph import build_lattice_graph
from graphfuse.model import Hyperparams, SamplerConfig
from graphfuse.sparse import SolverOptions
from graphfuse.synth import generate_random_map, simulate_responses


def time_sweeps(data, graph, opts, reps):
    t0 = time.perf_counter()
    sampler = GibbsSampler(data, graph, Hyperparams(kappa=0, epsilon=0, r=1, delta=1),
                           SamplerConfig(fix_nu=1.0, solver=opts))
    state = sampler.initial_state()
    state, _ = sampler.sweep(state)
    setup = time.perf_counter() - t0
    t0 = time.perf_counter()
    for _ in range(reps):
        state, _ = sampler.sweep(state)
    return setup, (time.perf_counter() - t0) / reps


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--paths", nargs="+", default=["decoupled", "coupled", "cg"])
    ap.add_argument("--max-coupled", type=int, default=256, help="largest L for the coupled and cg paths")
    ap.add_argument("--out", default="results/scaling.csv")
    a = ap.parse_args()
    rows = []
    for L in a.sizes:
        rng = np.random.default_rng(L)
        data = simulate_responses(generate_random_map(L, L, rng), 20, 0.4, rng)
        graph = build_lattice_graph(L, L)
        reps = 2 if L >= 512 else 5
        for path in a.paths:
            if path != "decoupled" and L > a.max_coupled:
                continue
            d = data if path == "decoupled" else data.to_stacked()
            opts = SolverOptions(method="cg", tol=1e-8) if path == "cg" else SolverOptions()
            setup, sweep = time_sweeps(d, graph, opts, reps)
            rows.append((L, 2 * L * L, path, setup, sweep))
            print(f"L={L:4d} params={2 * L * L:8d} {path:>9}: setup+first sweep {setup:7.3f}s, "
                  f"sweep {sweep:7.3f}s", flush=True)
    for path in a.paths:
        pts = [(r[1], r[4]) for r in rows if r[2] == path]
        if len(pts) >= 2:
            slope = np.polyfit(*np.log(np.array(pts)).T, 1)[0]
            print(f"{path}: log-log slope {slope:.2f}")
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "params", "path", "setup_s", "sweep_s"])
        w.writerows(rows)
