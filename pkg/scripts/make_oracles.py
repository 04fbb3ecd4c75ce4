"""Recompute the frozen reference values in tests/data/oracles.json.

Every value here is produced without calling into the package: brute-force
enumeration, dense linear algebra, plain-Python summation or quadrature.
"""
import itertools
import json
import math
from pathlib import Path

import numpy as np
from scipy import integrate

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "oracles.json"


def lattice_edge_count(h, w):
    count = 0
    for r in range(h):
        for c in range(w):
            if c + 1 < w:
                count += 1
            if r + 1 < h:
                count += 1
    return count


def knn_brute(points, k, radius):
    n = len(points)
    chosen = set()
    for i in range(n):
        dists = sorted((math.dist(points[i], points[j]), j) for j in range(n) if j != i)
        for d, j in dists[:k]:
            if d <= radius:
                chosen.add((min(i, j), max(i, j)))
    return sorted(chosen)


def lattice_laplacian_diag(h, w):
    deg = []
    for r in range(h):
        for c in range(w):
            deg.append(sum(0 <= r + dr < h and 0 <= c + dc < w
                           for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0))))
    return deg


LOGPOST = dict(
    y=[[0.3, -1.2], [2.0], [0.5, 0.1, -0.4]],
    X=[[[1.0], [0.5]], [[2.0]], [[1.0], [-1.0], [0.3]]],
    beta=[0.2, 0.9, -0.1],
    sigma2=0.8, lambda2=2.5, nu2=[1.0, 0.6, 1.7],
    kappa=1.5, epsilon=0.7,
    edges=[[0, 1], [1, 2]],
)


def logpost_sum(c):
    sigma2, lam = c["sigma2"], math.sqrt(c["lambda2"])
    total_d = sum(len(v) for v in c["y"])
    p, m = len(c["edges"]), 1
    val = -(c["kappa"] + 1 + (total_d + p * m) / 2) * math.log(sigma2) - c["epsilon"] / sigma2
    for i, j in c["edges"]:
        val -= lam / math.sqrt(sigma2) * abs(c["beta"][i] - c["beta"][j])
    for i in range(len(c["y"])):
        rss = sum((yy - xx[0] * c["beta"][i]) ** 2 for yy, xx in zip(c["y"][i], c["X"][i]))
        val -= rss / c["nu2"][i] / (2 * sigma2)
    return val


GAUSS = dict(
    y=[[1.0, 0.4], [0.2, -0.3], [-0.5, 0.8], [1.5, 1.1]],
    X=[[[1.0], [0.7]], [[0.4], [1.2]], [[1.0], [-0.6]], [[0.9], [0.3]]],
    tau2=[0.5, 2.0, 1.3],
    nu2=[1.0, 0.5, 2.0, 1.2],
    sigma=0.7,
)


def gauss_oracle(c):
    n = len(c["y"])
    D = np.zeros((n - 1, n))
    for r in range(n - 1):
        D[r, r], D[r, r + 1] = 1.0, -1.0
    XtX = np.diag([sum(x[0] ** 2 for x in c["X"][i]) / c["nu2"][i] for i in range(n)])
    Xty = np.array([sum(x[0] * yy for x, yy in zip(c["X"][i], c["y"][i])) / c["nu2"][i] for i in range(n)])
    P = XtX + D.T @ np.diag(1 / np.array(c["tau2"])) @ D
    Pinv = np.linalg.inv(P)
    return P.tolist(), (Pinv @ Xty).tolist(), (c["sigma"] ** 2 * Pinv).tolist()


def ig_bins(mu, lam, lo=0.05, hi=5.0, nbins=40):
    def dens(x):
        return math.sqrt(lam / (2 * math.pi)) * x ** -1.5 * math.exp(-lam * (x - mu) ** 2 / (2 * mu * mu * x))

    edges = np.linspace(lo, hi, nbins + 1)
    probs = [integrate.quad(dens, a, b, epsabs=1e-13, epsrel=1e-11)[0] for a, b in zip(edges[:-1], edges[1:])]
    return edges.tolist(), probs


def pooled_ridge_limit():
    # shared design, 3 nodes: pooled least squares over all observations
    X0 = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [-0.5, 0.5]])
    Y = np.array([[1.0, 0.5, -0.2, 0.3], [0.1, 0.9, 1.4, -0.6], [2.0, -1.0, 0.4, 0.0]])
    Xs = np.vstack([X0] * 3)
    ys = Y.ravel()
    pooled = np.linalg.lstsq(Xs, ys, rcond=None)[0]
    return dict(X0=X0.tolist(), Y=Y.tolist(), pooled=pooled.tolist())


def main():
    pts3 = [(0.0,), (1.0,), (2.0,)]  # collinear and equidistant, given as 1-D coordinates
    ridge = pooled_ridge_limit()
    P, mean, cov = gauss_oracle(GAUSS)
    edges, probs = ig_bins(1.0, 1.0)
    out = {
        "lattice_710_edges": lattice_edge_count(710, 710),
        "lattice_2x2_laplacian_diag": lattice_laplacian_diag(2, 2),
        "knn_three_points": {"points": pts3, "edges": knn_brute(pts3, 1, 1e9)},
        "log_posterior_path3": {"case": LOGPOST, "value": logpost_sum(LOGPOST)},
        "gaussian_path4": {"case": GAUSS, "P": P, "mean": mean, "cov": cov},
        "inverse_gaussian_bins_mu1_lam1": {"edges": edges, "probs": probs},
        "ridge_pooled_limit": ridge,
        "precision_2node": {"P": [[2.0, -1.0], [-1.0, 2.0]], "solve_e1": [2.0 / 3.0, 1.0 / 3.0]},
        "complete_graph_k": {"n": 5, "edges": [list(e) for e in itertools.combinations(range(5), 2)]},
    }
    OUT.write_text(json.dumps(out, indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
