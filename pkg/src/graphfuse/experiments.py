"""Experiment drivers shared by the CLI, the scripts and the acceptance suite.

Each driver takes a dataclass config, returns an in-memory result and, when
``out_dir`` is given, writes its CSV and image artifacts there.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, render
from .baselines import GammaSearchSpec, ml_estimate, ridge_smooth, select_gamma
from .gibbs import ChainOutput, PosteriorSummary, orientation_deg, run_chain, summarize
from .model import Dataset, Hyperparams, SamplerConfig
from .rng import make_stream
from .sparse import SolverOptions
from .synth import (HETEROGENEOUS, HOMOGENEOUS, OrientationMap, PhaseSplit, angular_error,
                    generate_hetero_signal, generate_opm, generate_phase_data, generate_random_map,
                    simulate_responses, split_train_test)

logger = logging.getLogger(__name__)

# stream-id blocks so that data and chains never share a stream
_DATA_STREAM = 1 << 32
_SPLIT_STREAM = 2 << 32


@dataclass
class ChainSettings:
    """Sampler settings common to every experiment."""

    iterations: int = 2500
    burn_in: int = 500
    thin: int = 1
    fix_lambda: float | None = None
    fix_nu: float | None = None
    empirical_bayes: bool = False
    em_interval: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)

    def config(self, seed: int, stream_id: int, **overrides) -> SamplerConfig:
        kw = dict(iterations=self.iterations, burn_in=self.burn_in, thin=self.thin,
                  fix_lambda=self.fix_lambda, fix_nu=self.fix_nu,
                  empirical_bayes_lambda=self.empirical_bayes, em_interval=self.em_interval,
                  solver=self.solver, seed=seed, stream_id=stream_id)
        kw.update(overrides)
        return SamplerConfig(**kw)


def _quiet_chain(data, graph, hyper, config) -> ChainOutput:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_chain(data, graph, hyper, config)


def _pool_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


# -- heteroscedastic 1-D demo -------------------------------------------------------------


@dataclass
class HeteroConfig:
    n: int = 1000
    replications: int = 100
    noise_modes: tuple = (HETEROGENEOUS, HOMOGENEOUS)
    hyper: Hyperparams = field(default_factory=lambda: Hyperparams(kappa=0.0, epsilon=0.0, r=1e-4,
                                                                   delta=1e-3, varkappa=3.0, varepsilon=2.0))
    chain: ChainSettings = field(default_factory=ChainSettings)
    seed: int = 0
    threads: int = 1


HETERO_METHODS = ("robust", "bnl")


def _hetero_job(args):
    cfg, mode_idx, rep, keep = args
    mode = cfg.noise_modes[mode_idx]
    sig = generate_hetero_signal(cfg.n, mode, make_stream(cfg.seed, _DATA_STREAM + 2 * rep + mode_idx))
    data, graph = sig.dataset(), sig.graph()
    rows, est = [], {}
    for k, method in enumerate(HETERO_METHODS):
        sid = 4 * rep + 2 * mode_idx + k
        fix_nu = 1.0 if method == "bnl" else cfg.chain.fix_nu
        out = _quiet_chain(data, graph, cfg.hyper, cfg.chain.config(cfg.seed, sid, fix_nu=fix_nu))
        beta = out.beta_mean[:, 0]
        rows.append((method, mode, rep, float(np.sqrt(np.mean((beta - sig.beta) ** 2)))))
        est[method] = beta
    return rows, ((sig, est) if keep else None)


@dataclass
class HeteroResult:
    rows: list  # (method, noise_mode, replication, rmse)
    examples: dict  # noise_mode -> (signal, {method: estimate}) for replication 0

    def rmse(self, method: str, mode: str) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[0] == method and r[1] == mode])

    def median(self, method: str, mode: str) -> float:
        return float(np.median(self.rmse(method, mode)))


def run_hetero_demo(cfg: HeteroConfig, out_dir=None) -> HeteroResult:
    jobs = [(cfg, k, rep, rep == 0) for rep in range(cfg.replications) for k in range(len(cfg.noise_modes))]
    results = _pool_map(_hetero_job, jobs, cfg.threads)
    rows, examples = [], {}
    for (_, k, rep, _), (r, ex) in zip(jobs, results):
        rows.extend(r)
        if ex is not None:
            examples[cfg.noise_modes[k]] = ex
    res = HeteroResult(rows, examples)
    if out_dir is not None:
        out = Path(out_dir)
        io._write(out / "rmse_summary.csv", ["method", "noise_mode", "replication", "rmse"],
                  ([m, mode, rep, io._fmt(v)] for m, mode, rep, v in rows))
        for mode, (sig, est) in examples.items():
            cols = {"t": sig.t, "truth": sig.beta, "y": sig.y, "noise_sd": sig.sigma}
            cols.update(est)
            io.write_node_table(out / f"estimates_{mode}.csv", cols)
            render.render_lines(out / f"fit_{mode}.png", sig.t,
                                {"data": sig.y, "truth": sig.beta, **est},
                                title=f"{mode} noise", xlabel="t", ylabel="beta")
        med = [(m, mode, io._fmt(res.median(m, mode))) for mode in cfg.noise_modes for m in HETERO_METHODS]
        io._write(out / "rmse_medians.csv", ["method", "noise_mode", "median_rmse"], med)
    return res


# -- orientation preference map demo ------------------------------------------------------------


@dataclass
class OpmConfig:
    height: int = 128
    width: int = 128
    n_waves: int = 16
    wavelength: float = 64.0
    n_trials: int = 20
    sigma: float = 0.4
    random_map: bool = False
    hyper: Hyperparams = field(default_factory=lambda: Hyperparams(kappa=0.0, epsilon=0.0, r=1.0, delta=1.0))
    chain: ChainSettings = field(default_factory=lambda: ChainSettings(fix_nu=1.0))
    gamma_grid: tuple = tuple(np.logspace(-2, 3, 25).tolist())
    seed: int = 0
    render_scale: int = 2


@dataclass
class OpmResult:
    omap: OrientationMap
    data: Dataset
    beta_ml: np.ndarray
    beta_ridge: np.ndarray
    gamma: float
    output: ChainOutput
    summary: PosteriorSummary
    errors: dict  # method -> mean angular error to the truth (degrees)

    @property
    def theta(self) -> dict:
        return {"ml": orientation_deg(self.beta_ml), "ridge": orientation_deg(self.beta_ridge),
                "bayes": self.summary.theta_hat}

    @property
    def bayes_vs_ml(self) -> float:
        """Mean angular difference between the posterior-mean and ML orientations."""
        return float(angular_error(self.summary.theta_hat, orientation_deg(self.beta_ml)).mean())

    @property
    def em_lambda(self) -> float:
        o = self.output
        return float(np.sqrt(o.lambda2_trace[o.recorded]).mean())


def make_opm_data(cfg: OpmConfig):
    rng = make_stream(cfg.seed, _DATA_STREAM)
    if cfg.random_map:
        omap = generate_random_map(cfg.height, cfg.width, rng)
    else:
        omap = generate_opm(cfg.height, cfg.width, cfg.n_waves, cfg.wavelength, rng)
    return omap, simulate_responses(omap, cfg.n_trials, cfg.sigma, rng)


def run_opm_demo(cfg: OpmConfig, out_dir=None) -> OpmResult:
    omap, data = make_opm_data(cfg)
    graph = omap.graph()
    beta_ml = ml_estimate(data)
    gamma = select_gamma(data, graph, GammaSearchSpec(grid=np.asarray(cfg.gamma_grid)), truth=omap.beta,
                         opts=cfg.chain.solver)
    beta_ridge = ridge_smooth(data, graph, gamma, cfg.chain.solver)
    output = _quiet_chain(data, graph, cfg.hyper, cfg.chain.config(cfg.seed, 0))
    summary = summarize(output)
    errors = {name: float(angular_error(orientation_deg(b), omap.theta).mean())
              for name, b in (("ml", beta_ml), ("ridge", beta_ridge), ("bayes", summary.beta_mean))}
    res = OpmResult(omap, data, beta_ml, beta_ridge, gamma, output, summary, errors)
    if out_dir is not None:
        _write_opm(res, cfg, Path(out_dir))
    return res


def _write_opm(res: OpmResult, cfg: OpmConfig, out: Path):
    omap, s = res.omap, res.summary
    h, w = omap.height, omap.width
    io._write(out / "angular_errors.csv", ["method", "mean_angular_error_deg"],
              ([k, io._fmt(v)] for k, v in res.errors.items()))
    lam_key = "lambda_em" if cfg.chain.empirical_bayes else "lambda"
    scalars = [("sigma", s.sigma_mean, s.sigma_sd), (lam_key, s.lambda_mean, s.lambda_sd),
               ("gamma", res.gamma, 0.0), ("bayes_vs_ml_deg", res.bayes_vs_ml, 0.0)]
    io._write(out / "estimates.csv", ["quantity", "mean", "sd"],
              ([q, io._fmt(m), io._fmt(sd)] for q, m, sd in scalars))
    th = res.theta
    r = {k: np.linalg.norm(b, axis=1) for k, b in
         (("ml", res.beta_ml), ("ridge", res.beta_ridge), ("bayes", s.beta_mean))}
    io.write_node_table(out / "maps.csv", {
        "theta_true": omap.theta, "theta_ml": th["ml"], "theta_ridge": th["ridge"], "theta_bayes": th["bayes"],
        "r_true": omap.r, "r_ml": r["ml"], "r_ridge": r["ridge"], "r_bayes": r["bayes"],
        "theta_sd_proxy": np.degrees(np.linalg.norm(s.beta_sd, axis=1) / np.maximum(r["bayes"], 1e-12)),
    })
    io.write_traces(out / "traces.csv", res.output)
    io.write_edge_table(out / "tau.csv", omap.graph(), {"tau2_mean": s.tau2_mean})
    sc = cfg.render_scale
    render.render_lattice(omap.theta, h, w, out / "theta_true.png", render.ANGLE, sc)
    for k, v in th.items():
        render.render_lattice(v, h, w, out / f"theta_{k}.png", render.ANGLE, sc)
        render.render_lattice(r[k], h, w, out / f"r_{k}.png", render.SCALAR, sc)
    # mean tau^2 of the right and lower edge of every pixel (zero on the border)
    p_h = h * (w - 1)
    tau_h = np.zeros((h, w))
    tau_h[:, :-1] = s.tau2_mean[:p_h].reshape(h, w - 1)
    tau_v = np.zeros((h, w))
    tau_v[:-1, :] = s.tau2_mean[p_h:].reshape(h - 1, w)
    render.render_lattice(np.log10(tau_h + 1e-12).ravel(), h, w, out / "log_tau2_horizontal.png",
                          render.SCALAR, sc, vmin=float(np.log10(s.tau2_mean.min())),
                          vmax=float(np.log10(s.tau2_mean.max())))
    render.render_lattice(np.log10(tau_v + 1e-12).ravel(), h, w, out / "log_tau2_vertical.png",
                          render.SCALAR, sc, vmin=float(np.log10(s.tau2_mean.min())),
                          vmax=float(np.log10(s.tau2_mean.max())))


# -- phase-tuning demo -----------------------------------------------------------------------


@dataclass
class PhaseConfig:
    n_pools: int = 20
    neurons_per_pool: int = 20
    spikes_per_neuron: int = 70
    concentration: float = 2.0
    neuron_spread_deg: float = 10.0
    outlier_fraction: float = 0.1
    k: int = 1
    radius: float = 5.0
    fixed_lambdas: tuple = (0.0, 1.0, 10.0, 100.0)
    replications: int = 1
    hyper: Hyperparams = field(default_factory=lambda: Hyperparams(kappa=0.0, epsilon=0.0, r=1.0, delta=1.0,
                                                                   varkappa=3.0, varepsilon=2.0))
    chain: ChainSettings = field(default_factory=ChainSettings)
    seed: int = 0
    threads: int = 1


@dataclass
class PhaseReplication:
    split: PhaseSplit
    theta: dict  # method -> estimated phase per neuron (degrees)
    raw_error: float
    test_error: dict  # method -> mean |theta_hat - theta_test|
    train_error: dict  # method -> mean |theta_hat - theta_train|
    lambda_mean: float
    ml_theta: np.ndarray


def _method_name(lam) -> str:
    return "bayes" if lam is None else f"lambda={lam:g}"


def _phase_job(args):
    cfg, rep = args
    rng = make_stream(cfg.seed, _DATA_STREAM + rep)
    ds = generate_phase_data(cfg.n_pools, cfg.neurons_per_pool, cfg.spikes_per_neuron, cfg.concentration, rng,
                             neuron_spread_deg=cfg.neuron_spread_deg, outlier_fraction=cfg.outlier_fraction)
    split = split_train_test(ds, make_stream(cfg.seed, _SPLIT_STREAM + rep))
    graph = ds.graph(cfg.k, cfg.radius)
    data = split.train_dataset()
    ml_theta = orientation_deg_full(ml_estimate(data))
    theta, lam_mean = {}, float("nan")
    for j, lam in enumerate((None,) + tuple(cfg.fixed_lambdas)):
        sc = cfg.chain.config(cfg.seed, 16 * rep + j,
                              fix_lambda=lam if lam is not None else cfg.chain.fix_lambda,
                              empirical_bayes_lambda=cfg.chain.empirical_bayes if lam is None else False)
        out = _quiet_chain(data, graph, cfg.hyper, sc)
        s = summarize(out)
        theta[_method_name(lam)] = orientation_deg_full(s.beta_mean)
        if lam is None:
            lam_mean = s.lambda_mean
    raw = float(angular_error(split.theta_train, split.theta_test, 360).mean())
    test = {k: float(angular_error(v, split.theta_test, 360).mean()) for k, v in theta.items()}
    train = {k: float(angular_error(v, split.theta_train, 360).mean()) for k, v in theta.items()}
    return ds, PhaseReplication(split, theta, raw, test, train, lam_mean, ml_theta)


def orientation_deg_full(beta) -> np.ndarray:
    """Direction angle of each 2-vector in (-180, 180]."""
    beta = np.asarray(beta, dtype=float)
    return np.degrees(np.arctan2(beta[:, 1], beta[:, 0]))


@dataclass
class PhaseResult:
    replications: list
    example: object  # PhaseDataset of replication 0

    def wins(self, method: str = "bayes") -> int:
        return sum(r.test_error[method] < r.raw_error for r in self.replications)


def run_phase_demo(cfg: PhaseConfig, out_dir=None) -> PhaseResult:
    results = _pool_map(_phase_job, [(cfg, rep) for rep in range(cfg.replications)], cfg.threads)
    res = PhaseResult([r for _, r in results], results[0][0])
    if out_dir is not None:
        out = Path(out_dir)
        methods = list(res.replications[0].theta)
        rows = [[m, io._fmt(np.mean([r.raw_error for r in res.replications])),
                 io._fmt(np.mean([r.test_error[m] for r in res.replications]))] for m in methods]
        io._write(out / "errors.csv", ["method", "raw_error_deg", "test_error_deg"], rows)
        io._write(out / "errors_by_replication.csv",
                  ["replication", "method", "raw_error_deg", "test_error_deg", "train_error_deg"],
                  ([i, m, io._fmt(r.raw_error), io._fmt(r.test_error[m]), io._fmt(r.train_error[m])]
                   for i, r in enumerate(res.replications) for m in methods))
        rep0, ds = res.replications[0], res.example
        cols = {"theta_train": rep0.split.theta_train, "theta_test": rep0.split.theta_test,
                "r_test": np.linalg.norm(rep0.split.y_test, axis=1), "pool": ds.pool.astype(float)}
        cols.update({f"theta_{m}": v for m, v in rep0.theta.items()})
        io.write_node_table(out / "phases.csv", cols)
        io.write_layout(out / "layout.csv", ds.locations)
        io.write_edges(out / "edges.csv", ds.graph(cfg.k, cfg.radius))
        render.render_scatter(rep0.split.theta_test, ds.locations, out / "phase_test.png", render.PHASE)
        render.render_scatter(rep0.split.theta_train, ds.locations, out / "phase_train.png", render.PHASE)
        for m, v in rep0.theta.items():
            render.render_scatter(v, ds.locations, out / f"phase_{m.replace('=', '_')}.png", render.PHASE)
    return res
