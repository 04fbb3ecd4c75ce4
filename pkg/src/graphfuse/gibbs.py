"""Five-step block Gibbs sampler for the group-Laplace fusion model.

One sweep updates, in order: the local smoothing parameters tau^2 (one
inverse-Gaussian draw per operator row), the coefficient field beta
(perturb-and-solve Gaussian draw), sigma^2, lambda^2 and the per-node noise
scales nu^2. Each step is also exposed as a standalone function so the
conditionals can be tested in isolation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SolverError, StructuralError, UsageError
from .graph import as_operator
from .model import ChainState, Dataset, Hyperparams, SamplerConfig, warn_if_unidentifiable
from .rng import make_stream, sample_gamma, sample_inverse_gamma, sample_inverse_gaussian
from .sparse import PrecisionOperator, PrecisionSolver, sample_gaussian

logger = logging.getLogger(__name__)

NORM_FLOOR = 1e-8


def step_tau(state: ChainState, graph, rng: np.random.Generator) -> np.ndarray:
    """Draw tau^2 for every operator row: 1/tau^2 ~ IG(lambda sigma / ||D beta||, lambda^2)."""
    op = as_operator(graph)
    if op.p == 0:
        return np.empty(0)
    lam2 = float(state.lambda2)
    if lam2 == 0.0:
        return np.full(op.p, np.inf)
    beta = np.asarray(state.beta, dtype=float)
    norms = op.row_norms(beta)
    node_norms = np.sqrt(np.einsum("ij,ij->i", beta, beta))
    floor = NORM_FLOOR * (1.0 + abs(op.matrix) @ node_norms)
    norms = np.maximum(norms, floor)
    mu = np.sqrt(lam2 * state.sigma2) / norms
    inv_tau2 = sample_inverse_gaussian(mu, lam2, rng)
    return 1.0 / inv_tau2


def step_beta(state: ChainState, data: Dataset, graph, rng: np.random.Generator, *,
              opts=None, solver: PrecisionSolver | None = None, return_mean: bool = False):
    """Draw beta from N(P^-1 X'y, sigma^2 P^-1) with nu-scaled data."""
    op = as_operator(graph)
    if solver is None:
        solver = PrecisionSolver(op, data.gram(), opts)
    P = PrecisionOperator(solver.gram, state.nu2, op, 1.0 / np.asarray(state.tau2, dtype=float))
    return sample_gaussian(P, data, np.sqrt(state.sigma2), rng, solver=solver,
                           return_mean=return_mean, xty=getattr(solver, "xty", None))


def _fusion_quadratic(op, beta, tau2):
    if op.p == 0:
        return 0.0
    diff = op.apply(beta)
    return float(np.einsum("ij,ij->i", diff, diff) @ (1.0 / np.asarray(tau2, dtype=float)))


def sigma2_posterior_params(state: ChainState, data: Dataset, graph, hyper: Hyperparams):
    op = as_operator(graph)
    beta = np.asarray(state.beta, dtype=float)
    shape = hyper.kappa + (op.p * data.m + data.total_d) / 2.0
    rss = float((data.residual_ss(beta) / np.asarray(state.nu2, dtype=float)).sum())
    scale = hyper.epsilon + 0.5 * rss + 0.5 * _fusion_quadratic(op, beta, state.tau2)
    return shape, scale


def step_sigma2(state: ChainState, data: Dataset, graph, hyper: Hyperparams,
                rng: np.random.Generator) -> float:
    shape, scale = sigma2_posterior_params(state, data, graph, hyper)
    if not (shape > 0 and scale > 0):
        raise NumericalError(f"sigma^2 conditional is improper (shape={shape}, scale={scale})")
    return float(sample_inverse_gamma(shape, scale, rng))


def lambda2_posterior_params(state: ChainState, graph, hyper: Hyperparams, m: int):
    op = as_operator(graph)
    return hyper.r + op.p * (m + 1) / 2.0, hyper.delta + 0.5 * float(np.sum(state.tau2))


def step_lambda2(state: ChainState, graph, hyper: Hyperparams, rng: np.random.Generator,
                 m: int | None = None) -> float:
    m = np.shape(state.beta)[1] if m is None else m
    shape, rate = lambda2_posterior_params(state, graph, hyper, m)
    if not (shape > 0 and rate > 0 and np.isfinite(rate)):
        # nothing to learn from (no rows and a flat prior); keep the current value
        return float(state.lambda2)
    return float(sample_gamma(shape, rate, rng))


def nu2_posterior_params(state: ChainState, data: Dataset, hyper: Hyperparams):
    beta = np.asarray(state.beta, dtype=float)
    shape = hyper.varkappa + data.d / 2.0
    scale = hyper.varepsilon + data.residual_ss(beta) / (2.0 * state.sigma2)
    return shape, scale


def step_nu2(state: ChainState, data: Dataset, hyper: Hyperparams, rng: np.random.Generator) -> np.ndarray:
    shape, scale = nu2_posterior_params(state, data, hyper)
    if np.any(scale <= 0):
        raise NumericalError("nu^2 conditional is improper for a node with zero residual and flat prior")
    return sample_inverse_gamma(shape, scale, rng)


def em_update_lambda(tau2_means, m: int) -> float:
    """EM/Gibbs update: sqrt(p (m+1) / sum of per-row mean tau^2)."""
    tau2_means = np.asarray(tau2_means, dtype=float)
    if tau2_means.size == 0:
        raise UsageError("EM update needs at least one tau^2 sample per row")
    return float(np.sqrt(tau2_means.size * (m + 1) / tau2_means.sum()))


def ml_start(data: Dataset, ridge: float = 1e-8) -> np.ndarray:
    """Per-node least squares, with a small trace-scaled ridge on singular nodes."""
    gram = data.gram()
    m = data.m
    evals = np.linalg.eigvalsh(gram)
    singular = evals[:, 0] <= 1e-12 * np.maximum(evals[:, -1], 1e-300)
    if np.any(singular):
        tr = np.einsum("ikk->i", gram)
        gram[singular] += (ridge * np.maximum(tr[singular], 1.0) / m)[:, None, None] * np.eye(m)
    return np.linalg.solve(gram, data.xty()[..., None])[..., 0]


@dataclass
class ChainOutput:
    n: int
    m: int
    p: int
    iterations: int
    burn_in: int
    thin: int
    n_recorded: int
    beta_mean_draws: np.ndarray
    beta_m2: np.ndarray
    beta_mean_rb: np.ndarray | None
    sigma2_trace: np.ndarray
    lambda2_trace: np.ndarray
    nu2_mean: np.ndarray
    tau2_mean: np.ndarray
    iter_times: np.ndarray
    final_state: ChainState
    draws: np.ndarray | None = None
    recorded: np.ndarray = field(default=None, repr=False)

    @property
    def beta_var(self) -> np.ndarray:
        if self.n_recorded < 2:
            return np.zeros_like(self.beta_m2)
        return self.beta_m2 / (self.n_recorded - 1)

    @property
    def beta_mean(self) -> np.ndarray:
        return self.beta_mean_rb if self.beta_mean_rb is not None else self.beta_mean_draws

    def post_burn(self, trace: np.ndarray) -> np.ndarray:
        return trace[self.burn_in:][:: self.thin][: self.n_recorded]


class GibbsSampler:
    """Holds the per-graph setup (solver pattern, random stream) for one chain."""

    def __init__(self, data: Dataset, graph, hyper: Hyperparams, config: SamplerConfig):
        self.data = data
        self.op = as_operator(graph)
        if self.op.n != data.n:
            raise StructuralError(f"graph has {self.op.n} nodes but data has {data.n}")
        self.hyper = hyper
        self.config = config
        self.gram = data.gram()
        self.solver = PrecisionSolver(self.op, self.gram, config.solver)
        self.solver.xty = data.xty()
        self.rng = make_stream(config.seed, config.stream_id)
        warn_if_unidentifiable(hyper, config)

    def initial_state(self) -> ChainState:
        data, hyper, cfg = self.data, self.hyper, self.config
        beta = ml_start(data)
        dof = data.total_d - data.n * data.m
        rss = float(data.residual_ss(beta).sum())
        if dof > 0 and rss > 0:
            sigma2 = rss / dof
        else:
            v = float(np.var(data.responses()))
            sigma2 = v if v > 0 else 1.0
        if cfg.fix_lambda is not None:
            lambda2 = float(cfg.fix_lambda) ** 2
        elif hyper.r > 0 and hyper.delta > 0:
            lambda2 = hyper.r / hyper.delta
        else:
            lambda2 = 1.0
        nu2 = np.full(data.n, 1.0 if cfg.fix_nu is None else float(cfg.fix_nu) ** 2)
        tau2 = np.full(self.op.p, np.inf if lambda2 == 0 else 1.0)
        return ChainState(beta, sigma2, lambda2, nu2, tau2)

    def sweep(self, state: ChainState) -> tuple[ChainState, np.ndarray]:
        """One pass of steps 1-5; returns the new state and the conditional mean of beta."""
        cfg, rng, data, op, hyper = self.config, self.rng, self.data, self.op, self.hyper
        state.tau2 = step_tau(state, op, rng)
        state.beta, cond_mean = step_beta(state, data, op, rng, solver=self.solver, return_mean=True)
        state.sigma2 = step_sigma2(state, data, op, hyper, rng)
        if cfg.fix_lambda is None and not cfg.empirical_bayes_lambda:
            state.lambda2 = step_lambda2(state, op, hyper, rng, data.m)
        if cfg.fix_nu is None:
            state.nu2 = step_nu2(state, data, hyper, rng)
        return state, cond_mean

    def run(self, init: ChainState | None = None, progress_every: int = 0) -> ChainOutput:
        cfg, data, op = self.config, self.data, self.op
        n, m, p = data.n, data.m, op.p
        state = self.initial_state() if init is None else init.copy()
        state.validate(n, m, p, allow_zero_lambda=cfg.fix_lambda == 0)
        T = cfg.iterations
        sig_tr = np.empty(T)
        lam_tr = np.empty(T)
        times = np.empty(T)
        mean = np.zeros((n, m))
        m2 = np.zeros((n, m))
        rb_sum = np.zeros((n, m))
        nu_sum = np.zeros(n)
        tau_sum = np.zeros(p)
        draws = [] if cfg.store_draws else None
        count = 0
        em_sum = np.zeros(p)
        em_count = 0
        recorded = np.zeros(T, dtype=bool)
        for it in range(T):
            t0 = time.perf_counter()
            try:
                state, cond_mean = self.sweep(state)
            except SolverError as exc:
                raise SolverError(f"iteration {it}: {exc}") from exc
            if not (np.all(np.isfinite(state.beta)) and np.isfinite(state.sigma2)
                    and np.isfinite(state.lambda2) and np.all(np.isfinite(state.nu2))):
                raise NumericalError(f"non-finite value in chain state at iteration {it}")
            if cfg.empirical_bayes_lambda and p > 0:
                em_sum += state.tau2
                em_count += 1
                if em_count == cfg.em_interval:
                    state.lambda2 = em_update_lambda(em_sum / em_count, m) ** 2
                    em_sum[:] = 0.0
                    em_count = 0
            sig_tr[it] = state.sigma2
            lam_tr[it] = state.lambda2
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0 and count < cfg.n_recorded:
                count += 1
                recorded[it] = True
                delta = state.beta - mean
                mean += delta / count
                m2 += delta * (state.beta - mean)
                rb_sum += cond_mean
                nu_sum += state.nu2
                tau_sum += state.tau2
                if draws is not None:
                    draws.append(state.beta.copy())
            times[it] = time.perf_counter() - t0
            if progress_every and (it + 1) % progress_every == 0:
                logger.info("iteration %d/%d sigma=%.4g lambda=%.4g", it + 1, T,
                            np.sqrt(state.sigma2), np.sqrt(state.lambda2))
        return ChainOutput(
            n=n, m=m, p=p, iterations=T, burn_in=cfg.burn_in, thin=cfg.thin, n_recorded=count,
            beta_mean_draws=mean, beta_m2=m2,
            beta_mean_rb=rb_sum / count if cfg.rao_blackwell else None,
            sigma2_trace=sig_tr, lambda2_trace=lam_tr,
            nu2_mean=nu_sum / count, tau2_mean=tau_sum / count,
            iter_times=times, final_state=state,
            draws=np.asarray(draws) if draws is not None else None,
            recorded=recorded,
        )


def run_chain(data: Dataset, graph, hyper: Hyperparams, config: SamplerConfig,
              init: ChainState | None = None) -> ChainOutput:
    """Run one chain from the default (ML) start; deterministic given the seed."""
    return GibbsSampler(data, graph, hyper, config).run(init)


def orientation_deg(beta: np.ndarray) -> np.ndarray:
    """arctan(beta_2 / beta_1) in degrees, folded into (-90, 90]."""
    beta = np.asarray(beta, dtype=float)
    ang = np.degrees(np.arctan2(beta[..., 1], beta[..., 0]))
    return 90.0 - np.mod(90.0 - ang, 180.0)


@dataclass
class PosteriorSummary:
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    sigma_mean: float
    sigma_sd: float
    lambda_mean: float
    lambda_sd: float
    nu2_mean: np.ndarray
    tau2_mean: np.ndarray
    theta_hat: np.ndarray | None = None
    r_hat: np.ndarray | None = None


def summarize(output: ChainOutput) -> PosteriorSummary:
    if output.n_recorded < 1:
        raise UsageError("chain output has no recorded sweeps")
    sel = output.recorded
    sigma = np.sqrt(output.sigma2_trace[sel])
    lam = np.sqrt(output.lambda2_trace[sel])
    beta = output.beta_mean
    theta = r = None
    if output.m == 2:
        theta = orientation_deg(beta)
        r = np.sqrt(np.einsum("ij,ij->i", beta, beta))
    return PosteriorSummary(
        beta_mean=beta, beta_sd=np.sqrt(output.beta_var),
        sigma_mean=float(sigma.mean()), sigma_sd=float(sigma.std(ddof=1)) if sigma.size > 1 else 0.0,
        lambda_mean=float(lam.mean()), lambda_sd=float(lam.std(ddof=1)) if lam.size > 1 else 0.0,
        nu2_mean=output.nu2_mean, tau2_mean=output.tau2_mean,
        theta_hat=theta, r_hat=r,
    )
