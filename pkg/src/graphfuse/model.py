"""Data containers, hyperparameters, chain state and the log posterior.

A :class:`Dataset` holds ``n`` regression problems ``y_i = X_i beta_i + e_i``
sharing a common coefficient dimension ``m``. Two storage layouts are
supported: a shared design (every node sees the same ``X0``, responses form
an ``(n, d)`` matrix) and a stacked long form with per-node row counts.
All per-node operations are vectorised over nodes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, StructuralError, UsageError
from .graph import as_operator
from .sparse import SolverOptions


class NeuronData(NamedTuple):
    y: np.ndarray
    X: np.ndarray


class Dataset:
    """Per-node responses and designs, stored for vectorised access."""

    def __init__(self, *, Y=None, X0=None, node=None, y=None, X=None, n=None):
        if Y is not None:
            Y = np.asarray(Y, dtype=float)
            X0 = np.asarray(X0, dtype=float)
            if Y.ndim != 2 or X0.ndim != 2 or Y.shape[1] != X0.shape[0]:
                raise StructuralError(f"shared design mismatch: Y {Y.shape}, X0 {X0.shape}")
            self.shared = True
            self.Y, self.X0 = Y, X0
            self.n, self.m = Y.shape[0], X0.shape[1]
            self.d = np.full(self.n, X0.shape[0], dtype=np.int64)
        else:
            node = np.asarray(node, dtype=np.int64)
            y = np.asarray(y, dtype=float).ravel()
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if not (node.shape[0] == y.shape[0] == X.shape[0]):
                raise StructuralError("node, y and X must have the same number of rows")
            if node.size and np.any(np.diff(node) < 0):
                order = np.argsort(node, kind="stable")
                node, y, X = node[order], y[order], X[order]
            self.shared = False
            self.node, self.y, self.X = node, y, X
            self.n = int(n) if n is not None else (int(node.max()) + 1 if node.size else 0)
            self.m = X.shape[1]
            self.d = np.bincount(node, minlength=self.n).astype(np.int64)
            if node.size and (node.min() < 0 or node.max() >= self.n):
                raise StructuralError("node index out of range")
        if self.n < 1:
            raise StructuralError("dataset has no nodes")
        if np.any(self.d < 1):
            bad = np.flatnonzero(self.d < 1)[:10].tolist()
            raise StructuralError(f"every node needs at least one observation; empty nodes: {bad}")
        for arr in self._arrays():
            if not np.all(np.isfinite(arr)):
                raise StructuralError("dataset contains non-finite entries")

    def _arrays(self):
        return (self.Y, self.X0) if self.shared else (self.y, self.X)

    @classmethod
    def from_shared(cls, Y, X0) -> "Dataset":
        return cls(Y=Y, X0=X0)

    @classmethod
    def from_stacked(cls, node, y, X, n=None) -> "Dataset":
        return cls(node=node, y=y, X=X, n=n)

    @classmethod
    def from_nodes(cls, nodes) -> "Dataset":
        """Build from a sequence of ``(y_i, X_i)`` pairs."""
        ys, Xs, idx = [], [], []
        for i, (y_i, X_i) in enumerate(nodes):
            y_i = np.asarray(y_i, dtype=float).ravel()
            X_i = np.asarray(X_i, dtype=float).reshape(y_i.shape[0], -1)
            ys.append(y_i)
            Xs.append(X_i)
            idx.append(np.full(y_i.shape[0], i, dtype=np.int64))
        ms = {X_i.shape[1] for X_i in Xs}
        if len(ms) != 1:
            raise StructuralError(f"all designs must have the same column count, got {sorted(ms)}")
        return cls(node=np.concatenate(idx), y=np.concatenate(ys), X=np.vstack(Xs), n=len(ys))

    def __len__(self):
        return self.n

    @property
    def total_d(self) -> int:
        return int(self.d.sum())

    def node_data(self, i: int) -> NeuronData:
        if self.shared:
            return NeuronData(self.Y[i].copy(), self.X0.copy())
        sl = self.node == i
        return NeuronData(self.y[sl], self.X[sl])

    def to_stacked(self) -> "Dataset":
        if not self.shared:
            return self
        d = self.X0.shape[0]
        node = np.repeat(np.arange(self.n), d)
        return Dataset.from_stacked(node, self.Y.ravel(), np.tile(self.X0, (self.n, 1)), n=self.n)

    def with_y(self, y_new) -> "Dataset":
        """Same designs, new responses (same layout as the current storage)."""
        if self.shared:
            return Dataset.from_shared(np.asarray(y_new, dtype=float).reshape(self.Y.shape), self.X0)
        return Dataset.from_stacked(self.node, np.asarray(y_new, dtype=float).ravel(), self.X, n=self.n)

    def responses(self) -> np.ndarray:
        return self.Y if self.shared else self.y

    # -- vectorised per-node algebra -------------------------------------------------

    def gram(self) -> np.ndarray:
        """X_i' X_i for every node, shape (n, m, m)."""
        if self.shared:
            g = self.X0.T @ self.X0
            return np.broadcast_to(g, (self.n, self.m, self.m)).copy()
        outer = self.X[:, :, None] * self.X[:, None, :]
        out = np.zeros((self.n, self.m, self.m))
        np.add.at(out, self.node, outer)
        return out

    def xty(self) -> np.ndarray:
        """X_i' y_i, shape (n, m)."""
        if self.shared:
            return self.Y @ self.X0
        return self.xt_apply(self.y)

    def xt_apply(self, v: np.ndarray) -> np.ndarray:
        """X_i' v_i for a flat vector laid out like the responses."""
        if self.shared:
            return np.asarray(v).reshape(self.Y.shape) @ self.X0
        weighted = self.X * np.asarray(v).ravel()[:, None]
        return np.stack([np.bincount(self.node, weighted[:, k], minlength=self.n)
                         for k in range(self.m)], axis=1)

    def predict(self, beta: np.ndarray) -> np.ndarray:
        if self.shared:
            return beta @ self.X0.T
        return np.einsum("ij,ij->i", self.X, beta[self.node])

    def residual_ss(self, beta: np.ndarray) -> np.ndarray:
        """||y_i - X_i beta_i||^2 per node."""
        beta = np.asarray(beta, dtype=float).reshape(self.n, self.m)
        if self.shared:
            r = self.Y - beta @ self.X0.T
            return np.einsum("ij,ij->i", r, r)
        r = self.y - self.predict(beta)
        return np.bincount(self.node, r * r, minlength=self.n)

    def noise_like(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.Y.shape if self.shared else self.y.shape)

    def subset_rows(self, keep) -> "Dataset":
        """Keep a subset of observations (boolean mask in response layout)."""
        if self.shared:
            keep = np.asarray(keep, dtype=bool)
            if keep.ndim == 1:
                return Dataset.from_shared(self.Y[:, keep], self.X0[keep])
            st = self.to_stacked()
            return st.subset_rows(keep.ravel())
        keep = np.asarray(keep, dtype=bool).ravel()
        return Dataset.from_stacked(self.node[keep], self.y[keep], self.X[keep], n=self.n)

    def common_gram(self, rtol: float = 1e-12):
        """Return ``(A, c)`` with ``X_i'X_i = c_i A`` for all nodes, else ``None``."""
        return common_gram_factor(self.gram(), rtol)


def common_gram_factor(gram: np.ndarray, rtol: float = 1e-12):
    """Detect Gram blocks that are all scalar multiples of one matrix."""
    gram = np.asarray(gram, dtype=float)
    n, m, _ = gram.shape
    traces = np.einsum("ikk->i", gram)
    ref = int(np.argmax(traces))
    if traces[ref] <= 0:
        return None
    A = gram[ref] / traces[ref]
    c = traces
    resid = np.abs(gram - c[:, None, None] * A[None])
    scale = np.abs(gram).max(axis=(1, 2)) + 1e-300
    if np.all(resid.max(axis=(1, 2)) <= rtol * scale * max(m, 1) + 1e-300):
        return A, c
    return None


@dataclass(frozen=True)
class Hyperparams:
    """Hyperprior parameters; zeros give the improper limits."""

    kappa: float = 0.0
    epsilon: float = 0.0
    r: float = 1.0
    delta: float = 1.0
    varkappa: float = 3.0
    varepsilon: float = 2.0

    def __post_init__(self):
        for name in ("kappa", "epsilon", "r", "delta", "varkappa", "varepsilon"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ParameterError(f"hyperparameter {name} must be finite and >= 0, got {v}")


@dataclass
class ChainState:
    beta: np.ndarray
    sigma2: float
    lambda2: float
    nu2: np.ndarray
    tau2: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(self.beta.copy(), float(self.sigma2), float(self.lambda2),
                          self.nu2.copy(), self.tau2.copy())

    def validate(self, n: int | None = None, m: int | None = None, p: int | None = None,
                 allow_zero_lambda: bool = False):
        beta = np.asarray(self.beta)
        if n is not None and beta.shape != (n, m):
            raise StructuralError(f"beta has shape {beta.shape}, expected {(n, m)}")
        if n is not None and np.shape(self.nu2) != (n,):
            raise StructuralError(f"nu2 has shape {np.shape(self.nu2)}, expected {(n,)}")
        if p is not None and np.shape(self.tau2) != (p,):
            raise StructuralError(f"tau2 has shape {np.shape(self.tau2)}, expected {(p,)}")
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2}")
        if not (self.lambda2 > 0 or (allow_zero_lambda and self.lambda2 == 0)):
            raise ParameterError(f"lambda2 must be positive, got {self.lambda2}")
        if not np.all(np.asarray(self.nu2) > 0):
            raise ParameterError("all nu2 must be positive")
        if not np.all(np.asarray(self.tau2) > 0):
            raise ParameterError("all tau2 must be positive")
        if not np.all(np.isfinite(beta)):
            raise ParameterError("beta contains non-finite values")


@dataclass
class SamplerConfig:
    """Chain length, constrained modes and solver settings.

    ``iterations`` counts all sweeps including burn-in; the number of
    recorded sweeps is ``(iterations - burn_in) // thin``.
    ``fix_nu`` pins every nu_i to the given value (``1.0`` is the Bayesian
    network lasso). ``fix_lambda`` pins lambda; ``empirical_bayes_lambda``
    replaces the Gamma draw of lambda^2 by the EM/Gibbs update, applied every
    ``em_interval`` sweeps.
    """

    iterations: int = 2500
    burn_in: int = 500
    thin: int = 1
    fix_lambda: float | None = None
    fix_nu: float | None = None
    empirical_bayes_lambda: bool = False
    em_interval: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int | None = 0
    stream_id: int = 0
    store_draws: bool = False
    rao_blackwell: bool = True

    def __post_init__(self):
        if self.thin < 1:
            raise UsageError(f"thin must be >= 1, got {self.thin}")
        if self.iterations < 1:
            raise UsageError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise UsageError(f"burn_in must be in [0, iterations), got {self.burn_in}")
        if self.fix_lambda is not None and self.empirical_bayes_lambda:
            raise UsageError("fix_lambda and empirical_bayes_lambda are mutually exclusive")
        if self.fix_lambda is not None and not self.fix_lambda >= 0:
            raise UsageError(f"fix_lambda must be >= 0, got {self.fix_lambda}")
        if self.fix_nu is not None and not self.fix_nu > 0:
            raise UsageError(f"fix_nu must be positive, got {self.fix_nu}")
        if self.em_interval < 1:
            raise UsageError("em_interval must be >= 1")

    @property
    def n_recorded(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)

    def replace(self, **changes) -> "SamplerConfig":
        return replace(self, **changes)


def _check_dims(state: ChainState, data: Dataset, op):
    beta = np.asarray(state.beta, dtype=float)
    if beta.shape != (data.n, data.m):
        raise StructuralError(f"beta shape {beta.shape} does not match data ({data.n}, {data.m})")
    if op.n != data.n:
        raise StructuralError(f"operator has {op.n} columns but data has {data.n} nodes")
    if np.shape(state.nu2) != (data.n,):
        raise StructuralError("nu2 length does not match node count")
    return beta


def log_posterior(state: ChainState, data: Dataset, graph, hyper: Hyperparams) -> float:
    """Log posterior of (beta, sigma^2) given nu and lambda, up to a constant."""
    op = as_operator(graph)
    beta = _check_dims(state, data, op)
    sigma2 = float(state.sigma2)
    lam = np.sqrt(float(state.lambda2))
    nu2 = np.asarray(state.nu2, dtype=float)
    total_d, p, m = data.total_d, op.p, data.m
    fusion = op.row_norms(beta).sum()
    rss = (data.residual_ss(beta) / nu2).sum()
    return float(-(hyper.kappa + 1.0 + (total_d + p * m) / 2.0) * np.log(sigma2)
                 - hyper.epsilon / sigma2
                 - lam / np.sqrt(sigma2) * fusion
                 - rss / (2.0 * sigma2))


def transform_coords(state: ChainState):
    """(beta, sigma^2) -> (phi, rho) = (beta / sigma, 1 / sigma)."""
    if not state.sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    sigma = np.sqrt(float(state.sigma2))
    return np.asarray(state.beta, dtype=float) / sigma, 1.0 / sigma


def inverse_transform_coords(phi: np.ndarray, rho: float):
    """(phi, rho) -> (beta, sigma^2)."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    return np.asarray(phi, dtype=float) / rho, 1.0 / (rho * rho)


def log_posterior_transformed(phi, rho, data: Dataset, graph, hyper: Hyperparams,
                              *, lambda2: float, nu2) -> float:
    """Log posterior in (phi, rho) coordinates; concave for fixed nu, lambda."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    op = as_operator(graph)
    phi = np.asarray(phi, dtype=float).reshape(data.n, data.m)
    nu = np.sqrt(np.asarray(nu2, dtype=float))
    total_d, p, m = data.total_d, op.p, data.m
    # ||rho y_i/nu_i - X_i phi_i/nu_i||^2 == ||y_i - X_i (phi_i/rho)||^2 rho^2 / nu_i^2
    if data.shared:
        r = rho * data.Y - phi @ data.X0.T
        quad = (np.einsum("ij,ij->i", r, r) / nu ** 2).sum()
    else:
        r = rho * data.y - data.predict(phi)
        quad = (np.bincount(data.node, r * r, minlength=data.n) / nu ** 2).sum()
    return float((2 * hyper.kappa + 2 + total_d + p * m) * np.log(rho)
                 - hyper.epsilon * rho * rho
                 - np.sqrt(lambda2) * op.row_norms(phi).sum()
                 - 0.5 * quad)


def warn_if_unidentifiable(hyper: Hyperparams, config: SamplerConfig):
    if hyper.kappa == 0 and hyper.epsilon == 0 and config.fix_nu is None:
        warnings.warn("improper sigma^2 prior with free nu^2: sigma and lambda are only weakly "
                      "identified; a tight nu^2 prior is advisable", stacklevel=3)
