"""Posterior precision of the coefficient field and solves/samples against it.

The precision is ``P = blockdiag(X_i'X_i / nu_i^2) + (D' Gamma D) kron I_m``.
The Kronecker factor is never formed: :class:`PrecisionOperator` applies it
blockwise, and :class:`PrecisionSolver` assembles only the lower triangle of
``P`` through a precomputed linear map from (edge weights, Gram entries) to
the CSC value array, so each Gibbs sweep only refreshes numeric values.

Direct solves use CHOLMOD (through cvxopt) with an AMD fill-reducing ordering
computed once per pattern. When every Gram block is a multiple ``c_i A`` of
one matrix (shared design, 1-D data, stacked identities), rotating each node
by the eigenvectors of ``A`` splits ``P`` into ``m`` independent n x n systems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from cvxopt import cholmod, matrix, spmatrix

from .errors import ParameterError, SolverError, StructuralError
from .graph import DifferenceOperator, as_operator

DIRECT = "direct"
ITERATIVE = "iterative"


@dataclass(frozen=True)
class SolverOptions:
    """``method`` is ``"direct"`` or ``"iterative"`` (``"cg"`` accepted)."""

    method: str = DIRECT
    tol: float = 1e-8
    maxiter: int | None = None
    reorder: bool = True
    check_residual: bool = False

    def __post_init__(self):
        method = {"cg": ITERATIVE}.get(self.method, self.method)
        if method not in (DIRECT, ITERATIVE):
            raise ParameterError(f"unknown solver method {self.method!r}")
        object.__setattr__(self, "method", method)
        if not self.tol > 0:
            raise ParameterError(f"solver tolerance must be positive, got {self.tol}")


class PrecisionOperator:
    """Implicit ``P = blockdiag(G_i / nu_i^2) + (D' diag(w) D) kron I_m``."""

    def __init__(self, gram: np.ndarray, nu2: np.ndarray, op: DifferenceOperator, weights: np.ndarray):
        self.gram = np.asarray(gram, dtype=float)
        self.nu2 = np.asarray(nu2, dtype=float)
        self.op = op
        self.weights = np.asarray(weights, dtype=float)
        n, m, _ = self.gram.shape
        if self.nu2.shape != (n,) or op.n != n or self.weights.shape != (op.p,):
            raise StructuralError("precision operator components have inconsistent sizes")
        self.n, self.m = n, m

    @property
    def dim(self) -> int:
        return self.n * self.m

    @property
    def blocks(self) -> np.ndarray:
        return self.gram / self.nu2[:, None, None]

    def matvec(self, w: np.ndarray) -> np.ndarray:
        shape = np.shape(w)
        W = np.asarray(w, dtype=float).reshape(self.n, self.m)
        out = np.einsum("nij,nj->ni", self.blocks, W)
        D = self.op.matrix
        out += D.T @ (self.weights[:, None] * (D @ W))
        return out.reshape(shape)

    def fusion_diagonal(self) -> np.ndarray:
        """Diagonal of ``D' diag(w) D`` (per node)."""
        D = self.op.matrix
        return np.asarray(D.multiply(D).T @ self.weights).ravel()

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit nm x nm matrix; for oracles and small problems only."""
        D = self.op.matrix
        L = (D.T @ sp.diags(self.weights) @ D).tocsr()
        eye = sp.identity(self.m, format="csr")
        return (sp.kron(L, eye) + sp.block_diag(list(self.blocks), format="csr")).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def assemble_precision(data, graph, tau2, nu2) -> PrecisionOperator:
    """Precision of the conditional of beta for the given tau^2 and nu^2.

    ``tau2 = inf`` is allowed and switches the corresponding edge off.
    """
    op = as_operator(graph)
    tau2 = np.asarray(tau2, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(~(tau2 > 0)):
        raise ParameterError("all tau2 must be positive")
    if np.any(~(nu2 > 0)) or not np.all(np.isfinite(nu2)):
        raise ParameterError("all nu2 must be positive and finite")
    return PrecisionOperator(data.gram(), nu2, op, 1.0 / tau2)


def _row_pairs(D: sp.csr_matrix):
    """All (a, b, row, D[row,a]*D[row,b]) with a >= b within each row."""
    counts = np.diff(D.indptr)
    npairs = counts * counts
    total = int(npairs.sum())
    row = np.repeat(np.arange(D.shape[0]), npairs)
    start = np.repeat(np.cumsum(npairs) - npairs, npairs)
    cnt = np.repeat(counts, npairs)
    t = np.arange(total) - start
    base = D.indptr[row]
    ia = base + t // np.maximum(cnt, 1)
    ib = base + t % np.maximum(cnt, 1)
    a, b = D.indices[ia], D.indices[ib]
    coef = D.data[ia] * D.data[ib]
    keep = a >= b
    return a[keep].astype(np.int64), b[keep].astype(np.int64), row[keep], coef[keep]


class _CholmodSystem:
    """Lower-triangular CSC pattern + value map + reusable symbolic factor."""

    def __init__(self, rows, cols, param_index, coef, size, n_params, reorder):
        keys_all = cols * size + rows
        keys = np.unique(keys_all)
        self.rows = (keys % size).astype(np.int64)
        self.cols = (keys // size).astype(np.int64)
        self.size = size
        pos = np.searchsorted(keys, keys_all)
        self.value_map = sp.csr_matrix((coef, (pos, param_index)), shape=(keys.size, n_params))
        self.diag_pos = np.searchsorted(keys, np.arange(size, dtype=np.int64) * (size + 1))
        init = np.zeros(keys.size)
        init[self.diag_pos] = 1.0
        self.A = spmatrix(matrix(init), matrix(self.rows), matrix(self.cols), (size, size))
        if reorder:
            self.F = cholmod.symbolic(self.A)
        else:
            self.F = cholmod.symbolic(self.A, p=matrix(np.arange(size, dtype=np.int64)))

    def factor(self, values: np.ndarray):
        self.A.V = matrix(values)
        try:
            cholmod.numeric(self.A, self.F)
        except ArithmeticError as exc:
            diag = values[self.diag_pos]
            raise SolverError(
                f"Cholesky factorization failed (matrix not positive definite; CHOLMOD status {exc}); "
                f"smallest diagonal entry {diag.min():.3e} at row {int(np.argmin(diag))}") from exc

    def solve(self, B: np.ndarray) -> np.ndarray:
        Bc = matrix(np.ascontiguousarray(B, dtype=float).reshape(self.size, -1))
        cholmod.solve(self.F, Bc)
        return np.array(Bc)


class PrecisionSolver:
    """Solver bound to one sparsity pattern (operator + Gram structure).

    Build once per graph/design; call :meth:`factor` whenever weights or
    nu^2 change, then :meth:`solve` any number of right-hand sides.
    """

    def __init__(self, op: DifferenceOperator, gram: np.ndarray, opts: SolverOptions | None = None):
        from .model import common_gram_factor

        self.opts = opts or SolverOptions()
        self.op = op
        self.gram = np.asarray(gram, dtype=float)
        self.n, self.m = self.gram.shape[0], self.gram.shape[1]
        self.P = None
        self.decoupled = False
        if self.opts.method != DIRECT:
            return
        D = op.matrix
        a, b, r, coef = _row_pairs(D)
        n, m, p = self.n, self.m, op.p
        common = common_gram_factor(self.gram)
        if common is not None:
            self.decoupled = True
            A, c = common
            evals, Q = np.linalg.eigh(A)
            self.Q = Q
            self.scaled_evals = c[:, None] * evals[None, :]  # (n, m)
            diag = np.arange(n, dtype=np.int64)
            rows = np.r_[a, diag]
            cols = np.r_[b, diag]
            pidx = np.r_[r, p + diag]
            coefs = np.r_[coef, np.ones(n)]
            self.systems = [_CholmodSystem(rows, cols, pidx, coefs, n, p + n, self.opts.reorder)
                            for _ in range(m)]
        else:
            kk, ll = np.tril_indices(m)
            T = kk.size
            ks = np.arange(m)
            rows_f = (a[:, None] * m + ks).ravel()
            cols_f = (b[:, None] * m + ks).ravel()
            pidx_f = np.repeat(r, m)
            coef_f = np.repeat(coef, m)
            node = np.repeat(np.arange(n, dtype=np.int64), T)
            rows_b = node * m + np.tile(kk, n)
            cols_b = node * m + np.tile(ll, n)
            pidx_b = p + np.arange(n * T)
            self._tri = (kk, ll)
            self.systems = [_CholmodSystem(np.r_[rows_f, rows_b], np.r_[cols_f, cols_b],
                                           np.r_[pidx_f, pidx_b], np.r_[coef_f, np.ones(n * T)],
                                           n * m, p + n * T, self.opts.reorder)]

    def factor(self, P: PrecisionOperator):
        if P.op.matrix.shape != self.op.matrix.shape or P.gram.shape != self.gram.shape:
            raise StructuralError("precision operator does not match the solver pattern")
        self.P = P
        if self.opts.method != DIRECT:
            return
        w = P.weights
        if self.decoupled:
            diag = self.scaled_evals / P.nu2[:, None]
            for k, system in enumerate(self.systems):
                system.factor(system.value_map @ np.r_[w, diag[:, k]])
        else:
            kk, ll = self._tri
            blocks = P.blocks[:, kk, ll].ravel()
            system = self.systems[0]
            system.factor(system.value_map @ np.r_[w, blocks])

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``P x = b``; ``b`` is (nm,), (n, m) or (nm, k)."""
        if self.P is None:
            raise SolverError("solve called before factor")
        b = np.asarray(b, dtype=float)
        shape = b.shape
        B = b.reshape(self.n * self.m, -1)
        if self.opts.method == DIRECT:
            X = self._solve_direct(B)
        else:
            X = self._solve_cg(B)
        if self.opts.check_residual:
            self._check(B, X)
        return X.reshape(shape)

    def _solve_direct(self, B):
        n, m = self.n, self.m
        if not self.decoupled:
            return self.systems[0].solve(B)
        k = B.shape[1]
        Bt = np.einsum("ij,nik->njk", self.Q, B.reshape(n, m, k))
        Xt = np.empty_like(Bt)
        for j, system in enumerate(self.systems):
            Xt[:, j, :] = system.solve(Bt[:, j, :])
        return np.einsum("ij,njk->nik", self.Q, Xt).reshape(n * m, k)

    def _solve_cg(self, B):
        P = self.P
        n, m = self.n, self.m
        blocks = P.blocks + P.fusion_diagonal()[:, None, None] * np.eye(m)[None]
        # guard isolated nodes without data
        blocks += 1e-300 * np.eye(m)[None]
        inv_blocks = np.linalg.inv(blocks)
        N = n * m
        A = spla.LinearOperator((N, N), matvec=lambda v: P.matvec(v.ravel()), dtype=float)
        M = spla.LinearOperator((N, N), matvec=lambda v: np.einsum("nij,nj->ni", inv_blocks,
                                                                   v.reshape(n, m)).ravel(), dtype=float)
        maxiter = self.opts.maxiter or 10 * N
        X = np.empty_like(B)
        for j in range(B.shape[1]):
            if not np.any(B[:, j]):
                X[:, j] = 0.0
                continue
            x, info = spla.cg(A, B[:, j], rtol=self.opts.tol, atol=0.0, maxiter=maxiter, M=M)
            if info != 0:
                res = np.linalg.norm(P.matvec(x) - B[:, j]) / np.linalg.norm(B[:, j])
                raise SolverError(f"conjugate gradients did not converge in {maxiter} iterations "
                                  f"(relative residual {res:.3e}, tolerance {self.opts.tol:.1e})")
            X[:, j] = x
        return X

    def _check(self, B, X):
        P = self.P
        for j in range(B.shape[1]):
            bn = np.linalg.norm(B[:, j])
            if bn == 0:
                continue
            res = np.linalg.norm(P.matvec(X[:, j]) - B[:, j])
            if self.opts.method == DIRECT:
                # normwise backward error
                scale = np.abs(P.to_sparse()).sum(axis=1).max() * np.linalg.norm(X[:, j]) + bn
                ok = res <= 1e-10 * scale
            else:
                ok = res <= self.opts.tol * bn * (1 + 1e-6)
            if not ok:
                raise SolverError(f"residual check failed: ||Px-b||/||b|| = {res / bn:.3e}")


def solve(P: PrecisionOperator, b: np.ndarray, opts: SolverOptions | None = None,
          solver: PrecisionSolver | None = None) -> np.ndarray:
    """One-shot solve of ``P w = b`` (builds a solver unless one is given)."""
    if solver is None:
        solver = PrecisionSolver(P.op, P.gram, opts)
    solver.factor(P)
    return solver.solve(b)


def sample_gaussian(P: PrecisionOperator, data, sigma: float, rng: np.random.Generator, *,
                    solver: PrecisionSolver | None = None, opts: SolverOptions | None = None,
                    size: int | None = None, xty: np.ndarray | None = None,
                    return_mean: bool = False):
    """Draw from N(P^-1 X'y, sigma^2 P^-1) (nu-scaled data) by perturb-and-solve.

    Each draw solves against ``X'eps1 + D' Gamma^{1/2} eps2`` with standard
    normal ``eps1`` (one per observation) and ``eps2`` (one per operator row
    and coordinate). With ``return_mean`` the exact conditional mean is
    returned as well (same factorization, one extra right-hand side).
    """
    if not sigma >= 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    if solver is None:
        solver = PrecisionSolver(P.op, P.gram, opts)
    solver.factor(P)
    n, m = P.n, P.m
    k = 1 if size is None else int(size)
    nu = np.sqrt(P.nu2)
    if xty is None:
        xty = data.xty()
    mean_rhs = xty / P.nu2[:, None]
    rhs = np.empty((n * m, k + 1))
    rhs[:, 0] = mean_rhs.ravel()
    if data.shared:
        E1 = rng.standard_normal((k,) + data.Y.shape)
        xe = (E1 @ data.X0) / nu[None, :, None]
        rhs[:, 1:] = xe.reshape(k, n * m).T
    else:
        E1 = rng.standard_normal((k, data.y.shape[0]))
        xe = _stacked_xt(data) @ E1.T
        rhs[:, 1:] = xe / np.repeat(nu, m)[:, None]
    E2 = rng.standard_normal((k, P.op.p, m))
    sw = np.sqrt(P.weights)
    D = P.op.matrix
    E2 = E2.transpose(1, 2, 0).reshape(P.op.p, m * k) * sw[:, None]
    rhs[:, 1:] += np.asarray(D.T @ E2).reshape(n * m, k)
    sol = solver.solve(rhs)
    mean = sol[:, 0].reshape(n, m)
    draws = mean[None] + sigma * sol[:, 1:].T.reshape(k, n, m)
    out = draws[0] if size is None else draws
    return (out, mean) if return_mean else out


def _stacked_xt(data) -> sp.csr_matrix:
    """Sparse (n*m x N) matrix mapping a flat residual vector to X_i' v_i."""
    cached = getattr(data, "_xt_cache", None)
    if cached is not None:
        return cached
    N, m = data.X.shape
    rows = (data.node[:, None] * m + np.arange(m)).ravel()
    cols = np.repeat(np.arange(N), m)
    mat = sp.csr_matrix((data.X.ravel(), (rows, cols)), shape=(data.n * m, N))
    data._xt_cache = mat
    return mat
