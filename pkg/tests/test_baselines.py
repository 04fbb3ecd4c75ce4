import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphfuse.baselines import GammaSearchSpec, RidgeSmoother, default_gamma_grid, ml_estimate, ridge_smooth, \
    select_gamma
from graphfuse.errors import ParameterError, SingularDesignError, UsageError
from graphfuse.gibbs import orientation_deg
from graphfuse.graph import as_operator, build_lattice_graph, build_path_graph
from graphfuse.model import Dataset
from graphfuse.sparse import SolverOptions
from graphfuse.synth import generate_opm, simulate_responses


def identity_stack(y_pairs):
    y = np.asarray(y_pairs, dtype=float)
    return (y.ravel(), np.tile(np.eye(2), (y.shape[0], 1)))


def test_ml_circular_mean_of_two_phases():
    data = Dataset.from_nodes([identity_stack([[1.0, 0.0], [0.0, 1.0]])])
    beta = ml_estimate(data)
    assert np.allclose(beta, [[0.5, 0.5]])
    assert np.isclose(orientation_deg(beta)[0], 45.0)
    assert np.isclose(np.linalg.norm(beta), np.sqrt(0.5))


def test_ml_noiseless_recovers_truth(rng):
    beta = rng.normal(size=(5, 3))
    nodes = []
    for b in beta:
        X = rng.normal(size=(6, 3))
        nodes.append((X @ b, X))
    assert np.allclose(ml_estimate(Dataset.from_nodes(nodes)), beta, atol=1e-12)
    X0 = rng.normal(size=(7, 3))
    assert np.allclose(ml_estimate(Dataset.from_shared(beta @ X0.T, X0)), beta, atol=1e-12)


def test_ml_single_observation_is_the_observation(rng):
    t = rng.uniform(-np.pi, np.pi, size=4)
    obs = np.column_stack([np.cos(t), np.sin(t)])
    beta = ml_estimate(Dataset.from_nodes([identity_stack([o]) for o in obs]))
    assert np.allclose(beta, obs)
    assert np.allclose(np.linalg.norm(beta, axis=1), 1.0)


def test_ml_singular_nodes_listed():
    data = Dataset.from_nodes([([1.0, 2.0], [[1.0, 0.0], [0.0, 1.0]]), ([1.0], [[1.0, 1.0]]),
                               ([1.0], [[0.0, 2.0]])])
    with pytest.raises(SingularDesignError) as exc:
        ml_estimate(data)
    assert exc.value.nodes == [1, 2]
    assert "[1, 2]" in str(exc.value)


def stacked_problem(rng, n, m=2):
    return Dataset.from_nodes([(rng.normal(size=4), rng.normal(size=(4, m))) for _ in range(n)])


def test_ridge_small_gamma_is_ml(rng):
    data = stacked_problem(rng, 6)
    assert np.allclose(ridge_smooth(data, build_path_graph(6), 1e-10), ml_estimate(data), atol=1e-7)


def test_ridge_large_gamma_pools(oracles):
    ref = oracles["ridge_pooled_limit"]
    data = Dataset.from_shared(np.asarray(ref["Y"]), np.asarray(ref["X0"]))
    beta = ridge_smooth(data, build_path_graph(3), 1e8)
    assert np.allclose(beta, np.tile(ref["pooled"], (3, 1)), atol=1e-6)


@pytest.mark.parametrize("opts", [SolverOptions(), SolverOptions(method="cg", tol=1e-13)])
def test_ridge_matches_dense_closed_form(rng, opts):
    g = build_lattice_graph(2, 4)
    data = stacked_problem(rng, g.n)
    gamma = 0.7
    D = as_operator(g).matrix.toarray()
    A = np.kron(D.T @ D, np.eye(2)) * gamma
    for i in range(g.n):
        A[2 * i:2 * i + 2, 2 * i:2 * i + 2] += data.gram()[i]
    ref = np.linalg.solve(A, data.xty().ravel()).reshape(g.n, 2)
    assert np.max(np.abs(ridge_smooth(data, g, gamma, opts) - ref)) < 1e-8


@given(st.integers(0, 2**32), st.floats(1e-3, 1e3))
def test_ridge_linear_in_responses(seed, gamma):
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(5, 2))
    Y1, Y2 = rng.normal(size=(2, 6, 5))
    g = build_lattice_graph(2, 3)
    s = RidgeSmoother(Dataset.from_shared(Y1, X0), g)
    a = s.fit(gamma)
    b = RidgeSmoother(Dataset.from_shared(Y2, X0), g).fit(gamma)
    ab = RidgeSmoother(Dataset.from_shared(Y1 + Y2, X0), g).fit(gamma)
    assert np.allclose(a + b, ab, atol=1e-9 * (1 + np.abs(ab).max()))


@given(st.integers(0, 2**32), st.floats(1e-3, 1e4))
def test_ridge_reduces_roughness(seed, gamma):
    rng = np.random.default_rng(seed)
    g = build_path_graph(6)
    data = stacked_problem(rng, 6)
    op = as_operator(g)
    rough = lambda b: float((op.row_norms(b) ** 2).sum())
    assert rough(ridge_smooth(data, g, gamma)) <= rough(ml_estimate(data)) * (1 + 1e-9)


def test_ridge_rejects_bad_gamma(rng):
    data = stacked_problem(rng, 3)
    with pytest.raises(ParameterError):
        ridge_smooth(data, build_path_graph(3), 0.0)


def test_select_gamma_recovers_fabricated_truth(rng):
    g = build_lattice_graph(4, 4)
    data = stacked_problem(rng, g.n)
    grid = default_gamma_grid()
    g0 = float(grid[9])
    truth = ridge_smooth(data, g, g0)
    assert select_gamma(data, g, GammaSearchSpec(grid=grid), truth=truth) == g0


def test_select_gamma_pure_noise_picks_largest(rng):
    g = build_lattice_graph(8, 8)
    X0 = rng.normal(size=(10, 2))
    data = Dataset.from_shared(rng.normal(size=(g.n, 10)), X0)
    grid = default_gamma_grid()
    best, scores = select_gamma(data, g, GammaSearchSpec(grid=grid), truth=np.zeros((g.n, 2)),
                                return_scores=True)
    assert best == grid[-1]
    assert np.all(np.diff(scores) < 0)


def test_select_gamma_needs_truth_in_oracle_mode(rng):
    data = stacked_problem(rng, 3)
    with pytest.raises(UsageError):
        select_gamma(data, build_path_graph(3))


def test_select_gamma_interior_on_smooth_map():
    rng = np.random.default_rng(0)
    omap = generate_opm(32, 32, n_waves=8, wavelength=16, rng=rng)
    data = simulate_responses(omap, 20, 0.4, rng)
    grid = default_gamma_grid()
    best = select_gamma(data, omap.graph(), GammaSearchSpec(grid=grid), truth=omap.beta)
    assert grid[0] < best < grid[-1]


@pytest.mark.parametrize("shared", [True, False])
def test_kfold_selection(shared):
    rng = np.random.default_rng(1)
    omap = generate_opm(16, 16, n_waves=8, wavelength=16, rng=rng)
    data = simulate_responses(omap, 20, 0.4, rng)
    if not shared:
        data = data.to_stacked()
    grid = default_gamma_grid()
    best = select_gamma(data, omap.graph(), GammaSearchSpec(grid=grid, mode="kfold", k=5))
    assert grid[0] < best < grid[-1]


def test_kfold_requirements(rng):
    data = Dataset.from_nodes([([1.0], [[1.0]])] * 3)
    with pytest.raises(UsageError):
        select_gamma(data, build_path_graph(3), GammaSearchSpec(mode="kfold", k=2))
    shared = Dataset.from_shared(rng.normal(size=(3, 4)), rng.normal(size=(4, 1)))
    with pytest.raises(UsageError):
        select_gamma(shared, build_path_graph(3), GammaSearchSpec(mode="kfold", k=10))
    with pytest.raises(ParameterError):
        GammaSearchSpec(mode="kfold", k=1)
    with pytest.raises(ParameterError):
        GammaSearchSpec(mode="loo")
