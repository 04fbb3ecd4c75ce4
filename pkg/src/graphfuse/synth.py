"""Synthetic datasets and evaluation metrics.

Angles are degrees at every public boundary and radians internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UsageError
from .graph import ProximityGraph, build_knn_graph, build_lattice_graph, build_path_graph
from .model import Dataset

HETEROGENEOUS = "heterogeneous"
HOMOGENEOUS = "homogeneous"


def fold_orientation(theta_deg):
    """Map angles to (-90, 90]."""
    return 90.0 - np.mod(90.0 - np.asarray(theta_deg, dtype=float), 180.0)


def angular_error(a, b, period: float = 180.0):
    """Smallest absolute difference between angles modulo ``period``, in [0, period/2]."""
    if period not in (180, 360, 180.0, 360.0):
        raise ParameterError(f"period must be 180 or 360, got {period}")
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), period)
    return np.minimum(diff, period - diff)


# -- orientation maps ------------------------------------------------------------------


@dataclass(frozen=True)
class OrientationMap:
    height: int
    width: int
    theta: np.ndarray  # (height*width,) degrees, row-major
    r: np.ndarray

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def beta(self) -> np.ndarray:
        t = np.radians(self.theta)
        return np.column_stack([self.r * np.cos(t), self.r * np.sin(t)])

    def graph(self) -> ProximityGraph:
        return build_lattice_graph(self.height, self.width)

    def as_image(self, values=None) -> np.ndarray:
        return np.asarray(self.theta if values is None else values).reshape(self.height, self.width)


def generate_opm(height: int, width: int, n_waves: int = 16, wavelength: float = 64.0,
                 rng: np.random.Generator | None = None) -> OrientationMap:
    """Pinwheel map from the phase of a superposition of plane waves.

    Wave directions are equally spaced over a half circle, each with a random
    sign and phase; the preferred orientation is half the complex argument.
    """
    if n_waves < 4:
        raise ParameterError(f"n_waves must be >= 4, got {n_waves}")
    if not wavelength > 0:
        raise ParameterError(f"wavelength must be positive, got {wavelength}")
    rng = rng or np.random.default_rng()
    ang = np.pi * np.arange(n_waves) / n_waves
    sign = rng.choice([-1.0, 1.0], size=n_waves)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
    k = 2.0 * np.pi / wavelength
    kx, ky = sign * k * np.cos(ang), sign * k * np.sin(ang)
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    z = np.zeros((height, width), dtype=complex)
    for j in range(n_waves):
        z += np.exp(1j * (kx[j] * xx + ky[j] * yy + phase[j]))
    theta = fold_orientation(np.degrees(np.angle(z)) / 2.0).ravel()
    return OrientationMap(height, width, theta, np.ones(height * width))


def generate_random_map(height: int, width: int, rng: np.random.Generator | None = None) -> OrientationMap:
    """Independent uniform orientations on every pixel."""
    rng = rng or np.random.default_rng()
    theta = fold_orientation(rng.uniform(-90.0, 90.0, size=height * width))
    return OrientationMap(height, width, theta, np.ones(height * width))


def simulate_responses(omap: OrientationMap, n_trials: int, sigma: float,
                       rng: np.random.Generator | None = None) -> Dataset:
    """Shared-design responses ``y_i = X0 beta_i + N(0, sigma^2)`` to random gratings."""
    if n_trials < 1:
        raise ParameterError(f"n_trials must be >= 1, got {n_trials}")
    if not sigma >= 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    rng = rng or np.random.default_rng()
    phi = np.radians(fold_orientation(rng.uniform(-90.0, 90.0, size=n_trials)))
    X0 = np.column_stack([np.cos(phi), np.sin(phi)])
    Y = omap.beta @ X0.T
    if sigma > 0:
        Y = Y + sigma * rng.standard_normal(Y.shape)
    return Dataset.from_shared(Y, X0)


def count_pinwheels(omap: OrientationMap) -> int:
    """Number of 2x2 plaquettes around which the orientation winds by +-180 degrees."""
    th = omap.as_image()

    def step(a, b):
        return fold_orientation(b - a)

    a, b, c, d = th[:-1, :-1], th[:-1, 1:], th[1:, 1:], th[1:, :-1]
    wind = step(a, b) + step(b, c) + step(c, d) + step(d, a)
    return int(np.sum(np.abs(np.abs(wind) - 180.0) < 1e-6))


# -- 1-D heteroscedastic signal ---------------------------------------------------------


@dataclass(frozen=True)
class HeteroSignal:
    t: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.t.size

    def dataset(self) -> Dataset:
        return Dataset.from_stacked(np.arange(self.n), self.y, np.ones((self.n, 1)), n=self.n)

    def graph(self) -> ProximityGraph:
        return build_path_graph(self.n)


def hetero_truth(t):
    t = np.asarray(t, dtype=float)
    return np.sqrt(t * (1.0 - t)) * np.sin(11.0 * np.pi * t ** 4)


def hetero_noise_sd(t, noise_mode: str = HETEROGENEOUS) -> np.ndarray:
    """Noise SD profile; the homogeneous level matches the mean noise power of the other."""
    t = np.asarray(t, dtype=float)
    het = np.where((t >= 0.5) & (t <= 0.6), 1.0, 0.1)
    if noise_mode == HETEROGENEOUS:
        return het
    if noise_mode == HOMOGENEOUS:
        return np.full(t.shape, np.sqrt(np.mean(het ** 2)))
    raise ParameterError(f"unknown noise mode {noise_mode!r}")


def generate_hetero_signal(n: int, noise_mode: str = HETEROGENEOUS,
                           rng: np.random.Generator | None = None) -> HeteroSignal:
    """Noisy samples of a chirp-like signal on t = i/n, i = 1..n."""
    if n < 10:
        raise ParameterError(f"n must be >= 10, got {n}")
    rng = rng or np.random.default_rng()
    t = np.arange(1, n + 1) / n
    beta = hetero_truth(t)
    sigma = hetero_noise_sd(t, noise_mode)
    y = beta + sigma * rng.standard_normal(n)
    return HeteroSignal(t, beta, sigma, y)


# -- clustered phase data ---------------------------------------------------------------


@dataclass(frozen=True)
class PhaseDataset:
    """Per-neuron lists of phases (degrees) with 3-D positions and pool labels."""

    phases: tuple  # tuple of 1-D arrays, degrees
    locations: np.ndarray
    pool: np.ndarray
    preferred: np.ndarray  # generating phase per neuron, degrees

    @property
    def n(self) -> int:
        return len(self.phases)

    def observations(self, i: int) -> np.ndarray:
        t = np.radians(self.phases[i])
        return np.column_stack([np.cos(t), np.sin(t)])

    def graph(self, k: int = 1, r: float = 5.0) -> ProximityGraph:
        return build_knn_graph(self.locations, k, r)


def _wrap_deg(a):
    return np.mod(np.asarray(a, dtype=float) + 180.0, 360.0) - 180.0


def generate_phase_data(n_pools: int, neurons_per_pool: int, spikes_per_neuron: int,
                        concentration: float, rng: np.random.Generator | None = None, *,
                        neuron_spread_deg: float = 10.0, outlier_fraction: float = 0.1,
                        pool_spacing: float = 10.0, pool_radius: float = 1.5) -> PhaseDataset:
    """Spatially clustered neurons whose preferred phases follow their pool.

    Each pool has a uniform random phase and a random 3-D centre. Neurons sit
    around the centre; their preferred phase is the pool phase plus a
    wrapped-normal deviation of ``neuron_spread_deg`` (or uniform, for a
    fraction ``outlier_fraction`` of neurons). Spike phases scatter around the
    neuron's preferred phase as a wrapped normal with SD ``1/sqrt(concentration)``
    radians.
    """
    if min(n_pools, neurons_per_pool, spikes_per_neuron) < 1:
        raise ParameterError("pool, neuron and spike counts must all be >= 1")
    if not concentration > 0:
        raise ParameterError(f"concentration must be positive, got {concentration}")
    if not 0.0 <= outlier_fraction <= 1.0:
        raise ParameterError(f"outlier_fraction must be in [0, 1], got {outlier_fraction}")
    rng = rng or np.random.default_rng()
    n = n_pools * neurons_per_pool
    pool = np.repeat(np.arange(n_pools), neurons_per_pool)
    centres = rng.uniform(0.0, pool_spacing * n_pools ** (1 / 3), size=(n_pools, 3))
    locations = centres[pool] + pool_radius * rng.standard_normal((n, 3))
    pool_phase = rng.uniform(-180.0, 180.0, size=n_pools)
    preferred = pool_phase[pool] + neuron_spread_deg * rng.standard_normal(n)
    outlier = rng.random(n) < outlier_fraction
    preferred[outlier] = rng.uniform(-180.0, 180.0, size=int(outlier.sum()))
    preferred = _wrap_deg(preferred)
    sd = np.degrees(1.0 / np.sqrt(concentration))
    spikes = _wrap_deg(preferred[:, None] + sd * rng.standard_normal((n, spikes_per_neuron)))
    return PhaseDataset(tuple(spikes), locations, pool, preferred)


@dataclass(frozen=True)
class PhaseSplit:
    train_index: np.ndarray  # index of the held-in phase per neuron
    y_train: np.ndarray  # (n, 2) unit vectors
    y_test: np.ndarray  # (n, 2) mean unit vector of the rest

    @property
    def theta_train(self) -> np.ndarray:
        return np.degrees(np.arctan2(self.y_train[:, 1], self.y_train[:, 0]))

    @property
    def theta_test(self) -> np.ndarray:
        return np.degrees(np.arctan2(self.y_test[:, 1], self.y_test[:, 0]))

    def train_dataset(self) -> Dataset:
        """One observation per neuron under the stacked 2x2 identity design."""
        n = self.y_train.shape[0]
        node = np.repeat(np.arange(n), 2)
        X = np.tile(np.eye(2), (n, 1))
        return Dataset.from_stacked(node, self.y_train.ravel(), X, n=n)


def phase_dataset(ds: PhaseDataset) -> Dataset:
    """All observations of every neuron under the stacked-identity design."""
    node, y = [], []
    for i in range(ds.n):
        obs = ds.observations(i)
        node.append(np.repeat(i, obs.size))
        y.append(obs.ravel())
    node = np.concatenate(node)
    X = np.tile(np.eye(2), (node.size // 2, 1))
    return Dataset.from_stacked(node, np.concatenate(y), X, n=ds.n)


def split_train_test(ds: PhaseDataset, rng: np.random.Generator | None = None) -> PhaseSplit:
    """Hold one random phase per neuron for training; average the rest for testing."""
    counts = np.array([len(p) for p in ds.phases])
    if np.any(counts < 2):
        raise UsageError(f"every neuron needs at least two phases; nodes {np.flatnonzero(counts < 2)[:10].tolist()}")
    rng = rng or np.random.default_rng()
    pick = np.floor(rng.random(ds.n) * counts).astype(np.int64)
    y_train = np.empty((ds.n, 2))
    y_test = np.empty((ds.n, 2))
    for i in range(ds.n):
        obs = ds.observations(i)
        y_train[i] = obs[pick[i]]
        y_test[i] = np.delete(obs, pick[i], axis=0).mean(axis=0)
    return PhaseSplit(pick, y_train, y_test)
