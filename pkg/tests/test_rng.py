import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from graphfuse.errors import ParameterError
from graphfuse.rng import (make_stream, sample_gamma, sample_inverse_gamma, sample_inverse_gaussian,
                           sample_std_normal)

N = 1_000_000


def test_std_normal_moments():
    x = sample_std_normal(make_stream(1), N)
    assert abs(x.mean()) < 4e-3
    assert abs(x.var() - 1) < 0.01


def test_std_normal_ks():
    x = sample_std_normal(make_stream(2), 100_000)
    d = stats.kstest(x, "norm").statistic
    assert d < 1.63 / np.sqrt(x.size)  # asymptotic 1% critical value


def test_streams_replay_and_differ():
    a = sample_std_normal(make_stream(7, 3), 10)
    b = sample_std_normal(make_stream(7, 3), 10)
    c = sample_std_normal(make_stream(7, 4), 10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_entropy_seed_is_logged(caplog):
    with caplog.at_level("INFO", logger="graphfuse.rng"):
        make_stream(None)
    assert "seed" in caplog.text


def test_gamma_exponential_case():
    x = sample_gamma(1.0, 1.0, make_stream(3), N)
    assert abs(x.mean() - 1) < 0.01


def test_gamma_shape7_rate_half():
    x = sample_gamma(7.0, 0.5, make_stream(4), N)
    assert abs(x.mean() / 14 - 1) < 0.02
    assert abs(x.var() / 28 - 1) < 0.02


def test_gamma_small_shape_is_exact():
    x = sample_gamma(0.05, 2.0, make_stream(5), 200_000)
    d = stats.kstest(x, stats.gamma(a=0.05, scale=0.5).cdf).statistic
    assert d < 1.63 / np.sqrt(x.size)


@pytest.mark.parametrize("shape,rate", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (np.nan, 1.0), (1.0, np.inf)])
def test_gamma_rejects_bad_parameters(shape, rate):
    with pytest.raises(ParameterError):
        sample_gamma(shape, rate, make_stream(0))


def test_inverse_gamma_unit_mean_and_variance():
    x = sample_inverse_gamma(3.0, 2.0, make_stream(6), N)
    assert abs(x.mean() - 1) < 0.02
    assert abs(x.var() - 1) < 0.05


def test_inverse_gamma_reciprocal_is_gamma():
    x = sample_inverse_gamma(3.0, 2.0, make_stream(8), 100_000)
    d = stats.kstest(1 / x, stats.gamma(a=3.0, scale=1 / 2.0).cdf).statistic
    assert d < 1.63 / np.sqrt(x.size)


def test_inverse_gamma_rejects_zero_scale():
    with pytest.raises(ParameterError):
        sample_inverse_gamma(1.0, 0.0, make_stream(0))


def test_inverse_gaussian_unit_parameters():
    x = sample_inverse_gaussian(1.0, 1.0, make_stream(9), N)
    assert abs(x.mean() - 1) < 0.01
    assert abs(x.var() - 1) < 0.03


def test_inverse_gaussian_mu2_lam4():
    x = sample_inverse_gaussian(2.0, 4.0, make_stream(10), N)
    assert abs(x.mean() / 2 - 1) < 0.03
    assert abs(x.var() / 2 - 1) < 0.03


def test_inverse_gaussian_density_histogram(oracles):
    ref = oracles["inverse_gaussian_bins_mu1_lam1"]
    edges, probs = np.array(ref["edges"]), np.array(ref["probs"])
    total = 10_000_000
    counts = np.zeros(probs.size)
    rng = make_stream(11)
    for _ in range(10):
        counts += np.histogram(sample_inverse_gaussian(1.0, 1.0, rng, total // 10), bins=edges)[0]
    rel = np.abs(counts / total - probs) / probs
    assert rel.max() < 0.05


def test_inverse_gaussian_matches_scipy_ks():
    mu, lam = 0.3, 5.0
    x = sample_inverse_gaussian(mu, lam, make_stream(12), 100_000)
    d = stats.kstest(x, stats.invgauss(mu / lam, scale=lam).cdf).statistic
    assert d < 1.63 / np.sqrt(x.size)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.integers(0, 2**32))
def test_inverse_gaussian_positive(mu, lam, seed):
    x = sample_inverse_gaussian(mu, lam, make_stream(seed), 200)
    assert np.all(x > 0) and np.all(np.isfinite(x))


@given(st.integers(0, 2**63), st.integers(0, 2**20))
def test_samplers_are_pure_functions_of_stream(seed, sid):
    draws = []
    for _ in range(2):
        rng = make_stream(seed, sid)
        draws.append(np.r_[sample_gamma(2.0, 1.0, rng, 3), sample_inverse_gamma(2.0, 1.0, rng, 3),
                           sample_inverse_gaussian(1.0, 2.0, rng, 3)])
    assert np.array_equal(draws[0], draws[1])


def test_vectorised_parameters_broadcast():
    x = sample_inverse_gaussian(np.array([0.5, 1.0, 5.0]), 2.0, make_stream(13))
    assert x.shape == (3,)
