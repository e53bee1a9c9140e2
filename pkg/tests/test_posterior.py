import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from spatial_tsr.corr import CorrelationModel, corr_matrix, cross_distances
from spatial_tsr.errors import ConfigurationError, DomainError
from spatial_tsr.glscore import SpatialDataset, gls_summary
from spatial_tsr.posterior import (
    MarginalPosterior,
    PosteriorDraws,
    SamplerConfig,
    effective_sample_size,
    log_likelihood,
    log_marginal_post_phinu,
    predict,
    sample_conditional,
    sample_posterior,
)
from spatial_tsr.priors import PriorSpec
from spatial_tsr.simharness import ScenarioConfig, generate_tsr

EXP = CorrelationModel("matern", kappa=0.5)


def test_loglik_at_centre_with_uncorrelated_sites():
    # spherical range below every distance gives R = I; at y = X beta the quadratic form vanishes
    coords = np.array([[0.0, 0.0], [5.0, 0.0]])
    data = SpatialDataset(coords, np.array([1.0, 1.0]), np.ones(2))
    nu, s2 = 6.5, 1.7
    got = log_likelihood([1.0], s2, 1.0, nu, data, CorrelationModel("spherical"))
    n = 2
    want = special.gammaln((nu + n) / 2) - special.gammaln(nu / 2) - n / 2 * math.log(nu * math.pi * s2)
    assert got == pytest.approx(want, rel=1e-14)


def test_loglik_matches_scipy_multivariate_t(rng):
    coords = rng.uniform(0, 3, (5, 2))
    X = np.column_stack([np.ones(5), rng.normal(size=5)])
    y = rng.normal(size=5)
    data = SpatialDataset(coords, y, X)
    beta, s2, phi, nu = np.array([0.3, -0.2]), 0.9, 1.4, 5.5
    R = corr_matrix(EXP, data.distances, phi)
    want = stats.multivariate_t(loc=X @ beta, shape=s2 * R, df=nu).logpdf(y)
    assert log_likelihood(beta, s2, phi, nu, data, EXP) == pytest.approx(want, rel=1e-12)
    with pytest.raises(DomainError):
        log_likelihood(beta, -1.0, phi, nu, data, EXP)


@given(st.floats(-100, 100))
@settings(max_examples=25, deadline=None)
def test_loglik_translation_invariant(c):
    rng = np.random.default_rng(3)
    coords = rng.uniform(0, 3, (6, 2))
    data = SpatialDataset(coords, rng.normal(size=6), np.ones(6))
    a = log_likelihood([0.4], 1.1, 1.2, 7.0, data, EXP)
    b = log_likelihood([0.4 + c], 1.1, 1.2, 7.0, data.with_response(data.y + c), EXP)
    assert a == pytest.approx(b, abs=1e-9)


def test_A_term_vanishes_for_unit_exponent(n10):
    target = MarginalPosterior(n10, EXP, PriorSpec.reference())
    np.testing.assert_array_equal(target.log_A(np.array([4.5, 10.0, 1e4])), 0.0)


@pytest.mark.parametrize("prior", [PriorSpec.reference(), PriorSpec.vague()], ids=["reference", "vague"])
def test_kernel_differences_invariant_to_response_scale(n10, prior):
    pts = [(0.8, 5.0), (2.0, 9.0), (3.1, 40.0)]
    for c in (0.01, 7.0):
        scaled = n10.with_response(c * n10.y)
        base = [log_marginal_post_phinu(ph, nu, n10, EXP, prior) for ph, nu in pts]
        new = [log_marginal_post_phinu(ph, nu, scaled, EXP, prior) for ph, nu in pts]
        np.testing.assert_allclose(np.diff(new), np.diff(base), rtol=1e-10, atol=1e-10)


def test_kernel_support(n10):
    vag = MarginalPosterior(n10, EXP, PriorSpec.vague())
    assert vag.log_kernel(5.0, 6.0) == -math.inf
    assert vag.log_kernel(2.0, 4.0) == -math.inf
    np.testing.assert_array_equal(vag.log_kernel(5.0, np.array([5.0, 6.0])), -np.inf)
    ref = MarginalPosterior(n10, EXP, PriorSpec.reference())
    assert ref.log_kernel(2.0, 4.1) == -math.inf
    assert math.isfinite(ref.log_kernel(2.0, 4.2))
    vec = ref.log_kernel(2.0, np.array([4.2, 8.0]))
    assert vec[1] == pytest.approx(ref.log_kernel(2.0, 8.0), rel=1e-14)


def _summary(data, phi):
    return gls_summary(data, corr_matrix(EXP, data.distances, phi))


def test_conditional_sigma2_is_beta_prime(n10):
    s = _summary(n10, 1.5)
    m = n10.n - n10.p
    for a, nu in [(1.0, 5.0), (2.1, 12.0)]:
        sigma2, beta = sample_conditional(s, nu, a, 10_000, np.random.default_rng(1))
        u = nu * sigma2 / (m * s.S2)
        ks = stats.kstest(u, stats.betaprime(nu / 2 - a + 1, m / 2 + a - 1).cdf).statistic
        assert ks < 0.02
        se = beta.std(axis=0, ddof=1) / math.sqrt(len(beta))
        assert np.all(np.abs(beta.mean(axis=0) - s.beta_hat) < 3 * se)


def test_conditional_beta_covariance(n10_trend):
    s = _summary(n10_trend, 2.0)
    nu, a = 9.0, 1.0
    sigma2, beta = sample_conditional(s, nu, a, 40_000, np.random.default_rng(2))
    m = n10_trend.n - n10_trend.p
    df = nu + m
    # E[(nu sigma2 + m S2) / df] times the t variance inflation df / (df - 2)
    expected = np.mean((nu * sigma2 + m * s.S2) / df) * df / (df - 2) * s.V_beta
    np.testing.assert_allclose(np.cov(beta.T), expected, rtol=0.05)


def test_ess_of_independent_and_correlated_chains():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4000)
    assert 3000 < effective_sample_size(x) < 5000
    ar = np.empty(4000)
    ar[0] = 0
    for i in range(1, 4000):
        ar[i] = 0.9 * ar[i - 1] + rng.normal()
    # tau = (1 + 0.9) / (1 - 0.9) = 19
    assert 4000 / 35 < effective_sample_size(ar) < 4000 / 10


@pytest.fixture(scope="module")
def field50():
    cfg = ScenarioConfig(n=49, bounds=(0.0, 7.0), K=1, seed=99)
    return generate_tsr(cfg, 0)


def test_sampler_reproducible_and_round_trips(field50, tmp_path):
    cfg = SamplerConfig(M=300, burn_in=200, seed=4)
    a = sample_posterior(field50, EXP, PriorSpec.vague(), cfg)
    b = sample_posterior(field50, EXP, PriorSpec.vague(), cfg)
    np.testing.assert_array_equal(a.parameter_matrix(), b.parameter_matrix())
    assert a.config_digest == b.config_digest
    c = sample_posterior(field50, EXP, PriorSpec.vague(), SamplerConfig(M=300, burn_in=200, seed=5))
    assert not np.array_equal(a.phi, c.phi)
    assert a.config_digest != c.config_digest
    path = tmp_path / "draws.csv"
    a.to_csv(path)
    back = PosteriorDraws.from_csv(path)
    np.testing.assert_array_equal(back.parameter_matrix(), a.parameter_matrix())
    np.testing.assert_array_equal(back.log_post, a.log_post)
    assert back.config_digest == a.config_digest and back.seed == 4
    assert back.parameter_names() == ["beta_intercept", "sigma2", "phi", "nu"]
    assert np.all((a.phi >= 0.1) & (a.phi <= 4.72)) and np.all(a.nu >= 4.1)
    summ = a.summary()
    assert summ["phi"]["lower"] <= summ["phi"]["median"] <= summ["phi"]["upper"]


def test_grid_and_metropolis_agree(field50):
    prior = PriorSpec.vague()
    met = sample_posterior(field50, EXP, prior, SamplerConfig(M=4000, burn_in=1000, seed=1))
    grid = sample_posterior(field50, EXP, prior, SamplerConfig(mode="grid", M=4000, seed=1, grid_phi=60, grid_nu=60))
    for name in ("phi", "nu"):
        x, y = getattr(met, name), getattr(grid, name)
        ess = met.diagnostics[f"ess_{name}"]
        # standard error of a median ~ 1.25 sd / sqrt(ess)
        se = 1.253 * math.sqrt(np.var(x) / ess + np.var(y) / len(y))
        assert abs(np.median(x) - np.median(y)) < 4 * se, name
    assert 0 <= grid.diagnostics["grid_edge_mass"] <= 1


def test_improper_configuration_warns(field50):
    # Matern kappa = 1 with an intercept needs a > 1 strictly; the reference prior has a = 1
    with pytest.warns(UserWarning, match="propriety"):
        draws = sample_posterior(
            field50, CorrelationModel("matern", kappa=1.0), PriorSpec.reference(), SamplerConfig(M=50, burn_in=50)
        )
    assert draws.diagnostics["propriety"] == "not_guaranteed"


def test_sampler_config_validation():
    with pytest.raises(ConfigurationError):
        SamplerConfig(mode="gibbs")
    with pytest.raises(ConfigurationError):
        SamplerConfig(M=0)
    with pytest.raises(ConfigurationError):
        SamplerConfig(proposal_sd=(0.1, -1.0))
    cfg = SamplerConfig(mode="grid", grid_phi=10)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg


def _single_draw(beta, sigma2, phi, nu):
    return PosteriorDraws(
        beta=np.atleast_2d(beta),
        sigma2=np.array([sigma2]),
        phi=np.array([phi]),
        nu=np.array([nu]),
        log_post=np.zeros(1),
        acceptance_rate=1.0,
        seed=0,
        config_digest="",
    )


def test_predict_conditional_mean_matches_dense_oracle(n10_trend):
    data = n10_trend
    beta, s2, phi, nu = np.array([9.8, 0.15]), 0.7, 1.5, 6.0
    draws = _single_draw(beta, s2, phi, nu)
    new = np.array([[1.0, 1.0], [2.5, 4.0], [4.9, 0.2]])
    X0 = np.column_stack([np.ones(3), new[:, 0]])
    pred = predict(draws, data, EXP, new, X0, seed=0)
    Ri = np.linalg.inv(corr_matrix(EXP, data.distances, phi))
    r0 = np.exp(-cross_distances(data.coords, new) / phi)
    want = X0 @ beta + r0.T @ Ri @ (data.y - data.X @ beta)
    np.testing.assert_allclose(pred.mean, want, rtol=1e-11)


def test_predict_interval_is_student_t_quantile(n10):
    beta, s2, phi, nu = np.array([10.0]), 0.6, 1.2, 5.0
    draws = _single_draw(beta, s2, phi, nu)
    draws = PosteriorDraws(
        beta=np.repeat(draws.beta, 20000, axis=0),
        sigma2=np.full(20000, s2),
        phi=np.full(20000, phi),
        nu=np.full(20000, nu),
        log_post=np.zeros(20000),
        acceptance_rate=1.0,
        seed=0,
        config_digest="",
    )
    site = np.array([[2.0, 2.0]])
    pred = predict(draws, n10, EXP, site, np.ones((1, 1)), seed=3)
    Ri = np.linalg.inv(corr_matrix(EXP, n10.distances, phi))
    r0 = np.exp(-cross_distances(n10.coords, site) / phi)[:, 0]
    e = n10.y - 10.0
    Q = e @ Ri @ e / s2
    scale = math.sqrt(s2 * (1 - r0 @ Ri @ r0) * (nu + Q) / (nu + n10.n))
    mu = 10.0 + r0 @ Ri @ e
    hi = mu + scale * stats.t(nu + n10.n).ppf(0.975)
    # the 97.5% sample quantile of 2e4 draws has a standard error of about 0.02 scale
    assert pred.upper[0] == pytest.approx(hi, abs=0.08 * scale)
    assert pred.median[0] == pytest.approx(mu, abs=0.04 * scale)
    assert pred.mean[0] == pytest.approx(mu, rel=1e-12)


def test_predict_exact_and_far_sites(n10):
    draws = _single_draw([10.0], 0.8, 1.0, 5.0)
    pred = predict(draws, n10, EXP, n10.coords[2:4], np.ones((2, 1)))
    np.testing.assert_array_equal(pred.mean, n10.y[2:4])
    np.testing.assert_array_equal(pred.lower, n10.y[2:4])
    sph = CorrelationModel("spherical")
    far = predict(draws, n10, sph, [[100.0, 100.0]], np.ones((1, 1)))
    assert far.mean[0] == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(DomainError):
        predict(draws, n10, EXP, [[1.0, 1.0]], np.ones((1, 2)))
