import json
import math

import numpy as np
import pytest
from scipy import stats

from spatial_tsr.corr import CorrelationModel, corr_matrix, distance_matrix
from spatial_tsr.errors import ConfigurationError, StudyAbortedError
from spatial_tsr.posterior import SamplerConfig
from spatial_tsr.priors import PriorSpec
from spatial_tsr.simharness import (
    ScenarioConfig,
    design_matrix,
    generate_tsr,
    lattice,
    replicate_seed,
    run_mc_study,
)


def test_lattice_is_cell_centred():
    pts = lattice(100, (0.0, 10.0))
    assert pts.shape == (100, 2)
    np.testing.assert_allclose(np.unique(pts[:, 0]), np.arange(10) + 0.5)
    with pytest.raises(ConfigurationError):
        ScenarioConfig(n=50)


def test_scenarios():
    s1, s2 = ScenarioConfig.S1(), ScenarioConfig.S2()
    assert s1.beta == (10.0,) and s1.design == "intercept"
    assert s2.beta == (0.0, -2.2, 0.5, 1.7, 2.4, 3.5)
    X, names = design_matrix(lattice(4, (0, 2)), "quadratic")
    assert names == ("intercept", "x1", "x2", "x1^2", "x2^2", "x1*x2")
    np.testing.assert_allclose(X[1], [1, 0.5, 1.5, 0.25, 2.25, 0.75])
    assert ScenarioConfig.from_dict(s2.to_dict()) == s2
    assert s1.digest() != s2.digest()
    with pytest.raises(ConfigurationError):
        ScenarioConfig.S1(beta=(1.0, 2.0))


def test_zero_scale_returns_mean():
    cfg = ScenarioConfig.S2(sigma2=0.0, n=16)
    data = generate_tsr(cfg, 0)
    np.testing.assert_allclose(data.y, data.X @ np.array(cfg.beta), rtol=1e-15)


def test_generation_reproducible_and_independent_streams():
    cfg = ScenarioConfig.S1(n=16, seed=5)
    a, b, c = generate_tsr(cfg, 3), generate_tsr(cfg, 3), generate_tsr(cfg, 4)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)
    s = replicate_seed(5, 3, 0)
    assert s.spawn_key == (3, 0) and s.entropy == 5


def test_marginal_covariance_moment():
    cfg = ScenarioConfig.S1(n=9, bounds=(0.0, 3.0), sigma2=0.8, nu=5.0, seed=11)
    ys = np.array([generate_tsr(cfg, r).y for r in range(10_000)])
    R = corr_matrix(cfg.model, distance_matrix(lattice(9, (0.0, 3.0))))
    target = 0.8 * R * 5.0 / 3.0
    emp = np.cov(ys.T)
    # heavy tails: a t_5 variance estimate has sd ~ sqrt(kurtosis) scaled; allow 15 %
    np.testing.assert_allclose(emp, target, rtol=0.15, atol=0.05)


def test_large_nu_is_gaussian():
    cfg = ScenarioConfig.S1(n=9, bounds=(0.0, 3.0), nu=1e6, seed=12)
    R = corr_matrix(cfg.model, distance_matrix(lattice(9, (0.0, 3.0))))
    L = np.linalg.cholesky(0.8 * R)
    ys = np.array([generate_tsr(cfg, r).y for r in range(2000)]) - 10.0
    white = np.linalg.solve(L, ys.T).ravel()
    gauss = np.random.default_rng(0).standard_normal(white.size)
    assert stats.ks_2samp(white, gauss).pvalue > 0.01


def test_single_replicate_report_equals_replicate(tmp_path):
    cfg = ScenarioConfig.S1(n=16, bounds=(0.0, 4.0), K=1, seed=3)
    sampler = SamplerConfig(M=200, burn_in=100)
    rep = run_mc_study(cfg, [PriorSpec.vague()], sampler)
    rec = rep.replicates[0]
    truth = [10.0, 0.8, 2.0, 5.0]
    for k, name in enumerate(rep.parameters):
        row = rep.rows["vague"][name]
        assert row["bias"] == pytest.approx(rec["median"][k] - truth[k], rel=1e-14)
        assert row["coverage"] == float(rec["covered"][k])
        assert row["log_length"] == pytest.approx(math.log(rec["upper"][k] - rec["lower"][k]), rel=1e-14)
        assert row["bias_sd"] == 0.0
    assert rep.parameters == ["beta_intercept", "sigma2", "phi", "nu"]
    text = rep.table()
    assert "Bias" in text and "C.P" in text and "Log length" in text
    payload = json.loads(rep.to_json())
    assert "runtime_seconds" not in payload
    assert payload["metadata"]["truth"]["phi"] == 2.0


def test_worker_count_does_not_change_results():
    cfg = ScenarioConfig.S1(n=16, bounds=(0.0, 4.0), K=3, seed=8)
    sampler = SamplerConfig(M=100, burn_in=50)
    one = run_mc_study(cfg, [PriorSpec.vague(), PriorSpec.vague(a=1.5)], sampler, workers=1)
    two = run_mc_study(cfg, [PriorSpec.vague(), PriorSpec.vague(a=1.5)], sampler, workers=2)
    assert one.to_json() == two.to_json()
    assert one.prior_labels == ["vague", "vague2"]


def test_study_aborts_when_fits_fail(monkeypatch):
    import spatial_tsr.simharness as sh

    def broken(*args, **kwargs):
        raise ArithmeticError("forced")

    monkeypatch.setattr(sh, "sample_posterior", broken)
    with pytest.raises(StudyAbortedError):
        run_mc_study(ScenarioConfig.S1(n=16, K=2), [PriorSpec.vague()], SamplerConfig(M=10, burn_in=0))
    with pytest.raises(ConfigurationError):
        run_mc_study(ScenarioConfig.S1(n=16, K=2), [], SamplerConfig())
