import math
from dataclasses import replace

import numpy as np
import pytest

from survmeta.domain import validate_dataset
from survmeta.synth import (
    DgpConfig,
    calibrate_censoring_rate,
    censored_fraction,
    generate,
    oracle_ate,
    restricted_mean_exponential,
)


def test_null_effect_has_zero_ites():
    _, truth = generate(DgpConfig(n_subjects=300, beta_treatment=0.0, beta_age=0.5))
    np.testing.assert_array_equal(truth.ite, 0.0)


def test_no_random_censoring_leaves_only_administrative():
    cfg = DgpConfig(n_subjects=500, censoring_rate=0.0, horizon=60, snapshot_tau=3)
    records, _ = generate(cfg)
    censored = [r for r in records if not r.event_flag]
    assert censored, "some subjects outlive the horizon"
    assert all(r.observed_time == cfg.snapshot_tau + cfg.horizon for r in censored)


def test_no_censoring_when_horizon_is_never_reached():
    cfg = DgpConfig(n_subjects=500, censoring_rate=0.0, baseline_hazard=0.6, horizon=60)
    records, _ = generate(cfg)
    assert all(r.event_flag for r in records)


def test_generation_is_deterministic():
    cfg = DgpConfig(n_subjects=200, seed=11, beta_latent=(0.5,), propensity_latent=(1.0,),
                    risk_noise_sd=0.3)
    a, ta = generate(cfg)
    b, tb = generate(cfg)
    assert a == b
    np.testing.assert_array_equal(ta.rmet1, tb.rmet1)
    c, _ = generate(replace(cfg, seed=12))
    assert a != c


def test_generated_data_is_valid():
    cfg = DgpConfig(n_subjects=400, beta_latent=(0.8, -0.4), propensity_latent=(1.0, 0.5))
    records, _ = generate(cfg)
    assert validate_dataset(records) == []


def test_treated_fraction_matches_propensity():
    cfg = DgpConfig(n_subjects=5000, propensity_intercept=-0.5, propensity_age=1.0)
    _, truth = generate(cfg)
    p = truth.propensity.mean()
    se = math.sqrt(p * (1 - p) / cfg.n_subjects)
    assert abs(truth.treatment.mean() - p) < 3 * se


def test_treatment_is_snapshot_adherence():
    cfg = DgpConfig(n_subjects=100, snapshot_tau=4)
    records, truth = generate(cfg)
    assert [r.adherence_series[3] for r in records] == list(truth.treatment)


def test_risk_score_is_untreated_twelve_month_probability():
    cfg = DgpConfig(n_subjects=50, beta_age=0.7)
    records, truth = generate(cfg)
    rate0 = -np.log(1 - np.array([r.risk_scores_series[0][0] for r in records])) / 12
    np.testing.assert_allclose(restricted_mean_exponential(rate0, cfg.horizon), truth.rmet0,
                               rtol=1e-9)


def test_oracle_null_and_sign():
    null = oracle_ate(DgpConfig(beta_treatment=0.0), n_mc=10**5)
    assert abs(null.ate) <= 3 * null.se + 1e-12
    assert oracle_ate(DgpConfig(beta_treatment=-0.5), n_mc=10**5).ate > 0
    assert oracle_ate(DgpConfig(beta_treatment=0.5), n_mc=10**5).ate < 0


def test_oracle_matches_continuous_closed_form():
    lam0, M = 0.03, 60
    cfg = DgpConfig(baseline_hazard=lam0, beta_treatment=math.log(2), horizon=M)
    res = oracle_ate(cfg, n_mc=10**6, discretize=False)

    def closed(lam):
        return (1 - math.exp(-lam * M)) / lam

    expected = closed(2 * lam0) - closed(lam0)
    # common random numbers make the SE tiny but the sampling error is still covered
    assert abs(res.ate - expected) < 3 * res.se + 1e-9


def test_oracle_matches_discrete_closed_form():
    cfg = DgpConfig(baseline_hazard=0.05, beta_treatment=0.5, horizon=40)
    res = oracle_ate(cfg, n_mc=10**6)
    lam1 = 0.05 * math.exp(0.5)
    expected = restricted_mean_exponential(lam1, 40) - restricted_mean_exponential(0.05, 40)
    assert abs(res.ate - expected) < 4 * res.se


def test_oracle_requires_enough_draws():
    with pytest.raises(ValueError):
        oracle_ate(DgpConfig(), n_mc=1000)


def test_sample_truth_agrees_with_oracle():
    cfg = DgpConfig(n_subjects=20000, beta_age=0.5, propensity_age=1.0)
    _, truth = generate(cfg)
    assert truth.sample_ate == pytest.approx(oracle_ate(cfg).ate, abs=0.1)


def test_calibrated_censoring_rate():
    cfg = DgpConfig(beta_age=0.5, horizon=60)
    rate = calibrate_censoring_rate(cfg, 0.4)
    assert censored_fraction(replace(cfg, censoring_rate=rate)) == pytest.approx(0.4, abs=1e-3)


@pytest.mark.parametrize("kw", [
    dict(baseline_hazard=0.0), dict(censoring_rate=-1.0), dict(horizon=95, snapshot_tau=3),
    dict(beta_latent=(1.0,)), dict(formulation_probs=(0.5, 0.5, 0.5)), dict(n_subjects=0),
])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        DgpConfig(**kw)


def test_config_dict_round_trip():
    cfg = DgpConfig(beta_latent=(0.3,), propensity_latent=(0.2,))
    assert DgpConfig.from_dict(cfg.to_dict()) == cfg
