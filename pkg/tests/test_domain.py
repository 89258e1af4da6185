import numpy as np
import pytest

from survmeta.domain import (
    EffectEstimate,
    FeatureSpec,
    SnapshotCohort,
    SubjectRecord,
    SurvivalCurve,
    SurvivalCurves,
    validate_dataset,
)


def make_record(sid="s1", T=3, months=3, scores=(0.1, 0.2, 0.3, 0.4, 0.5), **kw):
    base = dict(
        id=sid,
        observed_time=T,
        event_flag=True,
        adherence_series=(0,) * months,
        coverage_days_series=(20,) * months,
        static_covariates={"age": 40.0, "race": "white", "gender": "male", "education": "college"},
        risk_scores_series=(tuple(scores),) * months,
        subgroup_labels={"formulation": "injectable"},
    )
    base.update(kw)
    return SubjectRecord(**base)


def test_valid_dataset_has_no_violations():
    assert validate_dataset([make_record("a"), make_record("b", T=2)]) == []


def test_risk_score_out_of_range():
    v = validate_dataset([make_record(scores=(1.2, 0.1, 0.1, 0.1, 0.1))])
    assert v and all("risk score out of [0,1]" in x.message and x.subject_id == "s1" for x in v)


def test_observed_time_exceeds_history():
    v = validate_dataset([make_record(T=5, months=3)])
    assert any("observed_time exceeds history" in x.message for x in v)


def test_other_violations_reported():
    bad = make_record(adherence_series=(0, 2, 1))
    long = make_record(T=97, months=97)
    msgs = [str(x) for x in validate_dataset([bad, long, make_record("s1")])]
    assert any("0 or 1" in m for m in msgs)
    assert any("exceeds 96" in m for m in msgs)
    assert any("duplicate" in m for m in msgs)


def test_missing_month_scores_allowed():
    r = make_record(risk_scores_series=(None, (0.1,) * 5, (0.2,) * 5))
    assert validate_dataset([r]) == []


def test_record_equality_and_immutability():
    a, b = make_record(), make_record()
    assert a == b
    assert a != make_record(T=2)
    with pytest.raises(AttributeError):
        a.observed_time = 4


def test_survival_curve_invariants():
    SurvivalCurve([0, 1, 2], [1.0, 0.5, 0.5])
    for grid, vals in [([1, 2], [1, 0.5]), ([0, 1], [0.9, 0.5]), ([0, 1], [1, 1.2]),
                       ([0, 2, 1], [1, 0.5, 0.4]), ([0, 1, 2], [1, 0.4, 0.5])]:
        with pytest.raises(ValueError):
            SurvivalCurve(grid, vals)


def test_survival_curve_step_convention():
    c = SurvivalCurve([0, 2, 4], [1.0, 0.5, 0.2])
    np.testing.assert_array_equal(c([0, 1.9, 2, 3.5, 4, 100]), [1, 1, 0.5, 0.5, 0.2, 0.2])
    np.testing.assert_array_equal(c.left_limit([0, 2, 4, 5]), [1, 1, 0.5, 0.2])
    with pytest.raises(ValueError):
        c.values[0] = 0.3


def test_survival_curves_batch():
    a = SurvivalCurve([0, 2], [1.0, 0.5])
    b = SurvivalCurve([0, 3], [1.0, 0.1])
    batch = SurvivalCurves.from_curves([a, b])
    np.testing.assert_array_equal(batch.grid, [0, 2, 3])
    np.testing.assert_array_equal(batch.at(2.5), [0.5, 1.0])
    assert batch[1](3) == 0.1


def test_effect_estimate_mean_identity(rng):
    ites = rng.normal(size=100)
    e = EffectEstimate.from_ites(ites, "t_learner", "cox_ph", horizon=96)
    assert abs(e.ate - np.mean(e.ites)) <= 1e-9 * max(1, abs(e.ate))
    with pytest.raises(ValueError, match="horizon"):
        EffectEstimate.from_ites([100.0], "t_learner", horizon=96)


def _cohort(**kw):
    base = dict(
        tau=3, ids=["a", "b"], features=[[1.0, 0.0], [2.0, 1.0]],
        schema=[FeatureSpec("age", "continuous"), FeatureSpec("adherence_current", "treatment")],
        treatment=[0, 1], residual_time=[1, 4], event=[True, False],
        static={"age": np.array([1.0, 2.0])}, labels={},
    )
    base.update(kw)
    return SnapshotCohort(**base)


def test_snapshot_cohort_invariants():
    c = _cohort()
    X, names = c.covariates(include_treatment=False)
    assert names == ["age"] and X.shape == (2, 1)
    with pytest.raises(ValueError, match="residual_time"):
        _cohort(residual_time=[0, 4])
    with pytest.raises(ValueError, match="disagrees"):
        _cohort(treatment=[1, 1])
    with pytest.raises(ValueError, match="schema"):
        _cohort(features=[[1.0], [2.0]])
    assert len(c.subset([1])) == 1 and c.subset([1]).ids[0] == "b"
