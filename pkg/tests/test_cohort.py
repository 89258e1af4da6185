from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from survmeta.causal import assumption_checks
from survmeta.cohort import (
    CSV_COLUMNS,
    DatasetValidationError,
    NormalizationStats,
    PreprocessConfig,
    SchemaError,
    binarize_adherence,
    build_snapshot,
    encode_and_normalize,
    ingest_longitudinal,
    split,
    trim,
    write_longitudinal,
)
from survmeta.domain import SubjectRecord

DATA = Path(__file__).parent / "data"
HEADER = ",".join(CSV_COLUMNS)


def record(sid, T, event=1, adherence=None, race="white", gender="male", education="college",
           age=40.0, scores=(0.1, 0.2, 0.3, 0.4, 0.5)):
    adherence = adherence if adherence is not None else [0] * T
    days = tuple(5 if a else 20 for a in adherence)
    return SubjectRecord(
        id=sid, observed_time=T, event_flag=bool(event), adherence_series=tuple(adherence),
        coverage_days_series=days,
        static_covariates={"age": age, "race": race, "gender": gender, "education": education},
        risk_scores_series=(tuple(scores),) * len(adherence),
        subgroup_labels={"formulation": "injectable", "drug_name": "haloperidol"},
    )


# ----------------------------------------------------------------- binarize

@pytest.mark.parametrize("days, expected", [(10, 1), (11, 0), (0, 1), (31, 0)])
def test_binarize_examples(days, expected):
    assert binarize_adherence(days, 10) == expected


def test_binarize_monotone_and_range():
    for thr in (6, 10, 24):
        vals = [binarize_adherence(d, thr) for d in range(32)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        binarize_adherence(32, 10)
    with pytest.raises(ValueError):
        binarize_adherence(-1, 10)


# ------------------------------------------------------------------ ingest

def test_ingest_two_subject_fixture():
    recs = ingest_longitudinal(DATA / "two_subjects.csv")
    assert [r.id for r in recs] == ["a01", "b02"]
    a, b = recs
    assert a.observed_time == 4 and a.event_flag and not b.event_flag
    assert a.adherence_series == (0, 1, 0, 1)
    assert b.adherence_series == (1, 0, 0)
    assert b.risk_scores_series[0] is None
    assert b.subgroup_labels == {"formulation": "not-covered"}
    assert a.static_covariates == {"age": 34.0, "race": "white", "gender": "female",
                                   "education": "college"}


def test_csv_round_trip(tmp_path):
    recs = ingest_longitudinal(DATA / "two_subjects.csv")
    out = tmp_path / "copy.csv"
    write_longitudinal(recs, out)
    again = ingest_longitudinal(out)
    assert again == recs
    # the blank formulation is written back as its explicit marker
    expected = (DATA / "two_subjects.csv").read_text().replace("hs_or_less,,", "hs_or_less,not-covered,")
    assert out.read_text() == expected


def test_round_trip_synthetic(tmp_path, small_synthetic):
    _, records, _ = small_synthetic
    write_longitudinal(records[:50], tmp_path / "s.csv")
    assert ingest_longitudinal(tmp_path / "s.csv") == records[:50]


def _write(tmp_path, rows, header=HEADER):
    p = tmp_path / "x.csv"
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    return p


ROW = "s,{m},20,0.1,0.1,0.1,0.1,0.1,40,white,male,college,injectable,haloperidol,{T},1"


def test_month_out_of_range(tmp_path):
    p = _write(tmp_path, [ROW.format(m=97, T=1)])
    with pytest.raises(SchemaError, match="line 2: month out of range"):
        ingest_longitudinal(p)


def test_missing_risk_column(tmp_path):
    header = HEADER.replace("risk_jail,", "")
    row = "s,1,20,0.1,0.1,0.1,0.1,40,white,male,college,injectable,haloperidol,1,1"
    p = _write(tmp_path, [row], header)
    with pytest.raises(SchemaError, match="risk_jail"):
        ingest_longitudinal(p)
    assert len(ingest_longitudinal(p, require_risk_scores=False)) == 1


def test_malformed_row_has_line_number(tmp_path):
    p = _write(tmp_path, [ROW.format(m=1, T=2), ROW.format(m=2, T=2).replace(",20,", ",x,")])
    with pytest.raises(SchemaError, match="line 3"):
        ingest_longitudinal(p)


def test_invariant_violation_attaches_report(tmp_path):
    p = _write(tmp_path, [ROW.format(m=1, T=5).replace("0.1,0.1,0.1,0.1,0.1", "1.2,0.1,0.1,0.1,0.1")])
    with pytest.raises(DatasetValidationError) as err:
        ingest_longitudinal(p)
    msgs = [v.message for v in err.value.violations]
    assert any("observed_time exceeds history" in m for m in msgs)
    assert any("risk score out of [0,1]" in m for m in msgs)


def test_non_contiguous_months(tmp_path):
    p = _write(tmp_path, [ROW.format(m=1, T=1), ROW.format(m=3, T=1)])
    with pytest.raises(SchemaError, match="contiguous"):
        ingest_longitudinal(p)


# --------------------------------------------------------------- snapshots

def test_snapshot_membership_and_residuals():
    recs = [record("a", 3), record("b", 7, event=1), record("c", 4, event=0)]
    c = build_snapshot(recs, 3)
    assert list(c.ids) == ["b", "c"]
    np.testing.assert_array_equal(c.residual_time, [4, 1])
    np.testing.assert_array_equal(c.event, [True, False])


def test_snapshot_schema_length():
    recs = [record("a", 8, race="white"), record("b", 8, race="black"),
            record("c", 8, race="other", gender="female", education="hs")]
    c = build_snapshot(recs, 3)
    n_onehot = (3 - 1) + (2 - 1) + (2 - 1)
    assert c.features.shape[1] == 1 + n_onehot + 5 + 2 + 1
    kinds = [f.kind for f in c.schema]
    assert kinds[-3:] == ["history", "history", "treatment"]
    assert c.feature_names[-3:] == ["adherence_m1", "adherence_m2", "adherence_current"]


def test_treatment_column_matches_snapshot_adherence():
    recs = [record("a", 6, adherence=[0, 1, 1, 0, 0, 0]), record("b", 6, adherence=[1, 0, 0, 1, 1, 1])]
    c = build_snapshot(recs, 3)
    np.testing.assert_array_equal(c.treatment, [1, 0])
    j = c.feature_index("adherence_m2")
    np.testing.assert_array_equal(c.features[:, j], [1, 0])


def test_ablation_schema_is_five_shorter(small_synthetic):
    _, records, _ = small_synthetic
    full = build_snapshot(records, 3, PreprocessConfig())
    abl = build_snapshot(records, 3, PreprocessConfig(include_risk_scores=False))
    assert len(full.schema) - len(abl.schema) == 5
    assert [f for f in full.schema if f.kind != "risk_score"] == list(abl.schema)


def test_missing_scores_at_tau_dropped():
    a = record("a", 6)
    b = replace(record("b", 6), risk_scores_series=((0.1,) * 5, (0.1,) * 5, None, (0.1,) * 5,
                                                     (0.1,) * 5, (0.1,) * 5))
    assert list(build_snapshot([a, b], 3).ids) == ["a"]
    assert list(build_snapshot([a, b], 3, PreprocessConfig(include_risk_scores=False)).ids) == ["a", "b"]


def test_empty_snapshot_errors():
    with pytest.raises(ValueError, match="empty"):
        build_snapshot([record("a", 3)], 3)


def test_cohort_sizes_non_increasing(small_synthetic):
    _, records, _ = small_synthetic
    sizes = [len(build_snapshot(records, t)) for t in (1, 3, 6, 9, 12)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


# -------------------------------------------------------------------- trim

def test_trim_removes_one_armed_strata():
    recs = [
        record("a", 5, adherence=[0, 0, 1, 0, 0], race="white"),
        record("b", 5, adherence=[0, 0, 1, 0, 0], race="white"),
        record("c", 5, adherence=[0, 0, 0, 0, 0], race="black"),
        record("d", 5, adherence=[0, 0, 1, 0, 0], race="black"),
        record("e", 5, adherence=[0, 0, 0, 0, 0], race="other"),
    ]
    c = trim(build_snapshot(recs, 3))
    assert list(c.ids) == ["c", "d"]
    assert assumption_checks(c).one_armed_strata == []


def test_trim_to_empty_errors():
    recs = [record("a", 5, adherence=[0, 0, 1, 0, 0]), record("b", 5, adherence=[0, 0, 1, 0, 0])]
    with pytest.raises(ValueError, match="empt"):
        trim(build_snapshot(recs, 3))


# --------------------------------------------------------- encode/normalize

def test_encode_drops_first_level_and_zscores():
    recs = [record("a", 5, age=30.0, race="white", adherence=[0, 0, 1, 0, 0]),
            record("b", 5, age=50.0, race="black"),
            record("c", 5, age=40.0, race="other", adherence=[0, 0, 1, 0, 0])]
    c = build_snapshot(recs, 3)
    enc, stats = encode_and_normalize(c)
    names = enc.feature_names
    assert "race=white" in names and "race=other" in names and "race=black" not in names
    assert stats.mean["age"] == 40.0 and stats.std["age"] == pytest.approx(np.std([30, 50, 40]))
    age = enc.features[:, names.index("age")]
    assert age.mean() == pytest.approx(0.0, abs=1e-9)
    # five identical risk scores have zero variance and are dropped
    assert set(stats.dropped) >= {"risk_mortality"}
    assert not any(f.kind == "risk_score" for f in enc.schema)


def test_zscore_example():
    stats = NormalizationStats({"race": ("white",), "gender": ("male",), "education": ("college",)},
                               {"age": 40.0}, {"age": 10.0})
    c = build_snapshot([record("a", 5, age=50.0)], 3, PreprocessConfig(include_risk_scores=False))
    enc, _ = encode_and_normalize(c, stats)
    assert enc.features[0, enc.feature_names.index("age")] == 1.0


def test_training_stats_standardize_train(small_cohort):
    enc, stats = encode_and_normalize(small_cohort)
    cont = [j for j, f in enumerate(enc.schema) if f.kind in ("continuous", "risk_score")]
    np.testing.assert_allclose(enc.features[:, cont].mean(axis=0), 0.0, atol=1e-9)
    assert NormalizationStats.from_json(stats.to_json()) == stats


def test_unseen_category():
    train = build_snapshot([record("a", 5), record("b", 5, adherence=[0, 0, 1, 0, 0])], 3)
    _, stats = encode_and_normalize(train)
    test = build_snapshot([record("c", 5, race="martian")], 3)
    with pytest.raises(ValueError, match="martian"):
        encode_and_normalize(test, stats)


# ------------------------------------------------------------------- split

def _cohort_of(n):
    recs = [record(f"s{i:04d}", 5, adherence=[0, 0, i % 2, 0, 0], age=float(i)) for i in range(n)]
    return build_snapshot(recs, 3)


def test_split_sizes_and_determinism():
    c = _cohort_of(10)
    parts = split(c, (0.6, 0.2, 0.2), seed=3)
    assert [len(p) for p in parts] == [6, 2, 2]
    again = split(c, (0.6, 0.2, 0.2), seed=3)
    for p, q in zip(parts, again):
        np.testing.assert_array_equal(p.ids, q.ids)
    all_ids = np.concatenate([p.ids for p in parts])
    assert sorted(all_ids) == sorted(c.ids)


def test_split_seeds_differ():
    c = _cohort_of(1000)
    a = split(c, (0.6, 0.2, 0.2), seed=1)[0]
    b = split(c, (0.6, 0.2, 0.2), seed=2)[0]
    assert set(a.ids) != set(b.ids)


def test_split_errors():
    with pytest.raises(ValueError):
        split(_cohort_of(10), (0.5, 0.2, 0.2))
    with pytest.raises(ValueError, match="empty"):
        split(_cohort_of(3), (0.9, 0.1, 0.0))


def test_preprocess_config_invariants():
    with pytest.raises(ValueError):
        PreprocessConfig(adherence_threshold_days=40)
    with pytest.raises(ValueError):
        PreprocessConfig(snapshot_taus=(0, 3))
    with pytest.raises(ValueError):
        PreprocessConfig(split=(0.6, 0.3, 0.2))
