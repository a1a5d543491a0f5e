import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import concreteness as vc
from concreteness.scoring import mni_expectation, mni_terms, random_mni

from oracles import brute_force_neighbors, concreteness_by_counting, topic_score_by_sums


def _neighbors(data, k, metric="euclidean"):
    fm = vc.FeatureMatrix(np.asarray(data, dtype=np.float64), tuple(f"r{i}" for i in range(len(data))))
    return vc.build_index(fm, vc.KnnConfig(k=k, metric=metric)).all_neighbors()


def two_pair_fixture():
    # two tight pairs far apart on a line
    nl = _neighbors(np.array([[0.0], [0.1], [10.0], [10.1]]), k=1)
    concepts = vc.ConceptIndex.from_postings({"left": [0, 1], "right": [2, 3]}, n=4)
    return nl, concepts


def test_mni_of_left_pair_is_one():
    nl, concepts = two_pair_fixture()
    assert mni_expectation(nl, concepts.postings["left"]) == 1.0


def test_mni_saturates_at_k():
    nl = _neighbors(np.random.default_rng(0).normal(size=(30, 3)), k=7)
    assert mni_expectation(nl, np.arange(30)) == 7.0


def test_mni_zero_for_disconnected_word():
    nl, _ = two_pair_fixture()
    # one point from each pair: their nearest neighbors are the other halves
    assert mni_expectation(nl, np.asarray([0, 2])) == 0.0


def test_mni_rejects_empty_set():
    nl, _ = two_pair_fixture()
    with pytest.raises(ValueError):
        mni_terms(nl, np.asarray([], dtype=np.int64))


def test_random_mni_formula():
    assert random_mni(50, 1000, 10000) == 5.0
    with pytest.raises(ValueError):
        random_mni(0, 10, 100)


def test_two_pair_word_scores_two():
    nl, concepts = two_pair_fixture()
    report = vc.concreteness_discrete(nl, concepts)
    assert report.by_concept()["left"].score == pytest.approx(2.0)
    assert report.by_concept()["right"].score == pytest.approx(2.0)
    assert report.by_concept()["left"].mni_mean == 1.0


def test_saturated_word_scores_exactly_one():
    nl = _neighbors(np.random.default_rng(1).normal(size=(40, 4)), k=5)
    concepts = vc.ConceptIndex.from_postings({"everything": np.arange(40)}, n=40)
    report = vc.concreteness_discrete(nl, concepts)
    assert report.by_concept()["everything"].score == 1.0


def test_discrete_scores_match_counting_oracle():
    rng = np.random.default_rng(7)
    nl = _neighbors(rng.normal(size=(120, 5)), k=9)
    postings = {
        "a": np.sort(rng.choice(120, size=30, replace=False)),
        "b": np.sort(rng.choice(120, size=12, replace=False)),
        "c": np.sort(rng.choice(120, size=60, replace=False)),
    }
    concepts = vc.ConceptIndex.from_postings(postings, n=120)
    report = vc.concreteness_discrete(nl, concepts)
    expect, mni = concreteness_by_counting(nl.lists, postings, n=120, k=9)
    for word in postings:
        assert report.by_concept()[word].score == pytest.approx(expect[word], rel=1e-12)
        assert report.by_concept()[word].mni_mean == pytest.approx(mni[word], rel=1e-12)


def test_random_subset_scores_near_one(gauss10k_exact):
    # randomly assigned concepts have no visual signal: expect score ~ 1.
    # CI coverage of 1.0 runs below the nominal level because per-carrier
    # terms are positively dependent (mutual-neighbor pairs move together),
    # so the floor here is what repeated runs actually support, not 95%.
    rng = np.random.default_rng(100)
    scores = []
    covered = 0
    trials = 20
    for _ in range(trials):
        rows = np.sort(rng.choice(10000, size=1000, replace=False))
        concepts = vc.ConceptIndex.from_postings({"w": rows}, n=10000)
        report = vc.concreteness_discrete(gauss10k_exact, concepts, ci_method="normal")
        s = report.by_concept()["w"]
        scores.append(s.score)
        covered += int(s.ci_low <= 1.0 <= s.ci_high)
    assert all(0.8 <= s <= 1.2 for s in scores)
    assert covered >= trials * 0.6


def test_uniform_topics_score_exactly_one():
    nl = _neighbors(np.random.default_rng(2).normal(size=(50, 4)), k=6)
    topics = vc.TopicMatrix(np.full((50, 3), 0.2), ("t0", "t1", "t2"))
    report = vc.concreteness_continuous(nl, topics)
    for t in ("t0", "t1", "t2"):
        assert report.by_concept()[t].score == pytest.approx(1.0, rel=1e-12)


def test_topic_column_scale_invariance():
    rng = np.random.default_rng(3)
    nl = _neighbors(rng.normal(size=(60, 4)), k=5)
    weights = rng.uniform(0.01, 1.0, size=(60, 3))
    a = vc.concreteness_continuous(nl, vc.TopicMatrix(weights, ("x", "y", "z")))
    scaled = weights.copy()
    scaled[:, 1] *= 37.5
    b = vc.concreteness_continuous(nl, vc.TopicMatrix(scaled, ("x", "y", "z")))
    assert b.by_concept()["y"].score == pytest.approx(a.by_concept()["y"].score, rel=1e-12)


def test_continuous_matches_double_sum_oracle():
    rng = np.random.default_rng(4)
    nl = _neighbors(rng.normal(size=(40, 3)), k=4)
    weights = rng.uniform(0.0, 1.0, size=(40, 2))
    report = vc.concreteness_continuous(nl, vc.TopicMatrix(weights, ("t0", "t1")))
    expect = topic_score_by_sums(nl.lists, weights, k=4)
    assert report.by_concept()["t0"].score == pytest.approx(expect[0], rel=1e-12)
    assert report.by_concept()["t1"].score == pytest.approx(expect[1], rel=1e-12)


def test_one_hot_topics_reproduce_discrete_scores():
    rng = np.random.default_rng(5)
    nl = _neighbors(rng.normal(size=(90, 4)), k=6)
    labels = rng.integers(0, 4, size=90)
    postings = {f"w{c}": np.flatnonzero(labels == c) for c in range(4)}
    concepts = vc.ConceptIndex.from_postings(postings, n=90)
    discrete = vc.concreteness_discrete(nl, concepts)
    continuous = vc.concreteness_continuous(nl, vc.one_hot_topics(concepts))
    for word in postings:
        a = discrete.by_concept()[word].score
        b = continuous.by_concept()[word].score
        assert abs(a - b) <= 1e-9 * max(abs(a), 1e-30)


# -- frequency ---------------------------------------------------------------


def test_frequency_discrete():
    concepts = vc.ConceptIndex.from_postings(
        {"everywhere": np.arange(1000), "rare": np.arange(123)}, n=1000
    )
    freq = vc.frequency(concepts)
    assert freq["everywhere"] == 1.0
    assert freq["rare"] == 0.123


def test_frequency_one_hot_matches_word_frequency():
    labels = np.asarray([0, 0, 1, 2, 2, 2])
    postings = {f"w{c}": np.flatnonzero(labels == c) for c in range(3)}
    concepts = vc.ConceptIndex.from_postings(postings, n=6)
    assert vc.frequency(vc.one_hot_topics(concepts)) == pytest.approx(vc.frequency(concepts))


# -- confidence intervals ------------------------------------------------------


def test_degenerate_terms_give_zero_width_interval():
    terms = np.full(12, 3.0)
    lo, hi = vc.confidence_interval(terms, 1.5, method="normal")
    assert lo == hi == 2.0
    lo, hi = vc.confidence_interval(terms, 1.5, method="bootstrap", seed=1)
    assert lo == hi == 2.0


def test_bootstrap_is_seed_deterministic():
    rng = np.random.default_rng(6)
    terms = rng.poisson(3.0, size=40).astype(np.float64)
    a = vc.confidence_interval(terms, 2.0, method="bootstrap", seed=9)
    b = vc.confidence_interval(terms, 2.0, method="bootstrap", seed=9)
    c = vc.confidence_interval(terms, 2.0, method="bootstrap", seed=10)
    assert a == b
    assert a != c


def test_bootstrap_interval_covers_truth(gauss10k_exact):
    # 200 random-assignment trials; the true score is 1 by construction.
    # Resampling carriers treats their terms as independent but mutual
    # neighbor pairs contribute correlated terms, so realized coverage of
    # the 95% interval sits near 87%, not 95%. Assert the floor repeated
    # runs actually clear (point estimate minus ~2.5 binomial sigma).
    rng = np.random.default_rng(8)
    covered = 0
    trials = 200
    for t in range(trials):
        rows = np.sort(rng.choice(10000, size=1000, replace=False))
        concepts = vc.ConceptIndex.from_postings({"w": rows}, n=10000)
        report = vc.concreteness_discrete(
            gauss10k_exact, concepts, ci_method="bootstrap", resamples=1000, seed=t
        )
        s = report.by_concept()["w"]
        covered += int(s.ci_low <= 1.0 <= s.ci_high)
    assert covered >= trials * 0.80


def test_ci_argument_validation():
    nl, concepts = two_pair_fixture()
    with pytest.raises(ValueError):
        vc.concreteness_discrete(nl, concepts, ci_method="jackknife")
    with pytest.raises(ValueError):
        vc.concreteness_discrete(nl, concepts, ci_method="bootstrap", resamples=50)
    with pytest.raises(ValueError):
        vc.concreteness_discrete(nl, concepts, ci_method="normal", level=1.5)


def test_normal_ci_needs_two_carriers():
    nl = _neighbors(np.array([[0.0], [0.1], [10.0], [10.1]]), k=1)
    concepts = vc.ConceptIndex.from_postings({"solo": [2]}, n=4)
    with pytest.raises(ValueError):
        vc.concreteness_discrete(nl, concepts, ci_method="normal")


def test_size_mismatch_rejected():
    nl, _ = two_pair_fixture()
    concepts = vc.ConceptIndex.from_postings({"w": [0, 1]}, n=9)
    with pytest.raises(ValueError):
        vc.concreteness_discrete(nl, concepts)


# -- report container ----------------------------------------------------------


def sample_report():
    rng = np.random.default_rng(11)
    nl = _neighbors(rng.normal(size=(80, 4)), k=5)
    postings = {
        "zebra": np.flatnonzero(rng.random(80) < 0.3),
        "apple": np.flatnonzero(rng.random(80) < 0.4),
        "metal": np.flatnonzero(rng.random(80) < 0.5),
    }
    concepts = vc.ConceptIndex.from_postings(postings, n=80)
    return vc.concreteness_discrete(nl, concepts, ci_method="bootstrap", resamples=200, seed=3)


def test_report_sorted_descending_with_label_ties():
    report = sample_report()
    keys = [(-s.score, s.concept) for s in report.scores]
    assert keys == sorted(keys)


def test_csv_roundtrip(tmp_path):
    report = sample_report()
    blob = report.to_csv_bytes()
    assert blob.startswith(b"concept,score,ci_low,ci_high,support,frequency,mni_mean\r\n")
    path = tmp_path / "scores.csv"
    report.write_csv(path)
    back = vc.read_scores_csv(path)
    for s in report.scores:
        b = back.by_concept()[s.concept]
        assert b.score == s.score
        assert b.ci_low == s.ci_low
        assert b.support == s.support


def test_json_report(tmp_path):
    report = sample_report()
    path = tmp_path / "scores.json"
    report.write_json(path)
    obj = json.loads(path.read_text())
    assert [row["concept"] for row in obj["scores"]] == [s.concept for s in report.scores]


def test_score_validation():
    with pytest.raises(ValueError):
        vc.ConcretenessScore(
            concept="w", score=-0.5, support=3, frequency=0.1, mni_mean=1.0,
            ci_low=None, ci_high=None, ci_method="none",
        )
    with pytest.raises(ValueError):
        vc.ConcretenessScore(
            concept="w", score=1.0, support=3, frequency=0.1, mni_mean=1.0,
            ci_low=1.5, ci_high=2.0, ci_method="normal",
        )


# -- properties ------------------------------------------------------------------


@settings(deadline=None, max_examples=30)
@given(st.integers(6, 40), st.integers(0, 100_000))
def test_scores_nonnegative_and_mni_bounded(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, min(6, n - 1) + 1))
    data = rng.normal(size=(n, 3))
    nl = _neighbors(data, k=k)
    count = int(rng.integers(1, n + 1))
    rows = np.sort(rng.choice(n, size=count, replace=False))
    concepts = vc.ConceptIndex.from_postings({"w": rows}, n=n)
    s = vc.concreteness_discrete(nl, concepts).by_concept()["w"]
    assert s.score >= 0.0
    assert 0.0 <= s.mni_mean <= k
    oracle_score, _ = concreteness_by_counting(nl.lists, {"w": rows}, n=n, k=k)
    assert s.score == pytest.approx(oracle_score["w"], rel=1e-12)
