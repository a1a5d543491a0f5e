"""Concreteness scoring for discrete words and continuous topics.

For a word w carried by image set V_w, each image v in V_w contributes the
count of its k nearest neighbors that also carry w. The mean of those counts
is normalized by k*|V_w|/n, the expectation when the same number of images is
chosen at random, so a score of 1.0 means "no more clustered than chance".

The topic variant works on weighted memberships: score(t) =
(n/k) * sum_v[Y_vt * sum_{j in NN(v)} Y_jt] / (sum_v Y_vt)^2. On a one-hot
topic matrix it reduces to the discrete score, which the tests exploit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import ConceptIndex, TopicMatrix
from .knn import NeighborLists
from .util import atomic_write_bytes, derived_rng, fmt, write_json

MIN_RESAMPLES = 100

_CI_METHODS = ("normal", "bootstrap", "none")


@dataclass(frozen=True)
class ConcretenessScore:
    concept: str
    score: float
    support: float
    frequency: float
    mni_mean: "float | None" = None
    ci_low: "float | None" = None
    ci_high: "float | None" = None
    ci_method: str = "none"

    def __post_init__(self):
        if self.score < 0:
            raise ValueError(f"{self.concept}: negative score {self.score}")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValueError(f"{self.concept}: one-sided interval")
        if self.ci_low is not None and not (self.ci_low <= self.score <= self.ci_high):
            raise ValueError(
                f"{self.concept}: interval [{self.ci_low}, {self.ci_high}] "
                f"does not bracket score {self.score}"
            )


@dataclass(frozen=True)
class ConcretenessReport:
    """Scores sorted by descending score, ties by concept label."""

    scores: tuple[ConcretenessScore, ...]
    config: dict

    def __post_init__(self):
        ordered = tuple(sorted(self.scores, key=lambda s: (-s.score, s.concept)))
        object.__setattr__(self, "scores", ordered)
        object.__setattr__(self, "config", dict(self.config))

    def by_concept(self) -> dict[str, ConcretenessScore]:
        return {s.concept: s for s in self.scores}

    def to_csv_bytes(self) -> bytes:
        out = io.StringIO()
        out.write("concept,score,ci_low,ci_high,support,frequency,mni_mean\r\n")
        for s in self.scores:
            row = [s.concept, fmt(s.score), fmt(s.ci_low), fmt(s.ci_high), fmt(s.support), fmt(s.frequency), fmt(s.mni_mean)]
            out.write(",".join(row) + "\r\n")
        return out.getvalue().encode("utf-8")

    def write_csv(self, path) -> None:
        atomic_write_bytes(path, self.to_csv_bytes())

    def to_json_obj(self) -> dict:
        return {
            "config": self.config,
            "scores": [
                {
                    "concept": s.concept,
                    "score": s.score,
                    "ci_low": s.ci_low,
                    "ci_high": s.ci_high,
                    "ci_method": s.ci_method,
                    "support": s.support,
                    "frequency": s.frequency,
                    "mni_mean": s.mni_mean,
                }
                for s in self.scores
            ],
        }

    def write_json(self, path) -> None:
        write_json(path, self.to_json_obj())


# ---------------------------------------------------------------------------
# mutual-neighbor statistics


def mni_terms(neighbors: NeighborLists, rows: np.ndarray) -> np.ndarray:
    """Per-image neighbor-intersection counts for the images in ``rows``."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("empty image set")
    member = np.zeros(neighbors.n, dtype=bool)
    member[rows] = True
    return member[neighbors.lists[rows]].sum(axis=1).astype(np.float64)


def mni_expectation(neighbors: NeighborLists, postings: np.ndarray) -> float:
    """Mean count of same-word images among each carrier's k neighbors."""
    return float(mni_terms(neighbors, postings).mean())


def random_mni(k: int, support: float, n: int) -> float:
    """Expected MNI when ``support`` images are assigned at random."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    return k * support / n


# ---------------------------------------------------------------------------
# scoring


def concreteness_discrete(
    neighbors: NeighborLists,
    concepts: ConceptIndex,
    ci_method: str = "none",
    level: float = 0.95,
    resamples: int = 1000,
    seed: int = 0,
    config_echo: "dict | None" = None,
) -> ConcretenessReport:
    if concepts.n != neighbors.n:
        raise ValueError(f"concepts bound to n={concepts.n} but neighbors cover n={neighbors.n}")
    _check_ci_args(ci_method, level, resamples)
    n, k = neighbors.n, neighbors.k
    scores = []
    for word in concepts.vocab:
        rows = concepts.postings[word]
        terms = mni_terms(neighbors, rows)
        denom = random_mni(k, rows.size, n)
        mni = float(terms.mean())
        ci_low = ci_high = None
        if ci_method == "normal":
            ci_low, ci_high = _normal_interval(terms, denom, level, word)
        elif ci_method == "bootstrap":
            rng = derived_rng(seed, "ci", word)
            ci_low, ci_high = _bootstrap_interval(terms / denom, level, resamples, rng)
        scores.append(
            ConcretenessScore(
                concept=word,
                score=mni / denom,
                support=float(rows.size),
                frequency=rows.size / n,
                mni_mean=mni,
                ci_low=ci_low,
                ci_high=ci_high,
                ci_method=ci_method,
            )
        )
    return ConcretenessReport(tuple(scores), _echo(config_echo, neighbors, ci_method, level, resamples, seed))


def concreteness_continuous(
    neighbors: NeighborLists,
    topics: TopicMatrix,
    ci_method: str = "none",
    level: float = 0.95,
    resamples: int = 1000,
    seed: int = 0,
    config_echo: "dict | None" = None,
) -> ConcretenessReport:
    if topics.n != neighbors.n:
        raise ValueError(f"topics bound to n={topics.n} but neighbors cover n={neighbors.n}")
    _check_ci_args(ci_method, level, resamples)
    n, k = neighbors.n, neighbors.k
    y = topics.weights
    total_mass = float(y.sum())
    scores = []
    for t, topic in enumerate(topics.topic_ids):
        col = y[:, t]
        nbr_sums = col[neighbors.lists].sum(axis=1)
        terms = col * nbr_sums
        mass = float(col.sum())
        score = (n / k) * float(terms.sum()) / mass**2
        ci_low = ci_high = None
        if ci_method == "normal":
            # per-row contributions to the score with the mass held fixed
            unit = terms * (n * n) / (k * mass**2)
            ci_low, ci_high = _normal_interval(unit, 1.0, level, topic)
        elif ci_method == "bootstrap":
            rng = derived_rng(seed, "ci", topic)
            ci_low, ci_high = _bootstrap_continuous(terms, col, n, k, level, resamples, rng)
        scores.append(
            ConcretenessScore(
                concept=topic,
                score=score,
                support=mass,
                frequency=mass / total_mass,
                mni_mean=None,
                ci_low=ci_low,
                ci_high=ci_high,
                ci_method=ci_method,
            )
        )
    return ConcretenessReport(tuple(scores), _echo(config_echo, neighbors, ci_method, level, resamples, seed))


def frequency(concepts: "ConceptIndex | TopicMatrix") -> dict[str, float]:
    """How often each concept appears: |V_w|/n, or topic mass share."""
    if isinstance(concepts, ConceptIndex):
        return {w: concepts.postings[w].size / concepts.n for w in concepts.vocab}
    total = float(concepts.weights.sum())
    return {
        t: float(concepts.weights[:, i].sum()) / total
        for i, t in enumerate(concepts.topic_ids)
    }


# ---------------------------------------------------------------------------
# confidence intervals


def confidence_interval(
    terms: np.ndarray,
    denominator: float,
    method: str = "bootstrap",
    level: float = 0.95,
    resamples: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Interval for mean(terms)/denominator by resampling the per-image terms."""
    _check_ci_args(method, level, resamples)
    terms = np.asarray(terms, dtype=np.float64)
    if method == "normal":
        return _normal_interval(terms, denominator, level, "terms")
    return _bootstrap_interval(terms / denominator, level, resamples, derived_rng(seed, "ci"))


def _check_ci_args(method: str, level: float, resamples: int) -> None:
    if method not in _CI_METHODS:
        raise ValueError(f"ci method must be one of {_CI_METHODS}, got {method!r}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if method == "bootstrap" and resamples < MIN_RESAMPLES:
        raise ValueError(f"resamples must be >= {MIN_RESAMPLES}, got {resamples}")


def _normal_interval(terms: np.ndarray, denominator: float, level: float, label: str):
    if terms.size < 2:
        raise ValueError(f"{label}: normal interval needs >= 2 terms, got {terms.size}")
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    mean = float(terms.mean())
    half = z * float(terms.std(ddof=1)) / np.sqrt(terms.size)
    return (mean - half) / denominator, (mean + half) / denominator


def _bootstrap_interval(values: np.ndarray, level: float, resamples: int, rng) -> tuple[float, float]:
    m = values.size
    idx = rng.integers(0, m, size=(resamples, m))
    means = values[idx].mean(axis=1)
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [alpha, 100.0 - alpha])
    return float(lo), float(hi)


def _bootstrap_continuous(terms, weights, n, k, level, resamples, rng) -> tuple[float, float]:
    idx = rng.integers(0, n, size=(resamples, n))
    num = terms[idx].sum(axis=1)
    mass = weights[idx].sum(axis=1)
    scores = np.zeros(resamples)
    ok = mass > 0
    scores[ok] = (n / k) * num[ok] / mass[ok] ** 2
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(scores, [alpha, 100.0 - alpha])
    return float(lo), float(hi)


def read_scores_csv(path) -> ConcretenessReport:
    """Load a previously written score table (the CSV emitted above)."""
    import csv

    from .data import FormatError

    expected = ["concept", "score", "ci_low", "ci_high", "support", "frequency", "mni_mean"]
    scores = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise FormatError(f"{path}: header must be {','.join(expected)}")
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != len(expected):
                raise FormatError(f"{path}: row {lineno} has {len(rec)} cells")
            try:
                scores.append(
                    ConcretenessScore(
                        concept=rec[0],
                        score=float(rec[1]),
                        ci_low=float(rec[2]) if rec[2] else None,
                        ci_high=float(rec[3]) if rec[3] else None,
                        ci_method="loaded" if rec[2] else "none",
                        support=float(rec[4]),
                        frequency=float(rec[5]),
                        mni_mean=float(rec[6]) if rec[6] else None,
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from None
    if not scores:
        raise FormatError(f"{path}: no scores")
    return ConcretenessReport(tuple(scores), {"source": str(path)})


def _echo(extra, neighbors, ci_method, level, resamples, seed) -> dict:
    config = {
        "k": neighbors.k,
        "ci_method": ci_method,
        "seed": seed,
    }
    if ci_method != "none":
        config["ci_level"] = level
    if ci_method == "bootstrap":
        config["resamples"] = resamples
    if extra:
        config.update(extra)
    return config
