"""Retrievability analytics: how concept properties predict retrieval ease.

Joins per-concept concreteness with per-instance retrieval outcomes through
an affinity matrix s (test instance x concept): a concept's retrievability is
the affinity-weighted fraction of its test instances whose mean bidirectional
rank lands inside the top p%. Correlation and variance-explained summaries
quantify whether concreteness (vs the frequency null) predicts it.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .alignment import RetrievalResult
from .data import ConceptIndex, FormatError, TopicMatrix
from .scoring import ConcretenessReport
from .util import atomic_write_bytes, fmt, write_json


@dataclass(frozen=True)
class AffinityMatrix:
    """Association strengths between test instances (rows) and concepts."""

    ids: tuple[str, ...]
    concepts: tuple[str, ...]
    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "concepts", tuple(self.concepts))
        if s.shape != (len(self.ids), len(self.concepts)):
            raise ValueError(f"affinity shape {s.shape} does not match ids x concepts")
        if not np.isfinite(s).all() or (s < 0).any():
            raise ValueError("affinities must be finite and nonnegative")

    def reindexed(self, ids: tuple[str, ...]) -> "AffinityMatrix":
        """Rows reordered to a new instance-id list (e.g. after exclusions)."""
        where = {instance_id: i for i, instance_id in enumerate(self.ids)}
        missing = [i for i in ids if i not in where]
        if missing:
            raise ValueError(f"affinity matrix lacks rows for instances {missing[:5]}")
        rows = np.asarray([where[i] for i in ids], dtype=np.int64)
        return AffinityMatrix(ids, self.concepts, self.s[rows])


def affinity_discrete(concepts: ConceptIndex, rows: np.ndarray, ids: tuple[str, ...]) -> AffinityMatrix:
    """Length-normalized token counts: each instance's in-vocab tokens share
    its unit of mass equally, so occupied rows sum to 1."""
    rows = np.asarray(rows, dtype=np.int64)
    s = np.zeros((rows.size, len(concepts.vocab)))
    col = {w: t for t, w in enumerate(concepts.vocab)}
    for i, v in enumerate(rows):
        tokens = [w for w in concepts.inverse[v] if w in col]
        for w in tokens:
            s[i, col[w]] = 1.0 / len(tokens)
    return AffinityMatrix(tuple(ids), concepts.vocab, s)


def affinity_continuous(topics: TopicMatrix, rows: np.ndarray, ids: tuple[str, ...]) -> AffinityMatrix:
    """Per-instance topic proportions (rows renormalized to sum to 1)."""
    rows = np.asarray(rows, dtype=np.int64)
    y = topics.weights[rows]
    mass = y.sum(axis=1, keepdims=True)
    s = np.divide(y, np.where(mass > 0, mass, 1.0))
    return AffinityMatrix(tuple(ids), topics.topic_ids, s)


@dataclass(frozen=True)
class RetrievabilityEntry:
    concept: str
    retrievability: float
    mass: float


@dataclass(frozen=True)
class RetrievabilityReport:
    entries: tuple[RetrievabilityEntry, ...]
    p: float
    omitted: tuple[str, ...] = ()

    def by_concept(self) -> dict[str, float]:
        return {e.concept: e.retrievability for e in self.entries}

    def to_csv_bytes(self) -> bytes:
        out = io.StringIO()
        out.write("concept,retrievability,mass\r\n")
        for e in self.entries:
            out.write(f"{e.concept},{fmt(e.retrievability)},{fmt(e.mass)}\r\n")
        return out.getvalue().encode("utf-8")

    def write_csv(self, path) -> None:
        atomic_write_bytes(path, self.to_csv_bytes())


def retrievability(result: RetrievalResult, affinity: AffinityMatrix, p: float = 1.0) -> RetrievabilityReport:
    """Affinity-weighted top-p% hit rate per concept.

    Concepts carrying zero affinity mass over the evaluated instances are
    omitted with a warning; a zero score means "never retrieved", which is
    different from "never present".
    """
    if affinity.ids != result.ids:
        affinity = affinity.reindexed(result.ids)
    hits = result.hits(p).astype(np.float64)
    mass = affinity.s.sum(axis=0)
    entries = []
    omitted = []
    for t, concept in enumerate(affinity.concepts):
        if mass[t] <= 0:
            omitted.append(concept)
            continue
        entries.append(
            RetrievabilityEntry(
                concept=concept,
                retrievability=float(affinity.s[:, t] @ hits / mass[t]),
                mass=float(mass[t]),
            )
        )
    if omitted:
        warnings.warn(f"omitted {len(omitted)} concepts with zero affinity mass: {omitted[:5]}")
    entries.sort(key=lambda e: e.concept)
    return RetrievabilityReport(tuple(entries), float(p), tuple(omitted))


# ---------------------------------------------------------------------------
# correlation statistics


def spearman(x, y) -> tuple[float, float]:
    """Rank correlation with average-rank ties; p-value by t-approximation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and equally long")
    n = x.size
    if n < 3:
        raise ValueError(f"need >= 3 pairs, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("rank correlation is undefined for a constant vector")
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    if np.unique(rx).size == n and np.unique(ry).size == n:
        # no ties: the rank-difference formula is exact (integer arithmetic)
        d = rx - ry
        rho = 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))
    else:
        rho = float(np.corrcoef(rx, ry)[0, 1])
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


def variance_explained(predictor, response, log_x: bool = False) -> float:
    """R-squared of a simple least-squares regression of response on predictor."""
    x = np.asarray(predictor, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("predictor and response must be 1-D and equally long")
    if x.size < 3:
        raise ValueError(f"need >= 3 concepts, got {x.size}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")
    if log_x:
        if (x <= 0).any():
            raise ValueError("log transform requires positive predictor values")
        x = np.log(x)
    if np.all(x == x[0]):
        raise ValueError("variance explained is undefined for a constant predictor")
    if np.all(y == y[0]):
        return 0.0
    r = float(np.corrcoef(x, y)[0, 1])
    return r * r


def load_external(path) -> dict[str, float]:
    """Read a per-concept score file (CSV: concept,score)."""
    out: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2 or header[0] != "concept":
            raise FormatError(f"{path}: header must be concept,score")
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != 2:
                raise FormatError(f"{path}: row {lineno} has {len(rec)} cells")
            if rec[0] in out:
                raise FormatError(f"{path}: duplicate concept {rec[0]!r}")
            try:
                out[rec[0]] = float(rec[1])
            except ValueError:
                raise FormatError(f"{path}: row {lineno}: not a number: {rec[1]!r}") from None
    if not out:
        raise FormatError(f"{path}: no rows")
    return out


def correlate_external(report: ConcretenessReport, external: dict[str, float]) -> tuple[float, float, int]:
    """Spearman between concreteness and any external per-concept score,
    joined on concept label."""
    ours = report.by_concept()
    shared = sorted(set(ours) & set(external))
    if len(shared) < 3:
        raise ValueError(f"only {len(shared)} concepts overlap; need >= 3")
    x = [ours[c].score for c in shared]
    y = [external[c] for c in shared]
    rho, p = spearman(x, y)
    return rho, p, len(shared)


def binned_curve(x, y, bins: int = 10) -> list[tuple[float, float, int]]:
    """Equal-population bins over x; per bin the x midpoint, mean y, count."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if x.size < bins:
        raise ValueError(f"{x.size} concepts cannot fill {bins} bins")
    order = np.argsort(x, kind="stable")
    out = []
    for chunk in np.array_split(order, bins):
        bx = x[chunk]
        out.append((float((bx.min() + bx.max()) / 2.0), float(y[chunk].mean()), int(chunk.size)))
    return out


def curve_to_csv_bytes(curve: list[tuple[float, float, int]]) -> bytes:
    out = io.StringIO()
    out.write("x_mid,y_mean,count\r\n")
    for x_mid, y_mean, count in curve:
        out.write(f"{fmt(x_mid)},{fmt(y_mean)},{count}\r\n")
    return out.getvalue().encode("utf-8")


def correlation_summary(
    concreteness: ConcretenessReport,
    retriev: RetrievabilityReport,
    log_x: bool = False,
) -> dict:
    """Headline numbers: does concreteness predict retrievability better than
    the frequency null does?"""
    scores = concreteness.by_concept()
    rets = retriev.by_concept()
    shared = sorted(set(scores) & set(rets))
    if len(shared) < 3:
        raise ValueError(f"only {len(shared)} concepts overlap; need >= 3")
    conc = np.asarray([scores[c].score for c in shared])
    freq = np.asarray([scores[c].frequency for c in shared])
    ret = np.asarray([rets[c] for c in shared])
    rho_c, p_c = spearman(conc, ret)
    rho_f, p_f = spearman(freq, ret)
    return {
        "n_concepts": len(shared),
        "p": retriev.p,
        "concreteness_spearman_rho": rho_c,
        "concreteness_spearman_p": p_c,
        "concreteness_r2": variance_explained(conc, ret, log_x=log_x),
        "frequency_spearman_rho": rho_f,
        "frequency_spearman_p": p_f,
        "frequency_r2": variance_explained(freq, ret),
        "log_x": bool(log_x),
    }


def write_summary(path, summary: dict, config: "dict | None" = None) -> None:
    payload = dict(summary)
    if config:
        payload["config"] = config
    write_json(path, payload)
