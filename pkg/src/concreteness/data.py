"""Dataset containers and file ingestion.

Three inputs drive everything downstream: a dense image-feature matrix, a
discrete word->images association index, and a per-image topic-weight matrix.
All containers validate their invariants at construction and are treated as
immutable afterwards.

File formats
------------
* Binary features (canonical interchange): magic ``VCF1``, u32-LE row count,
  u32-LE dimension, ``n*d`` float32-LE values row-major, then ``n``
  length-prefixed (u16-LE) UTF-8 ids.
* CSV features: header ``id,f0,...,f{d-1}``.
* Concept associations: JSON Lines, one object per image:
  ``{"image": "<id>", "tokens": ["dog", "park"]}``.
* Topic weights: CSV with header ``id,<topic_0>,...,<topic_{T-1}>``.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import atomic_write_bytes, fmt

FEATURE_MAGIC = b"VCF1"

DEFAULT_MIN_SUPPORT = 100


class FormatError(ValueError):
    """An input file violates its declared format or a content invariant."""


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense per-image feature vectors with a row -> image-id manifest."""

    data: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", tuple(self.ids))
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise FormatError(f"feature matrix must be 2-D with n,d >= 1, got shape {data.shape}")
        if len(self.ids) != data.shape[0]:
            raise FormatError(f"{len(self.ids)} ids for {data.shape[0]} rows")
        bad = ~np.isfinite(data)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise FormatError(f"non-finite value at row {r}, column {c}")
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise FormatError(f"duplicate image id {dup!r}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row_of(self, image_id: str) -> int:
        index = self._id_index()
        if image_id not in index:
            raise KeyError(image_id)
        return index[image_id]

    def _id_index(self) -> dict[str, int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {i: r for r, i in enumerate(self.ids)}
            object.__setattr__(self, "_index_cache", cached)
        return cached


@dataclass(frozen=True)
class ConceptIndex:
    """Discrete mapping word <-> image rows, with the per-image inverse."""

    vocab: tuple[str, ...]
    postings: dict[str, np.ndarray]
    inverse: tuple[frozenset[str], ...]

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(
            self, "postings", {w: np.asarray(r, dtype=np.int64) for w, r in self.postings.items()}
        )
        n = len(self.inverse)
        for w in self.vocab:
            rows = self.postings[w]
            if rows.size < 1:
                raise FormatError(f"word {w!r} has an empty image set")
            if rows.min() < 0 or rows.max() >= n:
                raise FormatError(f"word {w!r} references a row outside [0, {n})")
            if np.any(np.diff(rows) <= 0):
                raise FormatError(f"postings for {w!r} are not strictly sorted")
        if set(self.postings) != set(self.vocab):
            raise FormatError("postings keys do not match vocab")
        # mutual consistency: v in V_w  <=>  w in tokens(v)
        for w, rows in self.postings.items():
            for v in rows:
                if w not in self.inverse[v]:
                    raise FormatError(f"row {v} lists {w!r} in postings but not inverse")
        counted = sum(len(rows) for rows in self.postings.values())
        if counted != sum(len(t) for t in self.inverse):
            raise FormatError("postings and inverse disagree on association count")

    @property
    def n(self) -> int:
        return len(self.inverse)

    def support(self, word: str) -> int:
        return int(self.postings[word].size)

    @classmethod
    def from_postings(cls, postings: dict[str, "np.ndarray | list[int]"], n: int) -> "ConceptIndex":
        """Build a consistent index from a word -> rows mapping."""
        clean = {w: np.unique(np.asarray(rows, dtype=np.int64)) for w, rows in postings.items()}
        tokens: list[set[str]] = [set() for _ in range(n)]
        for w, rows in clean.items():
            for v in rows:
                tokens[v].add(w)
        return cls(
            vocab=tuple(sorted(clean)),
            postings=clean,
            inverse=tuple(frozenset(t) for t in tokens),
        )

    def filtered(self, min_support: int) -> "ConceptIndex":
        """Keep only words appearing on at least ``min_support`` images."""
        if min_support < 1:
            raise ValueError("min_support must be >= 1")
        kept = {w: rows for w, rows in self.postings.items() if rows.size >= min_support}
        if not kept:
            raise FormatError(f"no word has support >= {min_support}")
        return ConceptIndex.from_postings(kept, self.n)


@dataclass(frozen=True)
class TopicMatrix:
    """Nonnegative per-image topic weights; columns are topics."""

    weights: np.ndarray
    topic_ids: tuple[str, ...]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "topic_ids", tuple(self.topic_ids))
        if weights.ndim != 2 or weights.shape[1] < 1 or weights.shape[0] < 1:
            raise FormatError(f"topic matrix must be 2-D, got shape {weights.shape}")
        if len(self.topic_ids) != weights.shape[1]:
            raise FormatError(f"{len(self.topic_ids)} topic ids for {weights.shape[1]} columns")
        if len(set(self.topic_ids)) != len(self.topic_ids):
            raise FormatError("duplicate topic id")
        bad = ~np.isfinite(weights)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise FormatError(f"non-finite topic weight at row {r}, topic {self.topic_ids[c]!r}")
        neg = weights < 0
        if neg.any():
            r, c = np.argwhere(neg)[0]
            raise FormatError(f"negative topic weight at row {r}, topic {self.topic_ids[c]!r}")
        mass = weights.sum(axis=0)
        if np.any(mass <= 0):
            t = int(np.argmin(mass))
            raise FormatError(f"topic {self.topic_ids[t]!r} has zero total mass")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def num_topics(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Split:
    """Train/test partition by row index."""

    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        train = np.unique(np.asarray(self.train, dtype=np.int64))
        test = np.unique(np.asarray(self.test, dtype=np.int64))
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "test", test)
        if train.size == 0 or test.size == 0:
            raise FormatError("train and test sets must both be nonempty")
        if np.intersect1d(train, test).size:
            raise FormatError("train and test sets overlap")


@dataclass(frozen=True)
class DatasetBundle:
    """Everything one run needs: features plus whichever views exist."""

    images: FeatureMatrix
    texts: FeatureMatrix | None = None
    concepts: ConceptIndex | None = None
    topics: TopicMatrix | None = None
    split: Split | None = None

    def __post_init__(self):
        n = self.images.n
        if self.texts is not None and self.texts.n != n:
            raise FormatError(f"text rows ({self.texts.n}) do not match image rows ({n})")
        if self.concepts is not None and self.concepts.n != n:
            raise FormatError("concept index is bound to a different row count")
        if self.topics is not None and self.topics.n != n:
            raise FormatError("topic matrix is bound to a different row count")
        if self.split is not None:
            hi = max(self.split.train.max(), self.split.test.max())
            if hi >= n or min(self.split.train.min(), self.split.test.min()) < 0:
                raise FormatError("split references rows outside the feature matrix")


# ---------------------------------------------------------------------------
# feature ingestion


def load_features(path: str | Path, fmt: str = "binary") -> FeatureMatrix:
    """Read a feature file; row order equals file order."""
    if fmt == "binary":
        return _read_binary_features(Path(path))
    if fmt == "csv":
        return _read_csv_features(Path(path))
    raise ValueError(f"unknown feature format {fmt!r}")


def write_features(features: FeatureMatrix, path: str | Path, fmt: str = "binary") -> None:
    if fmt == "binary":
        atomic_write_bytes(path, _binary_feature_bytes(features))
    elif fmt == "csv":
        atomic_write_bytes(path, _csv_feature_bytes(features))
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def _read_binary_features(path: Path) -> FeatureMatrix:
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a {FEATURE_MAGIC.decode()} feature file")
    n, d = struct.unpack_from("<II", raw, 4)
    if n < 1 or d < 1:
        raise FormatError(f"{path}: header declares n={n}, d={d}")
    off = 12
    need = n * d * 4
    if len(raw) < off + need:
        raise FormatError(f"{path}: truncated value block")
    values = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += need
    ids = []
    for _ in range(n):
        if len(raw) < off + 2:
            raise FormatError(f"{path}: truncated id block")
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        if len(raw) < off + ln:
            raise FormatError(f"{path}: truncated id block")
        ids.append(raw[off : off + ln].decode("utf-8"))
        off += ln
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return FeatureMatrix(values.astype(np.float64), tuple(ids))


def _binary_feature_bytes(features: FeatureMatrix) -> bytes:
    out = io.BytesIO()
    out.write(FEATURE_MAGIC)
    out.write(struct.pack("<II", features.n, features.d))
    out.write(np.ascontiguousarray(features.data, dtype="<f4").tobytes())
    for image_id in features.ids:
        enc = image_id.encode("utf-8")
        if len(enc) > 0xFFFF:
            raise FormatError(f"image id longer than 65535 bytes: {image_id[:32]!r}...")
        out.write(struct.pack("<H", len(enc)))
        out.write(enc)
    return out.getvalue()


def _read_csv_features(path: Path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "id":
            raise FormatError(f"{path}: header must be id,f0,...,f{{d-1}}")
        d = len(header) - 1
        expected = ["id"] + [f"f{i}" for i in range(d)]
        if header != expected:
            raise FormatError(f"{path}: malformed header {header[:4]}...")
        ids, rows = [], []
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != d + 1:
                raise FormatError(f"{path}: row {lineno} has {len(rec) - 1} values, expected {d}")
            ids.append(rec[0])
            try:
                rows.append([float(x) for x in rec[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return FeatureMatrix(np.asarray(rows, dtype=np.float64), tuple(ids))


def _csv_feature_bytes(features: FeatureMatrix) -> bytes:
    out = io.StringIO()
    out.write("id," + ",".join(f"f{i}" for i in range(features.d)) + "\r\n")
    for image_id, row in zip(features.ids, features.data):
        out.write(image_id + "," + ",".join(fmt(v) for v in row) + "\r\n")
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# concept / topic ingestion


def load_concepts(
    path: str | Path,
    features: FeatureMatrix,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> ConceptIndex:
    """Read JSONL token associations bound to ``features``.

    Tokens are deduplicated per image; words kept only if they appear on at
    least ``min_support`` distinct images.
    """
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    index = features._id_index()
    per_word: dict[str, set[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "image" not in rec or "tokens" not in rec:
                raise FormatError(f"{path}: line {lineno}: expected {{'image':..., 'tokens':...}}")
            image_id = rec["image"]
            if image_id not in index:
                raise FormatError(f"{path}: line {lineno}: unknown image id {image_id!r}")
            row = index[image_id]
            tokens = rec["tokens"]
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise FormatError(f"{path}: line {lineno}: tokens must be a list of strings")
            for tok in set(tokens):
                per_word.setdefault(tok, set()).add(row)
    kept = {w: rows for w, rows in per_word.items() if len(rows) >= min_support}
    if not kept:
        raise FormatError(f"{path}: no word appears on >= {min_support} images")
    return ConceptIndex.from_postings({w: sorted(r) for w, r in kept.items()}, features.n)


def load_topics(path: str | Path, features: FeatureMatrix) -> TopicMatrix:
    """Read a topic-weight CSV; rows are reordered to the feature manifest."""
    index = features._id_index()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "id":
            raise FormatError(f"{path}: header must be id,<topic ids>")
        topic_ids = tuple(header[1:])
        weights = np.zeros((features.n, len(topic_ids)))
        seen = np.zeros(features.n, dtype=bool)
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != len(topic_ids) + 1:
                raise FormatError(f"{path}: row {lineno} has {len(rec) - 1} weights")
            if rec[0] not in index:
                raise FormatError(f"{path}: row {lineno}: unknown image id {rec[0]!r}")
            row = index[rec[0]]
            if seen[row]:
                raise FormatError(f"{path}: duplicate row for image id {rec[0]!r}")
            seen[row] = True
            try:
                weights[row] = [float(x) for x in rec[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from None
    if not seen.all():
        missing = int((~seen).sum())
        raise FormatError(f"{path}: {missing} of {features.n} images have no topic row")
    return TopicMatrix(weights, topic_ids)


def write_topics(topics: TopicMatrix, features: FeatureMatrix, path: str | Path) -> None:
    out = io.StringIO()
    out.write("id," + ",".join(topics.topic_ids) + "\r\n")
    for image_id, row in zip(features.ids, topics.weights):
        out.write(image_id + "," + ",".join(fmt(v) for v in row) + "\r\n")
    atomic_write_bytes(path, out.getvalue().encode("utf-8"))


def load_split(path: str | Path, features: FeatureMatrix) -> Split:
    """Read a JSON ``{"train": [ids], "test": [ids]}`` partition."""
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    if not isinstance(rec, dict) or "train" not in rec or "test" not in rec:
        raise FormatError(f"{path}: expected keys 'train' and 'test'")
    index = features._id_index()

    def rows(ids, side):
        out = []
        for image_id in ids:
            if image_id not in index:
                raise FormatError(f"{path}: unknown image id {image_id!r} in {side} set")
            out.append(index[image_id])
        return out

    return Split(np.asarray(rows(rec["train"], "train")), np.asarray(rows(rec["test"], "test")))


def write_split(split: Split, features: FeatureMatrix, path: str | Path) -> None:
    from .util import write_json

    write_json(
        path,
        {
            "train": [features.ids[i] for i in split.train],
            "test": [features.ids[i] for i in split.test],
        },
    )


def one_hot_topics(concepts: ConceptIndex) -> TopicMatrix:
    """Indicator topic matrix from a disjoint concept partition.

    Requires every image to carry exactly one word; used to cross-check the
    continuous scorer against the discrete one.
    """
    counts = np.zeros(concepts.n, dtype=np.int64)
    weights = np.zeros((concepts.n, len(concepts.vocab)))
    for t, w in enumerate(concepts.vocab):
        rows = concepts.postings[w]
        counts[rows] += 1
        weights[rows, t] = 1.0
    if np.any(counts != 1):
        v = int(np.argwhere(counts != 1)[0, 0])
        raise ValueError(f"row {v} carries {counts[v]} words; need exactly one for one-hot topics")
    return TopicMatrix(weights, concepts.vocab)
