"""Seeded synthetic datasets for tests, demos and the acceptance suite.

Two generators:

* ``benchmark``: Gaussian image clusters of geometrically increasing spread
  plus a uniform background. Each cluster carries its own word; a few words
  are scattered uniformly. Texts are a fixed linear map of the images plus
  small noise, and a per-cluster share of items (growing with cluster spread,
  all of the background) has its text swapped with another corrupted item's,
  so tight (concrete) concepts keep faithful captions while diffuse ones are
  increasingly mismatched. Every word keeps roughly the same frequency. This
  realizes, at desk scale, a corpus where concreteness predicts retrieval
  difficulty but frequency does not.
* ``linear``: images drawn near a low-dimensional latent manifold with
  micro-cluster structure, texts an almost noiseless linear map of the
  images. Alignment models should retrieve near-perfectly here; the
  nonparametric baseline gets traction from the local structure.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import (
    ConceptIndex,
    DatasetBundle,
    FeatureMatrix,
    Split,
    TopicMatrix,
    write_features,
    write_split,
    write_topics,
)
from .util import atomic_write_text, derived_rng, write_json


@dataclass(frozen=True)
class SynthConfig:
    kind: str = "benchmark"
    n: int = 1800
    d_img: int = 16
    d_txt: int = 24
    seed: int = 0
    train_fraction: float = 0.8
    # benchmark shape
    clusters: int = 12
    bg_fraction: float = 0.2
    center_scale: float = 1.0
    sigma_min: float = 0.7
    sigma_max: float = 4.0
    noise_min: float = 0.05
    noise_max: float = 0.05
    bg_scale: float = 2.0
    bg_noise: float = 0.05
    corrupt_max: float = 0.97
    corrupt_power: float = 3.0
    uniform_words: int = 6
    group_size: int = 10
    # linear shape
    latent_dim: int = 6
    micro_clusters: int = 150
    micro_sigma: float = 0.12
    image_noise: float = 0.01
    text_noise: float = 0.02

    def __post_init__(self):
        if self.kind not in ("benchmark", "linear"):
            raise ValueError(f"kind must be 'benchmark' or 'linear', got {self.kind!r}")
        if self.n < 20 or self.d_img < 2 or self.d_txt < 2:
            raise ValueError("dataset too small to be useful")
        if not 0.5 <= self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in [0.5, 1)")
        if self.kind == "benchmark":
            if self.clusters < 2:
                raise ValueError("need at least 2 clusters")
            if not 0.0 < self.bg_fraction < 0.9:
                raise ValueError("bg_fraction must be in (0, 0.9)")
            if self.sigma_min <= 0 or self.sigma_max < self.sigma_min:
                raise ValueError("need 0 < sigma_min <= sigma_max")
            if self.noise_min <= 0 or self.noise_max < self.noise_min:
                raise ValueError("need 0 < noise_min <= noise_max")
            if not 0.0 <= self.corrupt_max < 1.0:
                raise ValueError("corrupt_max must be in [0, 1)")
            if self.corrupt_power <= 0:
                raise ValueError("corrupt_power must be > 0")


@dataclass(frozen=True)
class SynthDataset:
    bundle: DatasetBundle
    tokens: tuple[tuple[str, ...], ...]
    groups: "tuple[str, ...] | None"
    meta: dict


def _geometric(lo: float, hi: float, count: int) -> np.ndarray:
    if count == 1:
        return np.asarray([lo])
    return np.exp(np.linspace(np.log(lo), np.log(hi), count))


def _ids(n: int) -> tuple[str, ...]:
    return tuple(f"img{i:05d}" for i in range(n))


def _split(n: int, fraction: float, seed: int) -> Split:
    perm = derived_rng(seed, "synth", "split").permutation(n)
    cut = int(round(fraction * n))
    return Split(perm[:cut], perm[cut:])


def make_dataset(config: SynthConfig) -> SynthDataset:
    if config.kind == "benchmark":
        return _make_benchmark(config)
    return _make_linear(config)


def _make_benchmark(config: SynthConfig) -> SynthDataset:
    c = config
    n_bg = int(round(c.bg_fraction * c.n))
    n_clustered = c.n - n_bg
    size_rng = derived_rng(c.seed, "synth", "sizes")
    weights = size_rng.uniform(0.92, 1.08, size=c.clusters)
    sizes = np.floor(weights / weights.sum() * n_clustered).astype(int)
    for i in range(n_clustered - sizes.sum()):
        sizes[i % c.clusters] += 1

    sigmas = _geometric(c.sigma_min, c.sigma_max, c.clusters)
    noise_scales = _geometric(c.noise_min, c.noise_max, c.clusters)
    center_rng = derived_rng(c.seed, "synth", "centers")
    centers = center_rng.normal(size=(c.clusters, c.d_img)) * c.center_scale

    img_rng = derived_rng(c.seed, "synth", "images")
    rows = []
    cluster_of = np.full(c.n, -1, dtype=np.int64)
    pos = 0
    for j in range(c.clusters):
        rows.append(centers[j] + sigmas[j] * img_rng.normal(size=(sizes[j], c.d_img)))
        cluster_of[pos : pos + sizes[j]] = j
        pos += sizes[j]
    rows.append(img_rng.uniform(-c.bg_scale, c.bg_scale, size=(n_bg, c.d_img)))
    img = np.concatenate(rows)

    txt_rng = derived_rng(c.seed, "synth", "texts")
    mixing = txt_rng.normal(size=(c.d_img, c.d_txt)) / np.sqrt(c.d_img)
    noise_of = np.where(cluster_of >= 0, noise_scales[np.clip(cluster_of, 0, None)], c.bg_noise)
    txt = img @ mixing + noise_of[:, None] * txt_rng.normal(size=(c.n, c.d_txt)) / np.sqrt(c.d_txt)

    # mismatch a per-cluster share of captions (all of the background): the
    # corrupted items trade texts along a random cycle, so the marginal text
    # distribution is untouched but the traded pairs cannot be retrieved
    spread_rank = np.where(cluster_of >= 0, cluster_of, c.clusters - 1) / max(c.clusters - 1, 1)
    q_of = np.where(cluster_of >= 0, c.corrupt_max * spread_rank**c.corrupt_power, c.corrupt_max)
    corrupt_rng = derived_rng(c.seed, "synth", "corrupt")
    corrupted = np.flatnonzero(corrupt_rng.uniform(size=c.n) < q_of)
    if corrupted.size >= 2:
        cycle = corrupt_rng.permutation(corrupted)
        txt[cycle] = txt[np.roll(cycle, 1)]

    word_rng = derived_rng(c.seed, "synth", "words")
    tokens: list[list[str]] = [[] for _ in range(c.n)]
    for v in range(c.n):
        if cluster_of[v] >= 0:
            tokens[v].append(f"c{cluster_of[v]:02d}")
    for u in range(c.uniform_words):
        count = int(word_rng.integers(110, 161))
        for v in word_rng.choice(c.n, size=min(count, c.n), replace=False):
            tokens[v].append(f"u{u:02d}")
    tokens = [sorted(t) for t in tokens]

    postings: dict[str, list[int]] = {}
    for v, toks in enumerate(tokens):
        for w in toks:
            postings.setdefault(w, []).append(v)
    concepts = ConceptIndex.from_postings(postings, c.n)

    # soft cluster memberships plus a background topic
    d2 = ((img[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    y = np.exp(-d2 / (2.0 * (sigmas**2 + 0.5)))
    y = np.concatenate([y, np.full((c.n, 1), 0.05)], axis=1)
    y[cluster_of < 0, -1] = 1.0
    y /= y.sum(axis=1, keepdims=True)
    topics = TopicMatrix(y, tuple(f"c{j:02d}" for j in range(c.clusters)) + ("bg",))

    features = FeatureMatrix(img, _ids(c.n))
    texts = FeatureMatrix(txt, _ids(c.n))
    split = _split(c.n, c.train_fraction, c.seed)
    groups = tuple(f"g{v // c.group_size:03d}" for v in range(c.n))
    meta = {
        "config": asdict(c),
        "cluster_sizes": sizes.tolist(),
        "sigmas": sigmas.tolist(),
        "noise_scales": noise_scales.tolist(),
        "corruption_rates": [float(c.corrupt_max * (j / max(c.clusters - 1, 1)) ** c.corrupt_power) for j in range(c.clusters)],
        "n_corrupted": int(corrupted.size),
        "n_background": n_bg,
        "vocab": sorted(postings),
    }
    bundle = DatasetBundle(features, texts, concepts, topics, split)
    return SynthDataset(bundle, tuple(tuple(t) for t in tokens), groups, meta)


def _make_linear(config: SynthConfig) -> SynthDataset:
    c = config
    rng = derived_rng(c.seed, "synth", "linear")
    centers = rng.normal(size=(c.micro_clusters, c.latent_dim))
    assign = rng.integers(0, c.micro_clusters, size=c.n)
    z = centers[assign] + c.micro_sigma * rng.normal(size=(c.n, c.latent_dim))
    embed = rng.normal(size=(c.latent_dim, c.d_img)) / np.sqrt(c.latent_dim)
    img = z @ embed + c.image_noise * rng.normal(size=(c.n, c.d_img))
    mixing = rng.normal(size=(c.d_img, c.d_txt)) / np.sqrt(c.d_img)
    txt = img @ mixing + c.text_noise * rng.normal(size=(c.n, c.d_txt))

    word_rng = derived_rng(c.seed, "synth", "words")
    tokens: list[list[str]] = [[] for _ in range(c.n)]
    for u in range(max(1, c.uniform_words)):
        count = int(word_rng.integers(110, 161))
        for v in word_rng.choice(c.n, size=min(count, c.n), replace=False):
            tokens[v].append(f"u{u:02d}")
    tokens = [sorted(t) for t in tokens]
    postings: dict[str, list[int]] = {}
    for v, toks in enumerate(tokens):
        for w in toks:
            postings.setdefault(w, []).append(v)
    concepts = ConceptIndex.from_postings(postings, c.n) if postings else None

    features = FeatureMatrix(img, _ids(c.n))
    texts = FeatureMatrix(txt, _ids(c.n))
    split = _split(c.n, c.train_fraction, c.seed)
    meta = {"config": asdict(c)}
    bundle = DatasetBundle(features, texts, concepts, None, split)
    return SynthDataset(bundle, tuple(tuple(t) for t in tokens), None, meta)


def write_dataset(dataset: SynthDataset, outdir) -> dict[str, str]:
    """Emit the dataset as the toolkit's standard file set."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    bundle = dataset.bundle
    paths = {
        "images": str(outdir / "images.vcf"),
        "texts": str(outdir / "texts.vcf"),
        "concepts": str(outdir / "concepts.jsonl"),
        "split": str(outdir / "split.json"),
        "meta": str(outdir / "meta.json"),
    }
    write_features(bundle.images, paths["images"])
    write_features(bundle.texts, paths["texts"])
    lines = [
        json.dumps({"image": bundle.images.ids[v], "tokens": list(dataset.tokens[v])})
        for v in range(bundle.images.n)
    ]
    atomic_write_text(paths["concepts"], "\n".join(lines) + "\n")
    write_split(bundle.split, bundle.images, paths["split"])
    if bundle.topics is not None:
        paths["topics"] = str(outdir / "topics.csv")
        write_topics(bundle.topics, bundle.images, paths["topics"])
    if dataset.groups is not None:
        paths["groups"] = str(outdir / "groups.csv")
        rows = ["id,group"] + [
            f"{bundle.images.ids[v]},{dataset.groups[v]}" for v in range(bundle.images.n)
        ]
        atomic_write_text(paths["groups"], "\r\n".join(rows) + "\r\n")
    write_json(paths["meta"], dataset.meta)
    return paths


def load_groups(path, features: FeatureMatrix) -> np.ndarray:
    """Read an id,group CSV into a per-row label array."""
    import csv

    from .data import FormatError

    labels = np.empty(features.n, dtype=object)
    seen = np.zeros(features.n, dtype=bool)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "group"]:
            raise FormatError(f"{path}: header must be id,group")
        index = features._id_index()
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != 2:
                raise FormatError(f"{path}: row {lineno} has {len(rec)} cells")
            if rec[0] not in index:
                raise FormatError(f"{path}: row {lineno}: unknown image id {rec[0]!r}")
            row = index[rec[0]]
            if seen[row]:
                raise FormatError(f"{path}: duplicate row for image id {rec[0]!r}")
            seen[row] = True
            labels[row] = rec[1]
    if not seen.all():
        raise FormatError(f"{path}: {int((~seen).sum())} of {features.n} images have no group")
    return labels
