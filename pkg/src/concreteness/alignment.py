"""Cross-modal alignment models and bidirectional retrieval evaluation.

Three model families over row-aligned image/text feature matrices:

* NP: nonparametric baseline. A query image is answered by its nearest
  training image; candidate texts are scored against that image's text
  (symmetrically for text queries).
* LS: ridge-regularized linear map between the two spaces, solved in closed
  form via the normal equations. Both directions can be fit and the better
  one per query direction kept on a validation fold.
* NS: two linear projections into a shared space trained with a hinge margin
  against sampled negatives, one negative image and one negative text per
  positive pair.

Evaluation ranks each test instance's true counterpart among all test
candidates in both directions. Ranks are pessimistic under score ties (the
true counterpart counts as ranked after every candidate with an equal or
better score) and are reported as 1-based percentiles in (0, 100].
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .data import FormatError
from .util import atomic_write_bytes, derived_rng, fmt

MODEL_MAGIC = b"VCALN1"

DIRECTIONS = ("img2txt", "txt2img")

_EPS = 1e-12


def hinge(pos: float, neg: float, alpha: float = 0.2):
    """Margin penalty max(0, alpha - pos + neg); zero once pos clears neg by alpha."""
    return np.maximum(0.0, alpha - pos + neg)


def pair_loss(pos_sim: float, neg_img_sim: float, neg_txt_sim: float, alpha: float = 0.2) -> float:
    """Loss of one positive pair against its two sampled negatives."""
    return float(hinge(pos_sim, neg_img_sim, alpha) + hinge(pos_sim, neg_txt_sim, alpha))


# ---------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Standardizer:
    """Optional zero-mean/unit-variance transform fit on training rows."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        std = np.where(std < _EPS, 1.0, std)
        return cls(x.mean(axis=0), std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def _apply(std: "Standardizer | None", x: np.ndarray) -> np.ndarray:
    return x if std is None else std.transform(x)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class NpModel:
    kind = "np"
    train_img: np.ndarray
    train_txt: np.ndarray
    img_std: "Standardizer | None" = None
    txt_std: "Standardizer | None" = None


@dataclass(frozen=True)
class LinearMap:
    """W maps the source space into the target space; shape target_dim x source_dim."""

    kind = "ls"
    weights: np.ndarray
    lam: float
    direction: str
    img_std: "Standardizer | None" = None
    txt_std: "Standardizer | None" = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not np.isfinite(self.weights).all():
            raise ValueError("non-finite weight in linear map")

    def project(self, source_rows: np.ndarray) -> np.ndarray:
        return source_rows @ self.weights.T


@dataclass(frozen=True)
class LsModel:
    """Linear maps fit in both directions; each query direction uses the map
    that won on validation."""

    kind = "ls"
    maps: dict
    pick_img2txt: str
    pick_txt2img: str

    def __post_init__(self):
        for pick in (self.pick_img2txt, self.pick_txt2img):
            if pick not in self.maps:
                raise ValueError(f"picked direction {pick!r} has no fitted map")


@dataclass(frozen=True)
class NsModel:
    kind = "ns"
    img_proj: np.ndarray
    txt_proj: np.ndarray
    alpha: float
    img_std: "Standardizer | None" = None
    txt_std: "Standardizer | None" = None
    history: tuple = ()

    @property
    def shared_dim(self) -> int:
        return self.img_proj.shape[1]

    def __post_init__(self):
        if self.shared_dim < 1:
            raise ValueError("shared_dim must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class NsConfig:
    shared_dim: int = 24
    alpha: float = 0.2
    epochs: int = 40
    batch: int = 64
    lr: float = 0.5
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 6

    def __post_init__(self):
        if self.shared_dim < 1 or self.epochs < 1 or self.batch < 1:
            raise ValueError("shared_dim, epochs and batch must be >= 1")
        if self.alpha <= 0 or self.lr <= 0:
            raise ValueError("alpha and lr must be > 0")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ValueError("val_fraction must be in [0, 0.5]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


# ---------------------------------------------------------------------------
# training


def fit_least_squares(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Exact ridge minimizer of |xW - y|^2 + lam*|W|^2, returned target x source."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} source rows vs {y.shape[0]} target rows")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0 and x.shape[0] < x.shape[1]:
        raise ValueError(f"underdetermined system: {x.shape[0]} rows < {x.shape[1]} dims needs lambda > 0")
    gram = x.T @ x + lam * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(gram, x.T @ y)
    except np.linalg.LinAlgError:
        raise ValueError("singular normal equations; increase lambda") from None
    return w.T


def train_linear(
    img: np.ndarray,
    txt: np.ndarray,
    lam: float = 1.0,
    direction: str = "img2txt",
    standardize: bool = False,
) -> LinearMap:
    img_std = Standardizer.fit(img) if standardize else None
    txt_std = Standardizer.fit(txt) if standardize else None
    xi, xt = _apply(img_std, img), _apply(txt_std, txt)
    if direction == "img2txt":
        w = fit_least_squares(xi, xt, lam)
    elif direction == "txt2img":
        w = fit_least_squares(xt, xi, lam)
    else:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return LinearMap(w, lam, direction, img_std, txt_std)


def train_ls(
    img: np.ndarray,
    txt: np.ndarray,
    lam: float = 1.0,
    val_fraction: float = 0.1,
    seed: int = 0,
    standardize: str = "auto",
) -> LsModel:
    """Fit both directions (optionally both preprocessing modes) and keep the
    winner per query direction, judged by R@1% on a held-out slice."""
    n = img.shape[0]
    n_val = max(2, int(round(val_fraction * n)))
    if n_val >= n:
        raise ValueError("training set too small to hold out a validation slice")
    perm = derived_rng(seed, "ls", "val").permutation(n)
    fit_rows, val_rows = perm[:-n_val], perm[-n_val:]
    modes = [False, True] if standardize == "auto" else [bool(standardize)]
    candidates = [
        train_linear(img[fit_rows], txt[fit_rows], lam, direction, mode)
        for direction in DIRECTIONS
        for mode in modes
    ]
    best: dict[str, tuple[float, LinearMap]] = {}
    for cand in candidates:
        res = evaluate_retrieval(cand, img[val_rows], txt[val_rows], p_values=(1.0,))
        for query_dir, score in (("img2txt", res.recall_img2txt[1.0]), ("txt2img", res.recall_txt2img[1.0])):
            if query_dir not in best or score > best[query_dir][0]:
                best[query_dir] = (score, cand)
    final = {}
    for query_dir, (_, cand) in best.items():
        refit = train_linear(img, txt, lam, cand.direction, cand.img_std is not None)
        final[f"{query_dir}:{cand.direction}"] = refit
    return LsModel(
        maps={key: m for key, m in final.items()},
        pick_img2txt=next(k for k in final if k.startswith("img2txt:")),
        pick_txt2img=next(k for k in final if k.startswith("txt2img:")),
    )


def train_np(img: np.ndarray, txt: np.ndarray, standardize: bool = False) -> NpModel:
    img_std = Standardizer.fit(img) if standardize else None
    txt_std = Standardizer.fit(txt) if standardize else None
    return NpModel(_apply(img_std, img), _apply(txt_std, txt), img_std, txt_std)


def train_ns(
    img: np.ndarray,
    txt: np.ndarray,
    config: NsConfig = NsConfig(),
    standardize: bool = False,
) -> NsModel:
    """Hinge-margin trainer; plain SGD, one negative image and one negative
    text per positive per epoch, early stopping on validation R@1%."""
    img = np.asarray(img, dtype=np.float64)
    txt = np.asarray(txt, dtype=np.float64)
    n = img.shape[0]
    if n < 4:
        raise ValueError("training set too small")
    img_std = Standardizer.fit(img) if standardize else None
    txt_std = Standardizer.fit(txt) if standardize else None
    xi, xt = _apply(img_std, img), _apply(txt_std, txt)

    rng = derived_rng(config.seed, "ns", "init")
    n_val = int(round(config.val_fraction * n))
    perm = derived_rng(config.seed, "ns", "val").permutation(n)
    fit_rows, val_rows = perm[: n - n_val], perm[n - n_val :]
    ti, tt = xi[fit_rows], xt[fit_rows]
    m = ti.shape[0]

    a = rng.normal(size=(img.shape[1], config.shared_dim)) / np.sqrt(img.shape[1])
    b = rng.normal(size=(txt.shape[1], config.shared_dim)) / np.sqrt(txt.shape[1])
    best = (a.copy(), b.copy())
    best_val, since_best = -1.0, 0
    history = []

    for epoch in range(config.epochs):
        erng = derived_rng(config.seed, "ns", "epoch", epoch)
        order = erng.permutation(m)
        neg_i = _sample_negatives(erng, m)
        neg_t = _sample_negatives(erng, m)
        epoch_loss = 0.0
        for start in range(0, m, config.batch):
            ib = order[start : start + config.batch]
            loss = _ns_step(a, b, ti, tt, ib, neg_i[ib], neg_t[ib], config.alpha, config.lr)
            if not np.isfinite(loss):
                raise ValueError(f"non-finite training loss at epoch {epoch}, step {start // config.batch}")
            epoch_loss += loss * ib.size
        history.append(epoch_loss / m)
        if val_rows.size >= 2:
            probe = NsModel(a.copy(), b.copy(), config.alpha, img_std, txt_std)
            val = evaluate_retrieval(probe, img[val_rows], txt[val_rows], p_values=(1.0,)).recall[1.0]
            if val > best_val:
                best_val, since_best = val, 0
                best = (a.copy(), b.copy())
            else:
                since_best += 1
                if since_best >= config.patience:
                    break
    if val_rows.size >= 2:
        a, b = best
    return NsModel(a, b, config.alpha, img_std, txt_std, history=tuple(history))


def _sample_negatives(rng, m: int) -> np.ndarray:
    """One uniform negative per row, never the row itself."""
    neg = rng.integers(0, m - 1, size=m)
    neg[neg >= np.arange(m)] += 1
    return neg


def _unit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    safe = np.maximum(norms, _EPS)
    return x / safe[:, None], safe


def _ns_step(a, b, ti, tt, ib, neg_i, neg_t, alpha, lr) -> float:
    pa = ti[ib] @ a
    pb = tt[ib] @ b
    na = ti[neg_i] @ a
    nb = tt[neg_t] @ b
    pah, pan = _unit(pa)
    pbh, pbn = _unit(pb)
    nah, nan = _unit(na)
    nbh, nbn = _unit(nb)
    pos = np.einsum("ij,ij->i", pah, pbh)
    s_negimg = np.einsum("ij,ij->i", nah, pbh)
    s_negtxt = np.einsum("ij,ij->i", pah, nbh)
    act1 = (alpha - pos + s_negimg > 0).astype(np.float64)
    act2 = (alpha - pos + s_negtxt > 0).astype(np.float64)
    loss = float(np.mean(np.maximum(0.0, alpha - pos + s_negimg) + np.maximum(0.0, alpha - pos + s_negtxt)))

    both = (act1 + act2)[:, None]
    g_pa = -both * (pbh - pos[:, None] * pah) / pan[:, None]
    g_pa += act2[:, None] * (nbh - s_negtxt[:, None] * pah) / pan[:, None]
    g_pb = -both * (pah - pos[:, None] * pbh) / pbn[:, None]
    g_pb += act1[:, None] * (nah - s_negimg[:, None] * pbh) / pbn[:, None]
    g_na = act1[:, None] * (pbh - s_negimg[:, None] * nah) / nan[:, None]
    g_nb = act2[:, None] * (pah - s_negtxt[:, None] * nbh) / nbn[:, None]

    scale = lr / ib.size
    a -= scale * (ti[ib].T @ g_pa + ti[neg_i].T @ g_na)
    b -= scale * (tt[ib].T @ g_pb + tt[neg_t].T @ g_nb)
    return loss


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class RetrievalResult:
    """Per-test-instance bidirectional percentile ranks and hit indicators.

    rank_img2txt[i] is the 1-based percentile of instance i's true text among
    all test texts when queried by its image (lower is better); r[i] averages
    the two directions. recall[p] averages the two per-direction top-p% hit
    rates into a single number.
    """

    ids: tuple[str, ...]
    rank_img2txt: np.ndarray
    rank_txt2img: np.ndarray
    p_values: tuple[float, ...]
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("rank_img2txt", "rank_txt2img"):
            ranks = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, ranks)
            if ranks.shape != (len(self.ids),):
                raise ValueError(f"{name} covers {ranks.shape[0]} instances, ids list {len(self.ids)}")
            if ranks.size and (ranks.min() <= 0.0 or ranks.max() > 100.0):
                raise ValueError(f"{name} has a percentile outside (0, 100]")

    @property
    def r(self) -> np.ndarray:
        return (self.rank_img2txt + self.rank_txt2img) / 2.0

    def hits(self, p: float) -> np.ndarray:
        """Per-instance indicator: mean percentile within the top p%."""
        return self.r <= p

    @property
    def recall_img2txt(self) -> dict[float, float]:
        return {p: float((self.rank_img2txt <= p).mean()) for p in self.p_values}

    @property
    def recall_txt2img(self) -> dict[float, float]:
        return {p: float((self.rank_txt2img <= p).mean()) for p in self.p_values}

    @property
    def recall(self) -> dict[float, float]:
        i2t, t2i = self.recall_img2txt, self.recall_txt2img
        return {p: (i2t[p] + t2i[p]) / 2.0 for p in self.p_values}

    def to_csv_bytes(self) -> bytes:
        out = io.StringIO()
        hit_cols = ",".join(f"hit@{p:g}" for p in self.p_values)
        out.write(f"instance_id,rank_img2txt,rank_txt2img,r_i,{hit_cols}\r\n")
        r = self.r
        for i, instance_id in enumerate(self.ids):
            cells = [
                instance_id,
                fmt(self.rank_img2txt[i]),
                fmt(self.rank_txt2img[i]),
                fmt(r[i]),
            ]
            cells += [str(int(r[i] <= p)) for p in self.p_values]
            out.write(",".join(cells) + "\r\n")
        return out.getvalue().encode("utf-8")

    def write_csv(self, path) -> None:
        atomic_write_bytes(path, self.to_csv_bytes())


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ah, _ = _unit(a)
    bh, _ = _unit(b)
    return ah @ bh.T


def _score_matrices(model, img: np.ndarray, txt: np.ndarray):
    """Similarity matrices for both query directions plus per-instance validity."""
    if isinstance(model, NpModel):
        qi = _apply(model.img_std, img)
        qt = _apply(model.txt_std, txt)
        nn_img = np.argmax(_cosine(qi, model.train_img), axis=1)
        nn_txt = np.argmax(_cosine(qt, model.train_txt), axis=1)
        s_i2t = _cosine(model.train_txt[nn_img], qt)
        s_t2i = _cosine(model.train_img[nn_txt], qi)
        valid = (np.linalg.norm(qi, axis=1) > 0) & (np.linalg.norm(qt, axis=1) > 0)
        return s_i2t, s_t2i, valid
    if isinstance(model, LinearMap):
        qi = _apply(model.img_std, img)
        qt = _apply(model.txt_std, txt)
        if model.direction == "img2txt":
            proj = model.project(qi)
            s = _cosine(proj, qt)
            s_i2t, s_t2i = s, s.T
            valid = (np.linalg.norm(proj, axis=1) > 0) & (np.linalg.norm(qt, axis=1) > 0)
        else:
            proj = model.project(qt)
            s = _cosine(proj, qi)
            s_t2i, s_i2t = s, s.T
            valid = (np.linalg.norm(proj, axis=1) > 0) & (np.linalg.norm(qi, axis=1) > 0)
        return s_i2t, s_t2i, valid
    if isinstance(model, LsModel):
        s_i2t, _, v1 = _score_matrices(model.maps[model.pick_img2txt], img, txt)
        _, s_t2i, v2 = _score_matrices(model.maps[model.pick_txt2img], img, txt)
        return s_i2t, s_t2i, v1 & v2
    if isinstance(model, NsModel):
        pi = _apply(model.img_std, img) @ model.img_proj
        pt = _apply(model.txt_std, txt) @ model.txt_proj
        s = _cosine(pi, pt)
        valid = (np.linalg.norm(pi, axis=1) > 0) & (np.linalg.norm(pt, axis=1) > 0)
        return s, s.T, valid
    raise TypeError(f"unknown model type {type(model).__name__}")


def evaluate_retrieval(
    model,
    img: np.ndarray,
    txt: np.ndarray,
    ids: "tuple[str, ...] | None" = None,
    p_values: tuple = (1.0, 5.0, 10.0),
) -> RetrievalResult:
    """Rank each instance's true counterpart among all test candidates, both
    directions. Instances whose representation degenerates to a zero vector
    are excluded with a warning rather than ranked arbitrarily."""
    img = np.asarray(img, dtype=np.float64)
    txt = np.asarray(txt, dtype=np.float64)
    if img.shape[0] != txt.shape[0]:
        raise ValueError(f"{img.shape[0]} images vs {txt.shape[0]} texts")
    n = img.shape[0]
    if n < 2:
        raise ValueError("need at least 2 test instances to rank")
    for p in p_values:
        if not 0.0 < p <= 100.0:
            raise ValueError(f"p must be in (0, 100], got {p}")
    ids = tuple(str(i) for i in range(n)) if ids is None else tuple(ids)
    if len(ids) != n:
        raise ValueError(f"{len(ids)} ids for {n} instances")

    s_i2t, s_t2i, valid = _score_matrices(model, img, txt)
    excluded = tuple(ids[i] for i in np.flatnonzero(~valid))
    if excluded:
        warnings.warn(f"excluded {len(excluded)} degenerate test instances: {excluded[:5]}")
        keep = np.flatnonzero(valid)
        if keep.size < 2:
            raise ValueError("fewer than 2 valid test instances")
        s_i2t = s_i2t[np.ix_(keep, keep)]
        s_t2i = s_t2i[np.ix_(keep, keep)]
        ids = tuple(ids[i] for i in keep)
    m = s_i2t.shape[0]
    diag_i2t = np.diagonal(s_i2t)
    diag_t2i = np.diagonal(s_t2i)
    rank_i2t = (s_i2t >= diag_i2t[:, None]).sum(axis=1)
    rank_t2i = (s_t2i >= diag_t2i[:, None]).sum(axis=1)
    return RetrievalResult(
        ids=ids,
        rank_img2txt=rank_i2t / m * 100.0,
        rank_txt2img=rank_t2i / m * 100.0,
        p_values=tuple(float(p) for p in p_values),
        excluded=excluded,
    )


def read_eval_csv(path) -> RetrievalResult:
    """Load a previously written per-instance evaluation table."""
    import csv

    prefix = ["instance_id", "rank_img2txt", "rank_txt2img", "r_i"]
    ids, i2t, t2i = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[: len(prefix)] != prefix:
            raise FormatError(f"{path}: header must start with {','.join(prefix)}")
        p_values = []
        for col in header[len(prefix) :]:
            if not col.startswith("hit@"):
                raise FormatError(f"{path}: unexpected column {col!r}")
            p_values.append(float(col[4:]))
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != len(header):
                raise FormatError(f"{path}: row {lineno} has {len(rec)} cells")
            try:
                ids.append(rec[0])
                i2t.append(float(rec[1]))
                t2i.append(float(rec[2]))
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from None
    if not ids:
        raise FormatError(f"{path}: no rows")
    return RetrievalResult(
        ids=tuple(ids),
        rank_img2txt=np.asarray(i2t),
        rank_txt2img=np.asarray(t2i),
        p_values=tuple(p_values),
    )


def np_baseline(bundle, p_values: tuple = (1.0, 5.0, 10.0), standardize: bool = False):
    """Convenience wrapper: train NP on the bundle's split and evaluate it."""
    if bundle.split is None:
        raise ValueError("bundle has no train/test split")
    if bundle.texts is None:
        raise ValueError("bundle has no text features")
    tr, te = bundle.split.train, bundle.split.test
    model = train_np(bundle.images.data[tr], bundle.texts.data[tr], standardize)
    ids = tuple(bundle.images.ids[i] for i in te)
    return model, evaluate_retrieval(model, bundle.images.data[te], bundle.texts.data[te], ids, p_values)


# ---------------------------------------------------------------------------
# cross-validation


def kfold_splits(
    n: int,
    folds: int = 10,
    seed: int = 0,
    groups: "np.ndarray | None" = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded k-fold partition; with groups, whole groups stay on one side."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = derived_rng(seed, "cv")
    if groups is None:
        if n < folds:
            raise ValueError(f"cannot split {n} rows into {folds} folds")
        perm = rng.permutation(n)
        parts = np.array_split(perm, folds)
    else:
        groups = np.asarray(groups)
        if groups.shape[0] != n:
            raise ValueError(f"{groups.shape[0]} group labels for {n} rows")
        unique = sorted(set(groups.tolist()))
        if len(unique) < folds:
            raise ValueError(f"cannot split {len(unique)} groups into {folds} folds")
        order = rng.permutation(len(unique))
        by_group = {g: np.flatnonzero(groups == g) for g in unique}
        parts = [
            np.sort(np.concatenate([by_group[unique[i]] for i in chunk]))
            for chunk in np.array_split(order, folds)
        ]
    out = []
    for f in range(folds):
        test = np.sort(parts[f])
        train = np.sort(np.concatenate([parts[g] for g in range(folds) if g != f]))
        out.append((train, test))
    return out


# ---------------------------------------------------------------------------
# serialization

_KIND_CODES = {"np": 0, "ls_single": 1, "ns": 2, "ls_pair": 3}


def _pack_std(out: io.BytesIO, std: "Standardizer | None") -> None:
    if std is None:
        out.write(struct.pack("<B", 0))
        return
    out.write(struct.pack("<BI", 1, std.mean.shape[0]))
    out.write(np.ascontiguousarray(std.mean, dtype="<f4").tobytes())
    out.write(np.ascontiguousarray(std.std, dtype="<f4").tobytes())


def _unpack_std(raw: bytes, off: int):
    (flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    if not flag:
        return None, off
    (d,) = struct.unpack_from("<I", raw, off)
    off += 4
    mean = np.frombuffer(raw, dtype="<f4", count=d, offset=off).astype(np.float64)
    off += 4 * d
    std = np.frombuffer(raw, dtype="<f4", count=d, offset=off).astype(np.float64)
    off += 4 * d
    return Standardizer(mean, std), off


def _pack_matrix(out: io.BytesIO, m: np.ndarray) -> None:
    out.write(struct.pack("<II", m.shape[0], m.shape[1]))
    out.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def _unpack_matrix(raw: bytes, off: int):
    r, c = struct.unpack_from("<II", raw, off)
    off += 8
    m = np.frombuffer(raw, dtype="<f4", count=r * c, offset=off).reshape(r, c).astype(np.float64)
    off += 4 * r * c
    return m, off


def model_to_bytes(model) -> bytes:
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    if isinstance(model, NpModel):
        out.write(struct.pack("<BB", 1, _KIND_CODES["np"]))
        _pack_std(out, model.img_std)
        _pack_std(out, model.txt_std)
        _pack_matrix(out, model.train_img)
        _pack_matrix(out, model.train_txt)
    elif isinstance(model, LinearMap):
        out.write(struct.pack("<BB", 1, _KIND_CODES["ls_single"]))
        _pack_std(out, model.img_std)
        _pack_std(out, model.txt_std)
        out.write(struct.pack("<Bd", DIRECTIONS.index(model.direction), model.lam))
        _pack_matrix(out, model.weights)
    elif isinstance(model, LsModel):
        out.write(struct.pack("<BB", 1, _KIND_CODES["ls_pair"]))
        keys = sorted(model.maps)
        out.write(struct.pack("<B", len(keys)))
        for key in keys:
            enc = key.encode("utf-8")
            out.write(struct.pack("<H", len(enc)))
            out.write(enc)
            out.write(model_to_bytes(model.maps[key]))
        for pick in (model.pick_img2txt, model.pick_txt2img):
            enc = pick.encode("utf-8")
            out.write(struct.pack("<H", len(enc)))
            out.write(enc)
    elif isinstance(model, NsModel):
        out.write(struct.pack("<BB", 1, _KIND_CODES["ns"]))
        _pack_std(out, model.img_std)
        _pack_std(out, model.txt_std)
        out.write(struct.pack("<d", model.alpha))
        _pack_matrix(out, model.img_proj)
        _pack_matrix(out, model.txt_proj)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out.getvalue()


def save_model(model, path) -> None:
    atomic_write_bytes(path, model_to_bytes(model))


def model_from_bytes(raw: bytes, label: str = "model"):
    try:
        model, off = _model_from_bytes(raw, 0, label)
    except FormatError:
        raise
    except (struct.error, ValueError):
        raise FormatError(f"{label}: truncated or corrupt model file") from None
    if off != len(raw):
        raise FormatError(f"{label}: {len(raw) - off} trailing bytes")
    return model


def _model_from_bytes(raw: bytes, off: int, label: str):
    if raw[off : off + len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{label}: not a {MODEL_MAGIC.decode()} model file")
    off += len(MODEL_MAGIC)
    version, kind = struct.unpack_from("<BB", raw, off)
    off += 2
    if version != 1:
        raise FormatError(f"{label}: unsupported model version {version}")
    if kind == _KIND_CODES["np"]:
        img_std, off = _unpack_std(raw, off)
        txt_std, off = _unpack_std(raw, off)
        ti, off = _unpack_matrix(raw, off)
        tt, off = _unpack_matrix(raw, off)
        return NpModel(ti, tt, img_std, txt_std), off
    if kind == _KIND_CODES["ls_single"]:
        img_std, off = _unpack_std(raw, off)
        txt_std, off = _unpack_std(raw, off)
        dcode, lam = struct.unpack_from("<Bd", raw, off)
        off += 9
        w, off = _unpack_matrix(raw, off)
        return LinearMap(w, lam, DIRECTIONS[dcode], img_std, txt_std), off
    if kind == _KIND_CODES["ls_pair"]:
        (count,) = struct.unpack_from("<B", raw, off)
        off += 1
        maps = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            key = raw[off : off + ln].decode("utf-8")
            off += ln
            maps[key], off = _model_from_bytes(raw, off, label)
        picks = []
        for _ in range(2):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            picks.append(raw[off : off + ln].decode("utf-8"))
            off += ln
        return LsModel(maps, picks[0], picks[1]), off
    if kind == _KIND_CODES["ns"]:
        img_std, off = _unpack_std(raw, off)
        txt_std, off = _unpack_std(raw, off)
        (alpha,) = struct.unpack_from("<d", raw, off)
        off += 8
        a, off = _unpack_matrix(raw, off)
        b, off = _unpack_matrix(raw, off)
        return NsModel(a, b, alpha, img_std, txt_std), off
    raise FormatError(f"{label}: unknown model kind {kind}")


def load_model(path):
    return model_from_bytes(open(path, "rb").read(), str(path))
