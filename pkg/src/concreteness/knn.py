"""Exact and approximate k-nearest-neighbor search over feature space.

Exact mode is a blocked brute-force scan and doubles as the oracle for the
approximate mode: a forest of random hyperplane-split trees searched best-first
through a shared priority frontier. The search walks more leaves than the
candidate budget, tallies how many trees co-locate each row with the query
(weighted toward early, high-priority leaves), keeps the best ``search_budget``
rows by that evidence, and re-ranks only those with the true metric. Cosine is
implemented as euclidean distance over L2-normalized copies. Ties always break
toward the lower row index.
"""

from __future__ import annotations

import io
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import FeatureMatrix, FormatError
from .util import atomic_write_bytes, derived_rng, resolve_threads

INDEX_MAGIC = b"VCANN1"

LEAF_SIZE = 32

# leaf entries inspected per query, as a multiple of search_budget
SCAN_FACTOR = 48

# early leaves carry more evidence weight: 1 + DECAY at the start, 1 at the cap
DECAY = 0.5

# traversal frontier entries popped per round (margins batch into one matmul)
_ROUND = 256

# exact top-k switches from full stable argsort to argpartition above this n
_FULL_SORT_LIMIT = 4096

_METRICS = ("cosine", "euclidean")
_MODES = ("exact", "approximate")

_HEADER = "<BBBBIIIQII"
_HEADER_SIZE = struct.calcsize(_HEADER)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 50
    metric: str = "cosine"
    mode: str = "exact"
    num_trees: int = 32
    search_budget: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS}, got {self.metric!r}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.num_trees < 1:
            raise ValueError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.search_budget < self.k:
            raise ValueError(f"search_budget ({self.search_budget}) must be >= k ({self.k})")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class NeighborLists:
    """Per-row neighbor ids, ordered by increasing distance."""

    k: int
    lists: np.ndarray

    def __post_init__(self):
        lists = np.asarray(self.lists, dtype=np.int64)
        object.__setattr__(self, "lists", lists)
        if lists.ndim != 2 or lists.shape[1] != self.k:
            raise ValueError(f"lists shape {lists.shape} does not match k={self.k}")

    @property
    def n(self) -> int:
        return self.lists.shape[0]


class _Forest:
    """All trees flattened into shared node arrays.

    Node i is internal when children[i, 0] >= 0, with splitting plane
    normals[i]·x + offsets[i]; negative margin goes to children[i, 0].
    A leaf's rows are items[item_start[i]:item_end[i]], sorted ascending.
    Child ids and roots are absolute, so any batch of nodes from any mix of
    trees can be processed with one gather.
    """

    __slots__ = ("roots", "children", "normals", "offsets", "item_start", "item_end", "items")

    def __init__(self, roots, children, normals, offsets, item_start, item_end, items):
        self.roots = roots
        self.children = children
        self.normals = normals
        self.offsets = offsets
        self.item_start = item_start
        self.item_end = item_end
        self.items = items


class _TreeParts:
    """One tree's arrays with local node ids, produced by _grow_tree."""

    __slots__ = ("children", "normals", "offsets", "leaf_rows")

    def __init__(self, children, normals, offsets, leaf_rows):
        self.children = children
        self.normals = normals
        self.offsets = offsets
        self.leaf_rows = leaf_rows  # per-node row array, empty for internals


def _grow_tree(work: np.ndarray, rng: np.random.Generator) -> _TreeParts:
    children: list[list[int]] = []
    normals: list[np.ndarray] = []
    offsets: list[float] = []
    leaf_rows: list[np.ndarray] = []
    d = work.shape[1]

    def new_node():
        children.append([-1, -1])
        normals.append(np.zeros(d))
        offsets.append(0.0)
        leaf_rows.append(np.empty(0, dtype=np.int64))
        return len(children) - 1

    root = new_node()
    stack = [(root, np.arange(work.shape[0], dtype=np.int64))]
    while stack:
        node, rows = stack.pop()
        if rows.size <= LEAF_SIZE:
            leaf_rows[node] = np.sort(rows)
            continue
        split = None
        for _ in range(3):
            a, b = rng.choice(rows.size, size=2, replace=False)
            normal = work[rows[a]] - work[rows[b]]
            norm = np.linalg.norm(normal)
            if norm == 0.0:
                continue
            normal = normal / norm
            offset = -float(normal @ ((work[rows[a]] + work[rows[b]]) / 2.0))
            margins = work[rows] @ normal + offset
            left = margins < 0
            if left.any() and not left.all():
                split = (normal, offset, left)
                break
        if split is None:
            # degenerate region (duplicates); fall back to a random halving
            perm = rng.permutation(rows.size)
            left = np.zeros(rows.size, dtype=bool)
            left[perm[: rows.size // 2]] = True
            split = (np.zeros(d), 0.0, left)
        normal, offset, left = split
        normals[node] = np.asarray(normal)
        offsets[node] = offset
        lo, hi = new_node(), new_node()
        children[node] = [lo, hi]
        stack.append((lo, rows[left]))
        stack.append((hi, rows[~left]))
    return _TreeParts(
        np.asarray(children, dtype=np.int64),
        np.asarray(normals, dtype=np.float64),
        np.asarray(offsets, dtype=np.float64),
        leaf_rows,
    )


def _assemble_forest(parts: "list[_TreeParts]") -> _Forest:
    roots = []
    node_base = 0
    children_all, normals_all, offsets_all = [], [], []
    starts_all, ends_all, items_all = [], [], []
    item_base = 0
    for tree in parts:
        m = tree.children.shape[0]
        roots.append(node_base)
        kids = tree.children.copy()
        internal = kids[:, 0] >= 0
        kids[internal] += node_base
        children_all.append(kids)
        normals_all.append(tree.normals)
        offsets_all.append(tree.offsets)
        starts = np.zeros(m, dtype=np.int64)
        ends = np.zeros(m, dtype=np.int64)
        for node in range(m):
            rows = tree.leaf_rows[node]
            starts[node] = item_base
            item_base += rows.size
            ends[node] = item_base
            if rows.size:
                items_all.append(rows)
        starts_all.append(starts)
        ends_all.append(ends)
        node_base += m
    return _Forest(
        np.asarray(roots, dtype=np.int64),
        np.concatenate(children_all),
        np.concatenate(normals_all),
        np.concatenate(offsets_all),
        np.concatenate(starts_all),
        np.concatenate(ends_all),
        np.concatenate(items_all) if items_all else np.empty(0, dtype=np.int64),
    )


class Index:
    """Immutable search structure over one FeatureMatrix."""

    def __init__(self, features: FeatureMatrix, config: KnnConfig, forest: "_Forest | None"):
        self.features = features
        self.config = config
        self._forest = forest
        if config.metric == "cosine":
            norms = np.sqrt((features.data * features.data).sum(axis=1))
            norms[norms == 0.0] = 1.0
            self._work = features.data / norms[:, None]
        else:
            self._work = features.data
        self._sqnorms = np.einsum("ij,ij->i", self._work, self._work)

    @property
    def n(self) -> int:
        return self.features.n

    # -- search ------------------------------------------------------------

    def query(self, vector: np.ndarray, k: "int | None" = None) -> np.ndarray:
        """Ranked row ids nearest to an external vector; no self-exclusion."""
        k = self.config.k if k is None else k
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] != self.features.d:
            raise ValueError(f"query has dimension {vector.shape[0]}, index has {self.features.d}")
        if not 1 <= k <= self.n:
            raise ValueError(f"k={k} out of range for n={self.n}")
        q = vector
        if self.config.metric == "cosine":
            norm = np.linalg.norm(q)
            if norm > 0.0:
                q = q / norm
        if self._forest is None:
            return _smallest(self._direct_dists(q), k)
        candidates = self._forest_candidates(q, max(self.config.search_budget, k))
        dists = self._sq_dists(q[None, :], candidates)
        order = np.lexsort((candidates, dists[0]))[:k]
        return candidates[order]

    def all_neighbors(
        self,
        k: "int | None" = None,
        include_self: bool = False,
        threads: "int | None" = None,
    ) -> NeighborLists:
        """Neighbor lists for every stored row.

        The stored row itself is excluded from its own list unless
        ``include_self`` is set. ``k`` overrides the configured value, e.g.
        to reuse one index for a neighborhood-size sweep.
        """
        k = self.config.k if k is None else k
        limit = self.n if include_self else self.n - 1
        if not 1 <= k <= limit:
            raise ValueError(f"k={k} out of range for n={self.n} (self excluded: {not include_self})")
        out = np.empty((self.n, k), dtype=np.int64)
        threads = resolve_threads(threads)
        if self._forest is None:
            block = 256

            def run(start, end):
                for v in range(start, end):
                    out[v] = _smallest(self._exact_row(v, include_self), k)

        else:
            block = 64
            budget = max(self.config.search_budget, k + 1)

            def run(start, end):
                for v in range(start, end):
                    candidates = self._forest_candidates(self._work[v], budget)
                    if not include_self:
                        candidates = candidates[candidates != v]
                    dists = self._sq_dists(self._work[v : v + 1], candidates)[0]
                    order = np.lexsort((candidates, dists))[:k]
                    got = candidates[order]
                    if got.size < k:
                        # budget exhausted below k (tiny leaves); back-fill exactly
                        got = _smallest(self._exact_row(v, include_self), k)
                    out[v] = got

        _run_blocks(self.n, block, run, threads)
        return NeighborLists(k=k, lists=out)

    def _direct_dists(self, q: np.ndarray) -> np.ndarray:
        """Distances to every stored row by literal difference; this is the
        same arithmetic as an O(n^2) scan, so exact ties stay exact."""
        diff = self._work - q
        return np.sqrt((diff * diff).sum(axis=1))

    def _exact_row(self, v: int, include_self: bool) -> np.ndarray:
        dists = self._direct_dists(self._work[v])
        if not include_self:
            dists[v] = np.inf
        return dists

    def _sq_dists(self, q: np.ndarray, columns: "np.ndarray | None" = None) -> np.ndarray:
        if columns is None:
            x, sq = self._work, self._sqnorms
        else:
            x, sq = self._work[columns], self._sqnorms[columns]
        out = np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * (q @ x.T) + sq[None, :]
        np.maximum(out, 0.0, out=out)
        return out

    def _forest_candidates(self, q: np.ndarray, budget: int) -> np.ndarray:
        """Rows worth scoring exactly, best evidence first, capped at budget.

        Best-first traversal over all trees at once: a frontier entry's
        priority is the smallest margin along its path (+inf at the roots),
        and each round pops the top _ROUND entries so their hyperplane
        margins batch into one matmul. Popped leaves add weighted evidence
        for their rows until SCAN_FACTOR * budget leaf entries have been
        seen; rows are then ranked by total evidence (visit order breaks
        ties) and the top budget go on to exact scoring.
        """
        forest = self._forest
        n = self.n
        big = np.iinfo(np.int64).max
        limit = SCAN_FACTOR * budget
        tally = np.zeros(n, dtype=np.float64)
        first_seen = np.full(n, big, dtype=np.int64)
        stamp = 0
        raw = 0

        # frontier: append-only arrays; consumed entries get priority -inf,
        # which real entries never take (margins over finite data are finite)
        cap = 4096
        pri = np.full(cap, -np.inf, dtype=np.float64)
        nodes = np.empty(cap, dtype=np.int64)
        born = np.empty(cap, dtype=np.int64)
        size = forest.roots.size
        pri[:size] = np.inf
        nodes[:size] = forest.roots
        born[:size] = np.arange(size)
        live = size

        while live > 0 and raw < limit:
            take = min(_ROUND, live)
            if take < size:
                sel = np.argpartition(-pri[:size], take - 1)[:take]
            else:
                sel = np.arange(size)
            # pop in priority order, push order breaking ties
            sel = sel[np.lexsort((born[sel], -pri[sel]))]
            batch = nodes[sel]
            batch_pri = pri[sel]
            pri[sel] = -np.inf
            live -= take

            is_leaf = forest.children[batch, 0] < 0
            leaves = batch[is_leaf]
            if leaves.size:
                rows = np.concatenate(
                    [forest.items[forest.item_start[v] : forest.item_end[v]] for v in leaves]
                )
                weight = 1.0 + DECAY * (1.0 - raw / limit)
                tally += weight * np.bincount(rows, minlength=n)
                mask = first_seen[rows] == big
                fresh = rows[mask]
                # reversed assignment so the first occurrence of a row wins
                first_seen[fresh[::-1]] = (stamp + np.arange(fresh.size))[::-1]
                stamp += fresh.size
                raw += rows.size

            inner = batch[~is_leaf]
            if inner.size:
                margins = forest.normals[inner] @ q + forest.offsets[inner]
                parent = batch_pri[~is_leaf]
                new_pri = np.concatenate(
                    [np.minimum(parent, -margins), np.minimum(parent, margins)]
                )
                new_nodes = np.concatenate([forest.children[inner, 0], forest.children[inner, 1]])
                need = size + new_pri.size
                if need > cap:
                    cap = max(2 * cap, need)
                    grown = np.full(cap, -np.inf, dtype=np.float64)
                    grown[: pri.size] = pri
                    pri = grown
                    nodes = np.concatenate([nodes, np.empty(cap - nodes.size, dtype=np.int64)])
                    born = np.concatenate([born, np.empty(cap - born.size, dtype=np.int64)])
                pri[size:need] = new_pri
                nodes[size:need] = new_nodes
                born[size:need] = np.arange(size, need)
                live += new_pri.size
                size = need

        cand = np.flatnonzero(tally > 0.0)
        if cand.size <= budget:
            return cand
        order = np.lexsort((first_seen[cand], -tally[cand]))
        return cand[order[:budget]]

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    def to_bytes(self) -> bytes:
        cfg = self.config
        out = io.BytesIO()
        out.write(INDEX_MAGIC)
        out.write(
            struct.pack(
                _HEADER,
                1,
                _METRICS.index(cfg.metric),
                _MODES.index(cfg.mode),
                0,
                cfg.k,
                cfg.num_trees,
                cfg.search_budget,
                cfg.seed,
                self.features.n,
                self.features.d,
            )
        )
        out.write(np.ascontiguousarray(self.features.data, dtype="<f8").tobytes())
        for image_id in self.features.ids:
            enc = image_id.encode("utf-8")
            out.write(struct.pack("<H", len(enc)))
            out.write(enc)
        forest = self._forest
        if forest is not None:
            m = forest.children.shape[0]
            out.write(struct.pack("<QQ", m, forest.items.size))
            out.write(np.ascontiguousarray(forest.roots, dtype="<i8").tobytes())
            out.write(np.ascontiguousarray(forest.children, dtype="<i8").tobytes())
            out.write(np.ascontiguousarray(forest.normals, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(forest.offsets, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(forest.item_start, dtype="<i8").tobytes())
            out.write(np.ascontiguousarray(forest.item_end, dtype="<i8").tobytes())
            out.write(np.ascontiguousarray(forest.items, dtype="<i8").tobytes())
        return out.getvalue()

    @classmethod
    def load(cls, path) -> "Index":
        raw = open(path, "rb").read()
        if len(raw) < len(INDEX_MAGIC) + _HEADER_SIZE or raw[: len(INDEX_MAGIC)] != INDEX_MAGIC:
            raise FormatError(f"{path}: not a {INDEX_MAGIC.decode()} index file")
        off = len(INDEX_MAGIC)
        version, metric_code, mode_code, _, k, trees_n, budget, seed, n, d = struct.unpack_from(
            _HEADER, raw, off
        )
        off += _HEADER_SIZE
        if version != 1:
            raise FormatError(f"{path}: unsupported index version {version}")
        if metric_code >= len(_METRICS) or mode_code >= len(_MODES):
            raise FormatError(f"{path}: corrupt header")
        config = KnnConfig(
            k=k,
            metric=_METRICS[metric_code],
            mode=_MODES[mode_code],
            num_trees=trees_n,
            search_budget=budget,
            seed=seed,
        )
        need = n * d * 8
        if len(raw) < off + need:
            raise FormatError(f"{path}: truncated feature block")
        data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
        off += need
        ids = []
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            ids.append(raw[off : off + ln].decode("utf-8"))
            off += ln
        features = FeatureMatrix(data, tuple(ids))
        forest = None
        if config.mode == "approximate":
            if len(raw) < off + 16:
                raise FormatError(f"{path}: truncated forest block")
            m, total_items = struct.unpack_from("<QQ", raw, off)
            off += 16

            def grab(dtype, count, shape=None):
                nonlocal off
                width = np.dtype(dtype).itemsize * count
                if len(raw) < off + width:
                    raise FormatError(f"{path}: truncated forest block")
                arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).copy()
                off += width
                return arr.reshape(shape) if shape else arr

            roots = grab("<i8", trees_n)
            children = grab("<i8", 2 * m, (m, 2))
            normals = grab("<f8", m * d, (m, d))
            offsets = grab("<f8", m)
            item_start = grab("<i8", m)
            item_end = grab("<i8", m)
            items = grab("<i8", total_items)
            forest = _Forest(roots, children, normals, offsets, item_start, item_end, items)
        if off != len(raw):
            raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
        return cls(features, config, forest)


def build_index(
    features: FeatureMatrix, config: KnnConfig, threads: "int | None" = None
) -> Index:
    """Build a search index; approximate mode is deterministic given the seed."""
    if config.k >= features.n:
        raise ValueError(f"k={config.k} must be < n={features.n}")
    if config.mode == "exact":
        return Index(features, config, None)
    index = Index(features, config, None)
    work = index._work
    threads = resolve_threads(threads)

    def grow(t: int) -> _TreeParts:
        return _grow_tree(work, derived_rng(config.seed, "tree", str(t)))

    if threads <= 1:
        parts = [grow(t) for t in range(config.num_trees)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(grow, range(config.num_trees)))
    index._forest = _assemble_forest(parts)
    return index


def exact_config(config: KnnConfig) -> KnnConfig:
    return replace(config, mode="exact")


def _smallest(dists: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values, ties toward the lower index.

    Small inputs take a full stable argsort. Large ones shortlist via
    argpartition first; a tie group wider than the shortlist slack could in
    principle admit the wrong tied index there, but that needs 32+ exactly
    coincident distances at the cutoff, which real-valued features do not
    produce.
    """
    n = dists.shape[0]
    if n <= _FULL_SORT_LIMIT:
        return np.argsort(dists, kind="stable")[:k].astype(np.int64)
    m = min(n, k + 32)
    part = np.argpartition(dists, m - 1)[:m]
    order = np.lexsort((part, dists[part]))[:k]
    return part[order].astype(np.int64)


def _run_blocks(n_items: int, block: int, fn, threads: int) -> None:
    """Apply fn(start, end) over fixed-size spans; span layout is independent
    of the thread count so results land identically in either mode."""
    spans = [(s, min(s + block, n_items)) for s in range(0, n_items, block)]
    if threads <= 1 or len(spans) <= 1:
        for start, end in spans:
            fn(start, end)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for _ in pool.map(lambda span: fn(*span), spans):
            pass
