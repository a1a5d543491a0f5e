"""Slow, independent reference implementations used to cross-check the package.

Everything here is written in the most literal way possible (per-pair loops,
naive gradient descent) so that agreement with the fast library code is
meaningful evidence rather than a shared-bug tautology.
"""

import numpy as np


def brute_force_neighbors(features, k, metric="cosine", include_self=False):
    """All-pairs k nearest neighbors by direct difference, stable tie order."""
    x = np.asarray(features, dtype=np.float64)
    if metric == "cosine":
        norms = np.sqrt((x * x).sum(axis=1))
        norms[norms == 0.0] = 1.0
        x = x / norms[:, None]
    n = x.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        diff = x - x[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        if not include_self:
            dist[i] = np.inf
        order = np.argsort(dist, kind="stable")
        out[i] = order[:k]
    return out


def brute_force_query(features, queries, k, metric="cosine"):
    x = np.asarray(features, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    if metric == "cosine":
        nx = np.sqrt((x * x).sum(axis=1))
        nx[nx == 0.0] = 1.0
        x = x / nx[:, None]
        nq = np.sqrt((q * q).sum(axis=1))
        nq[nq == 0.0] = 1.0
        q = q / nq[:, None]
    out = np.empty((q.shape[0], k), dtype=np.int64)
    for i in range(q.shape[0]):
        diff = x - q[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        out[i] = np.argsort(dist, kind="stable")[:k]
    return out


def concreteness_by_counting(neighbor_lists, postings, n, k):
    """Score each word by literal set intersection over its carriers."""
    scores = {}
    mni = {}
    for word, rows in postings.items():
        carriers = set(int(r) for r in rows)
        total = 0
        for r in carriers:
            overlap = sum(1 for j in neighbor_lists[r] if int(j) in carriers)
            total += overlap
        mean_overlap = total / len(carriers)
        expected = k * len(carriers) / n
        scores[word] = mean_overlap / expected
        mni[word] = mean_overlap
    return scores, mni


def topic_score_by_sums(neighbor_lists, weights, k):
    """Continuous-affinity concreteness via the explicit double sum."""
    w = np.asarray(weights, dtype=np.float64)
    n, t = w.shape
    out = np.empty(t, dtype=np.float64)
    for topic in range(t):
        col = w[:, topic]
        num = 0.0
        for v in range(n):
            if col[v] == 0.0:
                continue
            s = 0.0
            for j in neighbor_lists[v]:
                s += col[int(j)]
            num += col[v] * s
        mass = col.sum()
        out[topic] = (n / k) * num / (mass * mass)
    return out


def ridge_by_gradient_descent(x, y, lam, steps=20000, lr=None):
    """Minimize ||XW^T - Y||^2 + lam ||W||^2 by plain gradient descent.

    Returns W with shape (target_dim, source_dim), matching the library
    convention. Slow on purpose; keep dimensions tiny in tests.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d_in = x.shape
    d_out = y.shape[1]
    w = np.zeros((d_out, d_in))
    if lr is None:
        # safe step for the quadratic: 1 / largest eigenvalue of 2(X^TX + lam I)
        gram = x.T @ x
        top = np.linalg.eigvalsh(gram).max()
        lr = 1.0 / (2.0 * (top + lam) + 1e-9)
    for _ in range(steps):
        resid = x @ w.T - y
        grad = 2.0 * (resid.T @ x) + 2.0 * lam * w
        w = w - lr * grad
    return w


def spearman_by_definition(a, b):
    """Rank correlation as plain Pearson over average ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def avg_ranks(v):
        order = np.argsort(v, kind="stable")
        ranks = np.empty(len(v), dtype=np.float64)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return ranks

    ra, rb = avg_ranks(a), avg_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    return float((ra * rb).sum() / denom)


def retrieval_ranks_by_loops(scores):
    """Pessimistic 1-based rank of the diagonal, one query at a time."""
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        own = s[i, i]
        ranks[i] = sum(1 for j in range(n) if s[i, j] >= own)
    return ranks
