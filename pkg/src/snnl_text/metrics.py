"""Internal (DBI, silhouette, CHS) and external (NMI, ARI, ACC) clustering
criteria, classification accuracy/F1, and multi-seed report aggregation."""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ._validation import as_float_matrix, check_same_length

MAX_PERMUTATION_CLUSTERS = 8
SILHOUETTE_BLOCK = 1024


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    classes: np.ndarray
    clusters: np.ndarray

    @classmethod
    def from_labels(cls, y, c):
        y, c = check_same_length(y, c)
        classes, yi = np.unique(y, return_inverse=True)
        clusters, ci = np.unique(c, return_inverse=True)
        counts = np.zeros((classes.size, clusters.size), dtype=np.int64)
        np.add.at(counts, (yi, ci), 1)
        return cls(counts, classes, clusters)

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)

    @property
    def col_sums(self):
        return self.counts.sum(axis=0)


def _clusters(X, assignments, min_clusters=2):
    X = as_float_matrix(X)
    a = np.asarray(assignments)
    X, a = check_same_length(X, a, ("X", "assignments"))
    labels, idx = np.unique(a, return_inverse=True)
    if labels.size < min_clusters:
        raise ValueError(f"need at least {min_clusters} non-empty clusters, got {labels.size}")
    return X, idx, labels.size


def davies_bouldin(X, assignments):
    """Mean over clusters of the worst ``(s_i + s_j) / d_ij`` ratio; lower is better."""
    X, idx, k = _clusters(X, assignments)
    centroids = np.array([X[idx == q].mean(axis=0) for q in range(k)])
    spread = np.array([
        np.linalg.norm(X[idx == q] - centroids[q], axis=1).mean() for q in range(k)
    ])
    dist = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    ii, jj = np.triu_indices(k, 1)
    coincident = dist[ii, jj] == 0
    if np.any(coincident):
        p = np.flatnonzero(coincident)[0]
        raise ValueError(f"clusters {ii[p]} and {jj[p]} have coincident centroids")
    np.fill_diagonal(dist, np.inf)
    ratios = (spread[:, None] + spread[None, :]) / dist
    return float(ratios.max(axis=1).mean())


def silhouette(X, assignments):
    """Mean silhouette with Euclidean distances; singleton clusters score 0."""
    X, idx, k = _clusters(X, assignments)
    n = X.shape[0]
    sizes = np.bincount(idx, minlength=k)
    # per-point summed distance to every cluster, in row blocks to bound memory
    sums = np.zeros((n, k))
    for start in range(0, n, SILHOUETTE_BLOCK):
        D = cdist(X[start : start + SILHOUETTE_BLOCK], X)
        for q in range(k):
            sums[start : start + SILHOUETTE_BLOCK, q] = D[:, idx == q].sum(axis=1)
    own = sizes[idx]
    a = np.where(own > 1, sums[np.arange(n), idx] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), idx] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def calinski_harabasz(X, assignments):
    """``Tr(B) / Tr(W) * (N - k) / (k - 1)``; higher is better."""
    X, idx, k = _clusters(X, assignments)
    n = X.shape[0]
    if k >= n:
        raise ValueError(f"need k < n, got k={k}, n={n}")
    center = X.mean(axis=0)
    between = within = 0.0
    for q in range(k):
        members = X[idx == q]
        cq = members.mean(axis=0)
        between += members.shape[0] * float(((cq - center) ** 2).sum())
        within += float(((members - cq) ** 2).sum())
    if within == 0:
        raise ValueError("within-cluster dispersion is zero")
    return between / within * (n - k) / (k - 1)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(y, c):
    """``2 I(y, c) / (H(y) + H(c))`` with natural logs; 1 for two trivial partitions."""
    table = ContingencyTable.from_labels(y, c)
    n = table.n
    if n == 0:
        raise ValueError("nmi needs at least one sample")
    hy = _entropy(table.row_sums, n)
    hc = _entropy(table.col_sums, n)
    if hy + hc == 0:
        return 1.0
    nz = table.counts > 0
    joint = table.counts[nz] / n
    outer = np.outer(table.row_sums, table.col_sums)[nz] / (n * n)
    mi = float((joint * np.log(joint / outer)).sum())
    return float(min(max(2 * mi / (hy + hc), 0.0), 1.0))


def _comb2(x):
    return x * (x - 1) / 2.0


def adjusted_rand(y, c):
    """Pair-counting adjusted Rand index (contingency-table closed form)."""
    table = ContingencyTable.from_labels(y, c)
    n = table.n
    if n < 2:
        raise ValueError("adjusted_rand needs at least two samples")
    index = _comb2(table.counts.astype(np.float64)).sum()
    rows = _comb2(table.row_sums.astype(np.float64)).sum()
    cols = _comb2(table.col_sums.astype(np.float64)).sum()
    expected = rows * cols / _comb2(float(n))
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        # both partitions trivial in the same way
        return 1.0
    return float((index - expected) / (maximum - expected))


def clustering_accuracy(y, c, hungarian=False):
    """Best one-to-one cluster-to-class match, as a fraction of points.

    Exhaustive over permutations for up to 8 clusters; larger problems need
    ``hungarian=True``.
    """
    table = ContingencyTable.from_labels(y, c)
    counts = table.counts
    n = table.n
    if n == 0:
        raise ValueError("clustering_accuracy needs at least one sample")
    n_classes, n_clusters = counts.shape
    if hungarian:
        rows, cols = linear_sum_assignment(counts, maximize=True)
        return float(counts[rows, cols].sum() / n)
    if n_clusters > MAX_PERMUTATION_CLUSTERS or n_classes > MAX_PERMUTATION_CLUSTERS:
        raise ValueError(
            f"{max(n_classes, n_clusters)} groups exceed exhaustive matching limit "
            f"{MAX_PERMUTATION_CLUSTERS}; pass hungarian=True"
        )
    size = max(n_classes, n_clusters)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:n_classes, :n_clusters] = counts
    cols = np.arange(size)
    best = max(int(padded[perm, cols].sum()) for perm in itertools.permutations(range(size)))
    return best / n


def classification_metrics(y_true, y_pred, k=None):
    """Return ``(accuracy, weighted F1, macro F1)``."""
    y_true, y_pred = check_same_length(y_true, y_pred, ("y_true", "y_pred"))
    y_true = y_true.astype(np.int64)
    y_pred = y_pred.astype(np.int64)
    if k is None:
        k = int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    accuracy = float((y_true == y_pred).mean()) if y_true.size else 0.0
    f1 = np.zeros(k)
    support = np.bincount(y_true, minlength=k)
    for cls in range(k):
        tp = np.sum((y_pred == cls) & (y_true == cls))
        predicted = np.sum(y_pred == cls)
        precision = tp / predicted if predicted else 0.0
        recall = tp / support[cls] if support[cls] else 0.0
        f1[cls] = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    weighted = float((f1 * support).sum() / support.sum()) if support.sum() else 0.0
    return accuracy, weighted, float(f1.mean())


INTERNAL = ("dbi", "sil", "chs")
EXTERNAL = ("nmi", "ari", "acc")
# lower is better for DBI, so its table column reports the minimum
LOWER_IS_BETTER = {"dbi"}


def cluster_report_row(X, labels, assignments):
    """All six clustering criteria for one run; undefined values become None."""
    row = {}
    for name, fn in (("dbi", davies_bouldin), ("sil", silhouette),
                     ("chs", calinski_harabasz)):
        try:
            row[name] = fn(X, assignments)
        except ValueError:
            row[name] = None
    row["nmi"] = nmi(labels, assignments)
    row["ari"] = adjusted_rand(labels, assignments)
    n_groups = max(np.unique(labels).size, np.unique(assignments).size)
    row["acc"] = clustering_accuracy(
        labels, assignments, hungarian=n_groups > MAX_PERMUTATION_CLUSTERS)
    return row


def aggregate(per_seed):
    """AVG/MAX/MIN over seeds for every metric in ``per_seed`` (seed -> dict)."""
    names = sorted({name for row in per_seed.values() for name in row})
    out = {}
    for name in names:
        values = [row[name] for row in per_seed.values() if row.get(name) is not None]
        if not values:
            out[name] = {"avg": None, "max": None, "min": None}
            continue
        out[name] = {
            "avg": math.fsum(values) / len(values),
            "max": max(values),
            "min": min(values),
        }
    return out
