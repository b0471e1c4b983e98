"""Retrieval and clustering evaluation: Recall@k, NMI, pairwise F1.

Clustering for NMI/F1 uses seeded k-means with k equal to the number of test
classes.  NMI normalizes mutual information by the geometric mean of the two
entropies; F1 is the pairwise variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SeededRng, pairwise_distances
from .errors import KTooLargeError, LengthMismatchError


@dataclass
class EvalReport:
    recall_at: dict  # k -> fraction in [0, 1]
    nmi: float
    f1: float
    n_queries: int

    def to_json_dict(self, step=None) -> dict:
        out = {}
        if step is not None:
            out["step"] = step
        for k in sorted(self.recall_at):
            out[f"recall@{k}"] = self.recall_at[k]
        out["nmi"] = self.nmi
        out["f1"] = self.f1
        out["n_queries"] = self.n_queries
        return out


def recall_at_k(embeddings, labels, ks) -> dict:
    """Leave-one-out retrieval hit rate for each k.

    Every point queries all others ranked by l2 distance (ties to the lower
    index); a hit means some same-label point appears in the top k.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = emb.shape[0]
    if labels.shape[0] != n:
        raise LengthMismatchError("labels length != embedding count")
    ks = sorted(int(k) for k in ks)
    if n < 2 or ks[-1] >= n:
        raise KTooLargeError(f"max k {ks[-1]} needs at least {ks[-1] + 1} points, have {n}")
    dist = pairwise_distances(emb)
    np.fill_diagonal(dist, np.inf)  # self is never a neighbor
    hits = {k: 0 for k in ks}
    max_k = ks[-1]
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")[:max_k]
        same = labels[order] == labels[i]
        for k in ks:
            if same[:k].any():
                hits[k] += 1
    return {k: hits[k] / n for k in ks}


def kmeans(embeddings, k: int, rng: SeededRng, max_iter: int = 100) -> np.ndarray:
    """Lloyd's algorithm from k-means++ style seeding; deterministic given rng.

    Stops at an assignment fixpoint or after max_iter sweeps.  An emptied
    cluster keeps its previous centroid.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if k > n:
        raise KTooLargeError(f"k={k} exceeds {n} points")
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    for j in range(1, k):
        d2 = np.min(
            np.sum((x[:, None, :] - centers[None, :j, :]) ** 2, axis=-1), axis=1
        )
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
        centers[j] = x[rng.choice(np.arange(n), p=probs)]

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        new_assign = np.argmin(d2, axis=1)  # ties to the lower centroid index
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return assign


def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise LengthMismatchError("assignment and labels differ in length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ua), len(ub)), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts):
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def nmi(assignment, labels) -> float:
    """Mutual information normalized by the geometric mean of the entropies
    (natural logs); 0.0 when either partition is degenerate."""
    table = _contingency(assignment, labels)
    n = table.sum()
    if n == 0:
        raise LengthMismatchError("empty inputs")
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    pij = table / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pij / (pa[:, None] * pb[None, :])
        terms = np.where(pij > 0, pij * np.log(np.where(pij > 0, ratio, 1.0)), 0.0)
    info = float(terms.sum())
    return float(min(max(info / np.sqrt(h_a * h_b), 0.0), 1.0))


def f1_score(assignment, labels) -> float:
    """Pairwise F1: precision/recall of same-cluster pairs against
    same-label pairs; 0.0 if either denominator vanishes."""
    table = _contingency(assignment, labels)

    def pairs(counts):
        return float((counts * (counts - 1) / 2).sum())

    same_both = pairs(table.ravel())
    same_cluster = pairs(table.sum(axis=1))
    same_label = pairs(table.sum(axis=0))
    if same_cluster == 0 or same_label == 0:
        return 0.0
    precision = same_both / same_cluster
    recall = same_both / same_label
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def evaluate_embeddings(embeddings, labels, ks, rng: SeededRng) -> EvalReport:
    """Full protocol: retrieval recall plus k-means clustering scored by
    NMI and pairwise F1, with k = number of distinct labels."""
    labels = np.asarray(labels)
    n_classes = len(np.unique(labels))
    recall = recall_at_k(embeddings, labels, ks)
    assign = kmeans(embeddings, n_classes, rng)
    return EvalReport(
        recall_at=recall,
        nmi=nmi(assign, labels),
        f1=f1_score(assign, labels),
        n_queries=len(labels),
    )
