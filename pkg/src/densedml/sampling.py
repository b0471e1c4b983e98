"""Batch construction and embedding-pair/triplet sampling strategies.

Samplers see only a distance matrix and labels; nothing marks an embedding as
real or produced, so both kinds are sampled on equal footing.  The optional
`anchor_indices` restricts which rows may serve as anchors (used to keep
produced embeddings out of the anchor role when configured), but candidates
for positives/negatives always span the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SeededRng
from .data import Dataset
from .errors import ConfigError, NotEnoughClassesError, NoValidTripletError, ShapeMismatchError
from .losses import PairSet, TripletSet

SAMPLER_KINDS = ("random", "semihard", "softhard", "distance")


@dataclass
class BatchSpec:
    """P classes per batch, M samples per class."""

    classes_per_batch: int = 8
    samples_per_class: int = 2

    def validate(self):
        if self.classes_per_batch < 2 or self.samples_per_class < 2:
            raise ConfigError(
                "batch needs >= 2 classes and >= 2 samples per class, got "
                f"P={self.classes_per_batch}, M={self.samples_per_class}"
            )

    @property
    def size(self) -> int:
        return self.classes_per_batch * self.samples_per_class


def sample_batch(dataset: Dataset, spec: BatchSpec, rng: SeededRng):
    """Class-contiguous batch of P distinct train classes with M points each.

    Points are drawn without replacement unless a class has fewer than M
    members, in which case draws are with replacement.
    """
    train = list(dataset.train_classes)
    p, m = spec.classes_per_batch, spec.samples_per_class
    if len(train) < p:
        raise NotEnoughClassesError(f"need {p} train classes, have {len(train)}")
    class_pick = [train[i] for i in rng.permutation(len(train))[:p]]
    feats, labels = [], []
    for c in class_pick:
        members = dataset.class_index[c]
        if len(members) >= m:
            chosen = members[rng.permutation(len(members))[:m]]
        else:
            chosen = members[rng.integers(len(members), size=m)]
        feats.append(dataset.features[chosen])
        labels.extend([c] * m)
    return np.concatenate(feats, axis=0), np.asarray(labels, dtype=np.int64)


def _class_views(labels):
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    pos_lists = [np.flatnonzero(row) for row in same]
    neg_lists = [np.flatnonzero(row) for row in diff]
    return pos_lists, neg_lists


def _check_square(dist, labels):
    dist = np.asarray(dist)
    n = len(labels)
    if dist.shape != (n, n):
        raise ShapeMismatchError(f"distance matrix {dist.shape} vs {n} labels")
    return dist


def sample_random_triplets(labels, count: int, rng: SeededRng, anchor_indices=None) -> TripletSet:
    """Uniform anchors, uniform same-label positives, uniform other-label negatives."""
    labels = np.asarray(labels)
    pos_lists, neg_lists = _class_views(labels)
    valid = _eligible_anchors(pos_lists, neg_lists, len(labels), anchor_indices)
    if not valid:
        raise NoValidTripletError("no anchor has both a positive and a negative")
    anchors = np.empty(count, dtype=np.int64)
    positives = np.empty(count, dtype=np.int64)
    negatives = np.empty(count, dtype=np.int64)
    for t in range(count):
        a = valid[int(rng.integers(len(valid)))]
        anchors[t] = a
        positives[t] = pos_lists[a][int(rng.integers(len(pos_lists[a])))]
        negatives[t] = neg_lists[a][int(rng.integers(len(neg_lists[a])))]
    return TripletSet(anchors, positives, negatives)


def _eligible_anchors(pos_lists, neg_lists, n, anchor_indices):
    pool = range(n) if anchor_indices is None else anchor_indices
    return [i for i in pool if len(pos_lists[i]) and len(neg_lists[i])]


def sample_semihard_triplets(
    dist, labels, margin: float, rng: SeededRng, anchor_indices=None
) -> TripletSet:
    """One triplet per eligible anchor with the semi-hard window rule.

    Negative selection: uniform inside the open window
    (D_ap, D_ap + margin); if the window is empty, the hardest negative
    strictly farther than the positive; if none is farther, the least
    violating negative (largest D_an).  Ties resolve to the lower index.
    """
    dist = _check_square(dist, labels)
    pos_lists, neg_lists = _class_views(labels)
    anchors, positives, negatives = [], [], []
    for a in _eligible_anchors(pos_lists, neg_lists, len(labels), anchor_indices):
        p = pos_lists[a][int(rng.integers(len(pos_lists[a])))]
        d_ap = dist[a, p]
        negs = neg_lists[a]
        d_an = dist[a, negs]
        window = negs[(d_an > d_ap) & (d_an < d_ap + margin)]
        if window.size:
            n = window[int(rng.integers(window.size))]
        else:
            farther = negs[d_an > d_ap]
            if farther.size:
                n = farther[int(np.argmin(dist[a, farther]))]
            else:
                n = negs[int(np.argmax(d_an))]
        anchors.append(a)
        positives.append(int(p))
        negatives.append(int(n))
    return TripletSet(
        np.asarray(anchors, dtype=np.int64),
        np.asarray(positives, dtype=np.int64),
        np.asarray(negatives, dtype=np.int64),
    )


def distance_weights(d, embed_dim: int, clip: float = 0.5, cap: float = 1e8):
    """Inverse of the hypersphere pairwise-distance density, clipped and capped.

    q(d) = d^(n-2) (1 - d^2/4)^((n-3)/2) for n = embed_dim; weights are
    1/q evaluated at max(d, clip) and capped so they stay finite as d -> 2.
    """
    d = np.maximum(np.asarray(d, dtype=np.float64), clip)
    with np.errstate(divide="ignore"):
        log_q = (embed_dim - 2) * np.log(d) + ((embed_dim - 3) / 2.0) * np.log(
            np.maximum(1.0 - 0.25 * d * d, 0.0)
        )
    return np.exp(np.minimum(-log_q, np.log(cap)))


def sample_distance_weighted(
    dist, labels, rng: SeededRng, embed_dim: int, clip: float = 0.5, anchor_indices=None
) -> TripletSet:
    """Uniform positives; negatives drawn inversely to the distance density."""
    dist = _check_square(dist, labels)
    pos_lists, neg_lists = _class_views(labels)
    all_weights = distance_weights(dist, embed_dim, clip)
    anchors, positives, negatives = [], [], []
    for a in _eligible_anchors(pos_lists, neg_lists, len(labels), anchor_indices):
        p = pos_lists[a][int(rng.integers(len(pos_lists[a])))]
        negs = neg_lists[a]
        # weighted draw via the cumulative distribution; one uniform per anchor
        cdf = np.cumsum(all_weights[a, negs])
        u = rng.uniform(0.0, cdf[-1])
        n = negs[min(int(np.searchsorted(cdf, u, side="right")), negs.size - 1)]
        anchors.append(a)
        positives.append(int(p))
        negatives.append(int(n))
    return TripletSet(
        np.asarray(anchors, dtype=np.int64),
        np.asarray(positives, dtype=np.int64),
        np.asarray(negatives, dtype=np.int64),
    )


def sample_softhard_triplets(
    dist, labels, rng: SeededRng, anchor_indices=None
) -> TripletSet:
    """Hard positives (farther than the nearest negative) paired with hard
    negatives (closer than the farthest positive); uniform fallback each side."""
    dist = _check_square(dist, labels)
    pos_lists, neg_lists = _class_views(labels)
    anchors, positives, negatives = [], [], []
    for a in _eligible_anchors(pos_lists, neg_lists, len(labels), anchor_indices):
        pos, negs = pos_lists[a], neg_lists[a]
        d_pos, d_neg = dist[a, pos], dist[a, negs]
        hard_pos = pos[d_pos > d_neg.min()]
        hard_neg = negs[d_neg < d_pos.max()]
        p_pool = hard_pos if hard_pos.size else pos
        n_pool = hard_neg if hard_neg.size else negs
        anchors.append(a)
        positives.append(int(p_pool[int(rng.integers(p_pool.size))]))
        negatives.append(int(n_pool[int(rng.integers(n_pool.size))]))
    return TripletSet(
        np.asarray(anchors, dtype=np.int64),
        np.asarray(positives, dtype=np.int64),
        np.asarray(negatives, dtype=np.int64),
    )


def build_pairs(labels) -> PairSet:
    """All unordered pairs (i < j) flagged positive when labels match."""
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ShapeMismatchError("labels must be nonempty")
    i, j = np.triu_indices(n, k=1)
    return PairSet(i.astype(np.int64), j.astype(np.int64), labels[i] == labels[j])


def sample_triplets(
    kind: str, dist, labels, rng: SeededRng, *,
    embed_dim: int, semihard_margin: float = 0.2, clip: float = 0.5,
    anchor_indices=None,
) -> TripletSet:
    """Strategy dispatch used by the training loop."""
    if kind == "random":
        pos_lists, neg_lists = _class_views(labels)
        count = len(_eligible_anchors(pos_lists, neg_lists, len(labels), anchor_indices))
        if count == 0:
            raise NoValidTripletError("no anchor has both a positive and a negative")
        return sample_random_triplets(labels, count, rng, anchor_indices)
    if kind == "semihard":
        return sample_semihard_triplets(dist, labels, semihard_margin, rng, anchor_indices)
    if kind == "softhard":
        return sample_softhard_triplets(dist, labels, rng, anchor_indices)
    if kind == "distance":
        return sample_distance_weighted(dist, labels, rng, embed_dim, clip, anchor_indices)
    raise ConfigError(f"sampler.kind must be one of {SAMPLER_KINDS}, got {kind!r}")
