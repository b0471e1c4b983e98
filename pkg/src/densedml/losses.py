"""Pair-based metric-learning losses with analytic embedding gradients.

All losses return the mean over their active (nonzero) terms, so the learning
rate does not scale with how many pairs/triplets a batch yields and terms that
sit outside their hinge contribute nothing at all.  Distance derivatives
at D -> 0 are set to zero (subgradient choice) so duplicated embeddings never
produce a division blow-up.  Multi-similarity operates on cosine similarity;
the other three on l2 distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatchError

TINY_DISTANCE = 1e-9

LOSS_KINDS = ("contrastive", "triplet", "margin", "ms")


@dataclass(frozen=True)
class PairSet:
    """Index pairs (i, j) with a positive/negative flag."""

    first: np.ndarray
    second: np.ndarray
    is_positive: np.ndarray

    def __len__(self):
        return len(self.first)


@dataclass(frozen=True)
class TripletSet:
    """(anchor, positive, negative) index triples."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self):
        return len(self.anchors)

    def to_pairs(self) -> PairSet:
        """Each triplet contributes its (a,p) positive and (a,n) negative pair."""
        first = np.concatenate([self.anchors, self.anchors])
        second = np.concatenate([self.positives, self.negatives])
        flags = np.concatenate(
            [np.ones(len(self), dtype=bool), np.zeros(len(self), dtype=bool)]
        )
        return PairSet(first, second, flags)


@dataclass
class LossSpec:
    """Loss selection plus every margin/weight knob in one place."""

    kind: str = "triplet"
    contrastive_margin: float = 0.5
    triplet_margin: float = 0.2
    margin_alpha: float = 0.2
    margin_beta: float = 1.2  # initial value of the learnable boundary
    beta_lr: float | None = None  # None -> use the optimizer learning rate
    ms_alpha: float = 2.0
    ms_beta: float = 50.0
    ms_base: float = 1.0
    ms_eps: float = 0.1

    def validate(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss.kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        for name in ("contrastive_margin", "triplet_margin", "margin_alpha",
                     "margin_beta", "ms_alpha", "ms_beta"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"loss.{name} must be positive")
        if self.beta_lr is not None and self.beta_lr <= 0:
            raise ConfigError("loss.beta_lr must be positive when set")


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray  # same shape as the embedding batch
    active_count: int
    beta_grad: float | None = None  # d(value)/d(beta), margin loss only


def _check_indices(n, *index_arrays):
    for arr in index_arrays:
        arr = np.asarray(arr)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ShapeMismatchError("pair/triplet index outside the batch")


def _pair_distances(emb, i, j):
    diff = emb[i] - emb[j]
    dist = np.linalg.norm(diff, axis=1)
    # unit direction with the zero-distance subgradient convention
    safe = np.where(dist > TINY_DISTANCE, dist, 1.0)
    direction = np.where((dist > TINY_DISTANCE)[:, None], diff / safe[:, None], 0.0)
    return dist, direction


def contrastive_loss(embeddings, pairs: PairSet, margin: float) -> LossOutput:
    """Mean of D_ij over positives and hinge [margin - D_ij]_+ over negatives."""
    emb = np.asarray(embeddings, dtype=np.float64)
    grad = np.zeros_like(emb)
    m = len(pairs)
    if m == 0:
        return LossOutput(0.0, grad, 0)
    i, j, pos = np.asarray(pairs.first), np.asarray(pairs.second), np.asarray(pairs.is_positive)
    _check_indices(emb.shape[0], i, j)
    dist, direction = _pair_distances(emb, i, j)

    terms = np.where(pos, dist, np.maximum(margin - dist, 0.0))
    active = int(np.count_nonzero(terms > 0))
    denom = max(active, 1)
    # dL/dD is +1 on positives, -1 on active negative hinges
    coeff = np.where(pos, 1.0, np.where(margin - dist > 0, -1.0, 0.0)) / denom
    coeff = np.where(terms > 0, coeff, 0.0)
    np.add.at(grad, i, coeff[:, None] * direction)
    np.add.at(grad, j, -coeff[:, None] * direction)
    return LossOutput(float(terms.sum() / denom), grad, active)


def triplet_loss(embeddings, triplets: TripletSet, margin: float) -> LossOutput:
    """Mean hinge [D_ap - D_an + margin]_+ over the given triplets."""
    emb = np.asarray(embeddings, dtype=np.float64)
    grad = np.zeros_like(emb)
    m = len(triplets)
    if m == 0:
        return LossOutput(0.0, grad, 0)
    a, p, n = (np.asarray(triplets.anchors), np.asarray(triplets.positives),
               np.asarray(triplets.negatives))
    _check_indices(emb.shape[0], a, p, n)
    d_ap, dir_ap = _pair_distances(emb, a, p)
    d_an, dir_an = _pair_distances(emb, a, n)

    terms = np.maximum(d_ap - d_an + margin, 0.0)
    n_active = int(np.count_nonzero(terms > 0))
    denom = max(n_active, 1)
    coeff = (terms > 0).astype(np.float64) / denom
    np.add.at(grad, a, coeff[:, None] * (dir_ap - dir_an))
    np.add.at(grad, p, -coeff[:, None] * dir_ap)
    np.add.at(grad, n, coeff[:, None] * dir_an)
    return LossOutput(float(terms.sum() / denom), grad, n_active)


def margin_loss(embeddings, pairs: PairSet, alpha: float, beta: float) -> LossOutput:
    """Mean hinge [alpha + y_ij (D_ij - beta)]_+ with learnable boundary beta.

    y_ij is +1 for positive and -1 for negative pairs; beta_grad carries the
    derivative with respect to the boundary.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    grad = np.zeros_like(emb)
    m = len(pairs)
    if m == 0:
        return LossOutput(0.0, grad, 0, beta_grad=0.0)
    i, j, pos = np.asarray(pairs.first), np.asarray(pairs.second), np.asarray(pairs.is_positive)
    _check_indices(emb.shape[0], i, j)
    dist, direction = _pair_distances(emb, i, j)
    y = np.where(pos, 1.0, -1.0)

    terms = np.maximum(alpha + y * (dist - beta), 0.0)
    active = terms > 0
    n_active = int(np.count_nonzero(active))
    denom = max(n_active, 1)
    coeff = np.where(active, y, 0.0) / denom
    np.add.at(grad, i, coeff[:, None] * direction)
    np.add.at(grad, j, -coeff[:, None] * direction)
    beta_grad = float(np.where(active, -y, 0.0).sum() / denom)
    return LossOutput(float(terms.sum() / denom), grad, n_active, beta_grad=beta_grad)


def multi_similarity_loss(embeddings, labels, spec: LossSpec) -> LossOutput:
    """Soft-weighted positive/negative terms on cosine similarity.

    Per anchor i the mined positive set is {j : S_ij > min_neg - eps} and the
    mined negative set is {j : S_ij < max_pos + eps}; anchors with no positive
    in the batch are skipped.  Value is the mean over contributing anchors of

        log(1 + sum_pos exp(-alpha (S_ij - base))) / alpha
      + log(1 + sum_neg exp( beta (S_ij - base))) / beta
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if emb.shape[0] != labels.shape[0]:
        raise ShapeMismatchError("labels length != batch size")
    n = emb.shape[0]
    grad = np.zeros_like(emb)
    sims = emb @ emb.T

    alpha, beta, base, eps = spec.ms_alpha, spec.ms_beta, spec.ms_base, spec.ms_eps
    eligible = 0
    active = 0
    total = 0.0
    sim_grad = np.zeros_like(sims)  # dL/dS before the 1/m normalization
    for i in range(n):
        same = labels == labels[i]
        same[i] = False
        diff = ~(labels == labels[i])
        pos_idx = np.flatnonzero(same)
        if pos_idx.size == 0:
            continue  # anchors without positives are skipped
        eligible += 1
        neg_idx = np.flatnonzero(diff)

        min_neg = sims[i, neg_idx].min() if neg_idx.size else -np.inf
        max_pos = sims[i, pos_idx].max()
        mined_pos = pos_idx[sims[i, pos_idx] > min_neg - eps]
        mined_neg = neg_idx[sims[i, neg_idx] < max_pos + eps] if neg_idx.size else neg_idx

        term = 0.0
        if mined_pos.size:
            x = -alpha * (sims[i, mined_pos] - base)
            lse = np.logaddexp.reduce(np.concatenate(([0.0], x)))
            term += lse / alpha
            # softmax-style weights against the implicit +1 term
            sim_grad[i, mined_pos] += -np.exp(x - lse)
        if mined_neg.size:
            x = beta * (sims[i, mined_neg] - base)
            lse = np.logaddexp.reduce(np.concatenate(([0.0], x)))
            term += lse / beta
            sim_grad[i, mined_neg] += np.exp(x - lse)
        total += term
        if term > 0:
            active += 1

    if eligible == 0 or active == 0:
        return LossOutput(0.0, grad, 0)
    sim_grad /= active
    # S_ij = v_i . v_j  =>  dL/dv_i += sum_j w_ij v_j ; dL/dv_j += w_ij v_i
    grad += sim_grad @ emb
    grad += sim_grad.T @ emb
    return LossOutput(float(total / active), grad, active)
