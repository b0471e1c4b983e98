"""Deterministic vector/matrix primitives shared by every other module.

All functions operate on float64 numpy arrays and are pure; the RNG below is
the single source of randomness for the whole package.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, KOutOfRangeError, ZeroNormError

ZERO_NORM_EPS = 1e-12

# Named sub-streams derived from one run seed.  Keeping concerns on separate
# streams means toggling one component (e.g. embedding production) cannot
# perturb the draws seen by another (e.g. triplet sampling).
STREAMS = {"init": 0, "data": 1, "das": 2, "sampler": 3, "eval": 4}


class SeededRng:
    """Counter-based deterministic RNG.

    Thin wrapper over numpy's Philox-4x64-10 bit generator keyed through
    ``SeedSequence([seed, stream])``.  Same (seed, stream) gives a
    bit-identical draw sequence on every run and platform for a fixed numpy
    version; streams with different ids are statistically independent.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([self.seed, self.stream]))
        )

    def derive(self, name: str) -> "SeededRng":
        """Child stream for a named concern (see STREAMS)."""
        return SeededRng(self.seed, STREAMS[name])

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, n, size=None):
        """Uniform integers in [0, n)."""
        return self._gen.integers(0, n, size=size)

    def choice(self, candidates, p=None):
        """One element of `candidates`, optionally weighted by `p`."""
        candidates = np.asarray(candidates)
        idx = self._gen.choice(len(candidates), p=p)
        return candidates[idx]

    def permutation(self, n):
        return self._gen.permutation(n)


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def l2_normalize(v) -> np.ndarray:
    """Scale `v` onto the unit sphere; raises ZeroNormError below the eps floor."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm):
        raise DimensionMismatchError("non-finite entries in vector")
    if norm <= ZERO_NORM_EPS:
        raise ZeroNormError(f"cannot normalize vector with norm {norm:.3e}")
    return v / norm


def pairwise_distances(rows) -> np.ndarray:
    """n x n matrix of l2 distances between the given vectors.

    Symmetric with an exactly-zero diagonal; entry (i, j) matches the scalar
    loop sum over squared coordinate differences to float64 rounding.
    """
    rows = list(rows)
    if len(rows) == 0:
        return np.zeros((0, 0))
    lengths = {np.asarray(r).shape for r in rows}
    if len(lengths) > 1:
        raise DimensionMismatchError(f"ragged input rows: shapes {sorted(lengths)}")
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected 2-D stack of vectors, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatchError("non-finite entries in input rows")
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the K largest entries, ascending; ties go to the lower index."""
    v = as_vector(v)
    d = v.shape[0]
    if k < 1 or k > d:
        raise KOutOfRangeError(f"K={k} outside [1, {d}]")
    # stable sort on negated values keeps the lower index first among ties
    order = np.argsort(-v, kind="stable")[:k]
    return np.sort(order)
