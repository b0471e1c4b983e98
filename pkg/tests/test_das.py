from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densedml.core import SeededRng
from densedml.das import (
    DasConfig,
    FrequencyRecorder,
    TransformationBank,
    apply_factors,
    combine_factors,
    das_produce,
    produce_batch,
    produced_backward,
    scaling_factor,
    shifting_factor,
)
from densedml.errors import ConfigError, LabelOutOfRangeError, ZeroNormError

from conftest import finite_difference, max_rel_error, random_unit_rows


class TestFrequencyRecorder:
    def test_counting_example(self):
        rec = FrequencyRecorder(2, 4)
        rec.update([[0.9, 0.1, 0.4, 0.1]], [0], k=2)
        np.testing.assert_array_equal(rec.counts[0], [1, 0, 1, 0])
        rec.update([[0.1, 0.8, 0.6, 0.0]], [0], k=2)
        np.testing.assert_array_equal(rec.counts[0], [1, 1, 2, 0])

    def test_row_isolation(self):
        rec = FrequencyRecorder(2, 4)
        rec.update([[0.9, 0.1, 0.4, 0.1]], [1], k=2)
        np.testing.assert_array_equal(rec.counts[0], np.zeros(4))

    def test_label_out_of_range(self):
        rec = FrequencyRecorder(2, 4)
        with pytest.raises(LabelOutOfRangeError):
            rec.update([[1.0, 0.0, 0.0, 0.0]], [2], k=1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_row_sums_are_k_times_occurrences(self, seed):
        r = SeededRng(seed)
        rec = FrequencyRecorder(3, 6)
        k = 2
        seen = np.zeros(3, dtype=int)
        for _ in range(5):
            emb = r.normal(size=(4, 6))
            labels = r.integers(3, size=4)
            rec.update(emb, labels, k)
            for c in labels:
                seen[c] += 1
            np.testing.assert_array_equal(rec.counts.sum(axis=1), k * seen)

    def test_counts_never_decrease(self, rng):
        rec = FrequencyRecorder(2, 5)
        prev = rec.counts.copy()
        for _ in range(10):
            rec.update(rng.normal(size=(3, 5)), rng.integers(2, size=3), k=2)
            assert np.all(rec.counts >= prev)
            prev = rec.counts.copy()


class TestMask:
    def test_tie_rule_example(self):
        rec = FrequencyRecorder(1, 4)
        rec.counts[0] = [1, 1, 2, 0]
        np.testing.assert_array_equal(rec.mask(2)[0], [1, 0, 1, 0])

    def test_all_zero_row_takes_first_k(self):
        rec = FrequencyRecorder(1, 5)
        np.testing.assert_array_equal(rec.mask(3)[0], [1, 1, 1, 0, 0])

    def test_k_equals_d_all_ones(self):
        rec = FrequencyRecorder(2, 4)
        rec.counts[:] = np.arange(8).reshape(2, 4)
        np.testing.assert_array_equal(rec.mask(4), np.ones((2, 4)))

    def test_rows_have_exactly_k_ones(self, rng):
        rec = FrequencyRecorder(4, 8)
        rec.update(rng.normal(size=(20, 8)), rng.integers(4, size=20), k=3)
        mask = rec.mask(3)
        np.testing.assert_array_equal(mask.sum(axis=1), np.full(4, 3))

    def test_invariant_under_positive_row_scaling(self, rng):
        rec = FrequencyRecorder(2, 6)
        rec.update(rng.normal(size=(10, 6)), rng.integers(2, size=10), k=2)
        base = rec.mask(2)
        rec.counts[0] *= 17
        np.testing.assert_array_equal(rec.mask(2), base)


class TestScalingFactor:
    def test_masked_pattern(self, rng):
        s = scaling_factor([1, 0, 1, 0], 0.5, rng)
        assert s[1] == 1.0 and s[3] == 1.0
        assert 0.5 <= s[0] <= 1.5 and 0.5 <= s[2] <= 1.5

    def test_zero_radius_all_ones(self, rng):
        np.testing.assert_array_equal(
            scaling_factor([1, 1, 0, 1], 0.0, rng), np.ones(4)
        )

    def test_uniform_law(self):
        rng = SeededRng(77)
        rs = 0.01
        draws = np.array([scaling_factor([1, 1], rs, rng) for _ in range(10_000)])
        assert draws.min() >= 1 - rs and draws.max() <= 1 + rs
        assert abs(draws.mean() - 1.0) < 0.001


class TestBank:
    def test_pair_enqueue_order(self):
        bank = TransformationBank(1, 5, 2)
        v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        bank.update([v1, v2], [0, 0])
        assert bank.filled[0] == 2
        np.testing.assert_array_equal(bank.slots[0, 0], v1 - v2)
        np.testing.assert_array_equal(bank.slots[0, 1], v2 - v1)

    def test_fifo_overwrite(self):
        bank = TransformationBank(1, 2, 2)
        t1, t2, t3 = np.array([1.0, 0]), np.array([2.0, 0]), np.array([3.0, 0])
        for t in (t1, t2, t3):
            bank.enqueue(0, t)
        np.testing.assert_array_equal(bank.slots[0, 0], t3)
        np.testing.assert_array_equal(bank.slots[0, 1], t2)
        assert bank.filled[0] == 2

    def test_singleton_group_skipped(self):
        bank = TransformationBank(2, 3, 2)
        bank.update([[1.0, 2.0]], [0])
        assert bank.filled[0] == 0

    def test_label_out_of_range(self):
        bank = TransformationBank(2, 3, 2)
        with pytest.raises(LabelOutOfRangeError):
            bank.enqueue(5, np.zeros(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=6))
    def test_matches_bounded_queue_model(self, seed, capacity):
        r = SeededRng(seed)
        bank = TransformationBank(1, capacity, 3)
        model = deque(maxlen=capacity)
        for i in range(int(r.integers(20)) + 1):
            t = r.normal(size=3)
            bank.enqueue(0, t)
            model.append(t)
        stored = bank.slots[0, : bank.filled[0]]
        assert bank.filled[0] == len(model)
        got = sorted(map(tuple, stored))
        want = sorted(map(tuple, model))
        np.testing.assert_allclose(got, want)


class TestShiftingFactor:
    def test_cold_start_zero(self, rng):
        bank = TransformationBank(2, 4, 3)
        np.testing.assert_array_equal(shifting_factor(bank, 1, 0.01, rng), np.zeros(3))

    def test_single_slot_scaling(self, rng):
        bank = TransformationBank(1, 4, 2)
        bank.enqueue(0, np.array([1.0, -1.0]))
        np.testing.assert_allclose(
            shifting_factor(bank, 0, 0.01, rng), [0.01, -0.01], atol=1e-15
        )

    def test_uniform_slot_choice(self):
        bank = TransformationBank(1, 4, 1)
        bank.enqueue(0, np.array([1.0]))
        bank.enqueue(0, np.array([2.0]))
        rng = SeededRng(17)
        hits = {1.0: 0, 2.0: 0}
        for _ in range(10_000):
            hits[float(shifting_factor(bank, 0, 1.0, rng)[0])] += 1
        assert abs(hits[1.0] / 10_000 - 0.5) < 0.02

    def test_unfilled_slots_never_sampled(self):
        bank = TransformationBank(1, 10, 1)
        bank.enqueue(0, np.array([5.0]))
        rng = SeededRng(3)
        for _ in range(200):
            assert shifting_factor(bank, 0, 1.0, rng)[0] == 5.0


class TestProduce:
    def test_identity_when_degenerate(self):
        cfg = DasConfig(T=4, K=1, Z=3, rs=0.0, rb=0.01)
        bank = TransformationBank(1, 3, 2)  # empty: shift contributes nothing
        v = np.array([1.0, 0.0])
        out = das_produce(v, 0, np.array([1.0, 0.0]), bank, cfg, SeededRng(0))
        assert len(out) == 4
        for vp, label in out:
            np.testing.assert_array_equal(vp, v)
            assert label == 0

    def test_pure_shift_example(self):
        np.testing.assert_allclose(
            apply_factors(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([0.0, 1.0])),
            np.array([1.0, 1.0]) / np.sqrt(2.0),
            atol=1e-12,
        )

    def test_scale_and_shift_arithmetic(self):
        got = apply_factors(
            np.array([0.6, 0.8]), np.array([0.5, 1.0]), np.array([0.1, -0.1])
        )
        np.testing.assert_allclose(got, [0.49614, 0.86824], atol=1e-5)

    def test_collapse_raises_and_batch_drops(self):
        v = np.array([1.0, 0.0])
        with pytest.raises(ZeroNormError):
            apply_factors(v, np.array([1.0, 1.0]), np.array([-1.0, 0.0]))
        batch = combine_factors(
            v.reshape(1, 2), [0], np.ones((1, 2)), np.array([[-1.0, 0.0]])
        )
        assert batch.dropped == 1 and len(batch.labels) == 0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_produced_unit_norm(self, seed):
        r = SeededRng(seed)
        anchors = random_unit_rows(r, 3, 5)
        labels = np.array([0, 1, 1])
        rec = FrequencyRecorder(2, 5)
        rec.update(anchors, labels, 2)
        bank = TransformationBank(2, 4, 5)
        bank.update(anchors, labels)
        cfg = DasConfig(T=3, K=2, Z=4, rs=0.3, rb=0.3)
        batch = produce_batch(anchors, labels, rec.mask(2), bank, cfg, r)
        norms = np.linalg.norm(batch.embeddings, axis=1)
        np.testing.assert_allclose(norms, np.ones_like(norms), atol=1e-12)
        np.testing.assert_array_equal(batch.labels, np.repeat(labels, 3)[: len(batch.labels)])

    def test_default_radii_keep_points_near_anchor(self):
        r = SeededRng(99)
        anchors = random_unit_rows(r, 20, 16)
        labels = np.zeros(20, dtype=int)
        rec = FrequencyRecorder(1, 16)
        rec.update(anchors, labels, 4)
        bank = TransformationBank(1, 10, 16)
        bank.update(anchors, labels)
        cfg = DasConfig(T=3, K=4, Z=10, rs=0.01, rb=0.01)
        batch = produce_batch(anchors, labels, rec.mask(4), bank, cfg, r)
        cos = np.sum(batch.embeddings * anchors[batch.anchor_rows], axis=1)
        assert np.all(cos >= 1 - 10 * (cfg.rs + cfg.rb))

    def test_gradient_through_production(self):
        r = SeededRng(4)
        v = random_unit_rows(r, 1, 4)
        scales = 1.0 + 0.3 * r.normal(size=(2, 4))
        shifts = 0.2 * r.normal(size=(2, 4))
        upstream = r.normal(size=(2, 4))

        def probe(flat):
            emb = flat.reshape(1, 4)
            batch = combine_factors(emb, [0], scales, shifts)
            return float(np.sum(upstream * batch.embeddings))

        batch = combine_factors(v, [0], scales, shifts)
        analytic = produced_backward(batch, upstream, 1, 4)
        numeric = finite_difference(probe, v.ravel())
        assert max_rel_error(analytic.ravel(), numeric) < 1e-4


class TestDasConfig:
    def test_mutually_exclusive_toggles(self):
        with pytest.raises(ConfigError):
            DasConfig(dfs_only=True, mts_only=True).validate(8)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(T=-1), dict(K=0), dict(Z=0), dict(rs=1.0), dict(rs=-0.1), dict(rb=-1.0)],
    )
    def test_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            DasConfig(**kwargs).validate(8)

    def test_k_exceeds_dim(self):
        with pytest.raises(ConfigError):
            DasConfig(K=9).validate(8)
