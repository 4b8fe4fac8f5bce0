"""Upscaling modes, contingency tables, Hungarian and majority matching."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from eigenseg.postprocess import (
    Assignment,
    ContingencyTable,
    contingency,
    match_hungarian,
    match_majority,
    relabel,
    upscale_majority,
    upscale_nearest_exact,
)
from eigenseg.tensor_io import LabelMask


def _mask(rows) -> LabelMask:
    arr = np.asarray(rows, dtype=np.int32)
    return LabelMask(arr.shape[0], arr.shape[1], arr)


def _table(counts, row_labels=None, col_labels=None) -> ContingencyTable:
    counts = np.asarray(counts, dtype=np.int64)
    r = np.arange(counts.shape[0], dtype=np.int64) if row_labels is None else np.asarray(row_labels, dtype=np.int64)
    c = np.arange(counts.shape[1], dtype=np.int64) if col_labels is None else np.asarray(col_labels, dtype=np.int64)
    return ContingencyTable(r, c, counts)


class TestNearestExact:
    def test_integer_2x_quadrants(self):
        out = upscale_nearest_exact(_mask([[0, 1], [2, 3]]), 4, 4)
        expected = np.repeat(np.repeat([[0, 1], [2, 3]], 2, axis=0), 2, axis=1)
        assert np.array_equal(out.labels, expected)

    def test_identity(self):
        mask = _mask([[0, 1, 2], [3, 4, 5]])
        out = upscale_nearest_exact(mask, 2, 3)
        assert np.array_equal(out.labels, mask.labels)

    def test_2_to_3_rows_follow_index_formula(self):
        mask = _mask([[0, 1], [2, 3]])
        out = upscale_nearest_exact(mask, 3, 3)
        # oracle: direct evaluation of min(floor((i+0.5)*h/H), h-1)
        idx = [min(int(np.floor((i + 0.5) * 2 / 3)), 1) for i in range(3)]
        assert idx == [0, 1, 1]
        expected = mask.labels[np.ix_(idx, idx)]
        assert np.array_equal(out.labels, expected)

    def test_matches_formula_oracle_random(self, rng):
        for _ in range(20):
            h, w = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            out_h = int(rng.integers(h, 4 * h + 1))
            out_w = int(rng.integers(w, 4 * w + 1))
            mask = _mask(rng.integers(0, 9, (h, w)))
            out = upscale_nearest_exact(mask, out_h, out_w)
            for i in range(out_h):
                for j in range(out_w):
                    si = min(int(np.floor((i + 0.5) * h / out_h)), h - 1)
                    sj = min(int(np.floor((j + 0.5) * w / out_w)), w - 1)
                    assert out.labels[i, j] == mask.labels[si, sj]

    def test_integer_factor_block_structure(self, rng):
        mask = _mask(rng.integers(0, 5, (3, 4)))
        for f in (2, 3, 5):
            out = upscale_nearest_exact(mask, 3 * f, 4 * f)
            blocks = out.labels.reshape(3, f, 4, f)
            assert np.all(blocks == blocks[:, :1, :, :1])

    def test_downscale_rejected(self):
        with pytest.raises(ValueError):
            upscale_nearest_exact(_mask([[0, 1], [2, 3]]), 1, 4)


class TestMajorityUpscale:
    def test_constant_mask(self):
        out = upscale_majority(_mask([[7, 7], [7, 7]]), 5, 6)
        assert np.all(out.labels == 7)

    def test_integer_factors_equal_nearest_exact(self, rng):
        for _ in range(30):
            mask = _mask(rng.integers(0, 6, (5, 7)))
            for f in (2, 3):
                a = upscale_nearest_exact(mask, 5 * f, 7 * f)
                b = upscale_majority(mask, 5 * f, 7 * f)
                assert np.array_equal(a.labels, b.labels)

    def test_tie_goes_nearest_then_smallest(self):
        out = upscale_majority(_mask([[0, 1]]), 1, 3)
        # middle pixel: both cells overlap equally and sit equally near,
        # so the smaller label wins
        assert out.labels.tolist() == [[0, 0, 1]]

    def test_identity(self):
        mask = _mask([[0, 1], [2, 3]])
        out = upscale_majority(mask, 2, 2)
        assert np.array_equal(out.labels, mask.labels)

    def test_downscale_rejected(self):
        with pytest.raises(ValueError):
            upscale_majority(_mask([[0, 1], [2, 3]]), 2, 1)


class TestContingency:
    def test_equal_masks_diagonal(self):
        mask = _mask([[0, 1], [2, 1]])
        table = contingency(mask, mask)
        assert np.array_equal(table.counts, np.diag([1, 2, 1]))

    def test_disjoint_labels_off_diagonal(self):
        table = contingency(_mask([[0, 0]]), _mask([[1, 1]]))
        assert table.counts.tolist() == [[2]]
        assert table.row_labels.tolist() == [0]
        assert table.col_labels.tolist() == [1]

    def test_matches_double_loop_oracle(self, rng):
        pred = _mask(rng.integers(0, 4, (10, 10)))
        gt = _mask(rng.integers(0, 3, (10, 10)))
        table = contingency(pred, gt)
        for r, rl in enumerate(table.row_labels):
            for c, cl in enumerate(table.col_labels):
                count = sum(
                    1
                    for i in range(10)
                    for j in range(10)
                    if pred.labels[i, j] == rl and gt.labels[i, j] == cl
                )
                assert table.counts[r, c] == count
        assert table.total == 100

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            contingency(_mask([[0, 1]]), _mask([[0], [1]]))


class TestHungarian:
    def test_diagonal_dominant_identity(self):
        table = _table([[9, 1, 0], [0, 8, 1], [1, 0, 7]])
        assert match_hungarian(table).mapping == {0: 0, 1: 1, 2: 2}

    def test_swap(self):
        table = _table([[0, 5], [5, 0]])
        assignment = match_hungarian(table)
        assert assignment.mapping == {0: 1, 1: 0}
        assert assignment.mode == "one-to-one"

    def test_equals_exhaustive_permutation_maximum(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 7))
            counts = rng.integers(0, 50, (n, n))
            table = _table(counts)
            assignment = match_hungarian(table)
            total = sum(counts[r, assignment.mapping[r]] for r in range(n))
            best = max(
                sum(counts[r, perm[r]] for r in range(n))
                for perm in itertools.permutations(range(n))
            )
            assert total == best

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            match_hungarian(_table([[1, 2, 3], [4, 5, 6]]))


class TestMajorityMatch:
    def test_unique_row_maxima(self):
        table = _table([[5, 1], [2, 9], [0, 3]])
        assert match_majority(table).mapping == {0: 0, 1: 1, 2: 1}

    def test_zero_row_takes_smallest_class(self):
        table = _table([[0, 0], [1, 0]])
        assert match_majority(table).mapping[0] == 0

    def test_matches_row_scan_oracle(self, rng):
        for _ in range(20):
            counts = rng.integers(0, 20, (5, 4))
            table = _table(counts)
            mapping = match_majority(table).mapping
            for r in range(5):
                best = max(range(4), key=lambda c: (counts[r, c], -c))
                assert mapping[r] == best

    def test_hungarian_total_not_below_injective_majority(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 6))
            counts = rng.integers(0, 30, (n, n))
            table = _table(counts)
            hung = match_hungarian(table)
            hung_total = sum(counts[r, hung.mapping[r]] for r in range(n))
            maj = match_majority(table)
            targets = list(maj.mapping.values())
            if len(set(targets)) == len(targets):  # majority happens to be injective
                maj_total = sum(counts[r, maj.mapping[r]] for r in range(n))
                assert hung_total >= maj_total


class TestRelabel:
    def test_identity(self):
        mask = _mask([[0, 1], [1, 0]])
        out = relabel(mask, Assignment({0: 0, 1: 1}, "one-to-one"))
        assert np.array_equal(out.labels, mask.labels)

    def test_swap_complements_binary(self):
        mask = _mask([[0, 1], [1, 0]])
        out = relabel(mask, Assignment({0: 1, 1: 0}, "one-to-one"))
        assert np.array_equal(out.labels, 1 - mask.labels)

    def test_many_to_one_collapse_is_set_union(self, rng):
        labels = rng.integers(0, 15, (8, 8)).astype(np.int32)
        mask = LabelMask(8, 8, labels)
        instrument = {1, 4, 7, 12}
        mapping = {c: (1 if c in instrument else 0) for c in range(15)}
        out = relabel(mask, Assignment(mapping, "many-to-one"))
        expected = np.isin(labels, sorted(instrument)).astype(np.int32)
        assert np.array_equal(out.labels, expected)

    def test_uncovered_label_rejected(self):
        with pytest.raises(ValueError):
            relabel(_mask([[0, 2]]), Assignment({0: 0}, "many-to-one"))

    def test_one_to_one_preserves_partition_structure(self, rng):
        labels = rng.integers(0, 5, (6, 6)).astype(np.int32)
        mask = LabelMask(6, 6, labels)
        mapping = {0: 3, 1: 0, 2: 4, 3: 1, 4: 2}
        out = relabel(mask, Assignment(mapping, "one-to-one"))
        for lab in range(5):
            where_in = labels == lab
            where_out = out.labels == mapping[lab]
            assert np.array_equal(where_in, where_out)

    def test_injectivity_enforced(self):
        with pytest.raises(ValueError):
            Assignment({0: 1, 1: 1}, "one-to-one")
