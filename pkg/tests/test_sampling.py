import itertools

import numpy as np
import pytest

import crossscan as cs
from crossscan.errors import InsufficientTissueError, LabelMismatchError
from crossscan.phantom import TissueId
from crossscan.sampling import (ALL_KINDS, PairKind, Patch, batch_iterator,
                                build_pairs, count_pairs, extract_patches,
                                valid_center_range, write_pairs_csv)


def make_patch(tissue, scanner, tag=0):
    rng = np.random.default_rng(hash((tissue, scanner, tag)) % 2**32)
    return Patch(rng.normal(0, 1, (15, 15)), (tag, tag), tissue, scanner, 0)


def synthetic_patch_sets(n_by_tissue_src, n_by_tissue_tgt):
    tissues = (TissueId.CSF, TissueId.GM, TissueId.WM)
    src, tgt = [], []
    for t, n in zip(tissues, n_by_tissue_src):
        src += [make_patch(t, 0, i) for i in range(n)]
    for t, n in zip(tissues, n_by_tissue_tgt):
        tgt += [make_patch(t, 1, 100 + i) for i in range(n)]
    return src, tgt


class TestExtractPatches:
    def test_valid_center_region(self):
        lo, hi = valid_center_range(256)
        assert (lo, hi) == (7, 248)
        assert hi - lo + 1 == 242

    def test_one_patch_per_tissue(self, small_scan_pair):
        src, _ = small_scan_pair
        patches = extract_patches(src, 1, 5)
        assert len(patches) == 3
        assert {p.tissue for p in patches} == set(cs.TissueId(t) for t in (1, 2, 3))

    def test_patch_contents_match_scan(self, small_scan_pair):
        src, _ = small_scan_pair
        for p in extract_patches(src, 4, 6):
            x, y = p.center
            assert p.pixels.shape == (15, 15)
            window = src.intensities[y - 7:y + 8, x - 7:x + 8]
            assert np.array_equal(p.pixels, window)
            assert src.label_map.labels[y, x] == p.tissue

    def test_deterministic_and_without_replacement(self, small_scan_pair):
        src, _ = small_scan_pair
        a = extract_patches(src, 10, 7)
        b = extract_patches(src, 10, 7)
        assert [p.center for p in a] == [p.center for p in b]
        per_tissue = {}
        for p in a:
            per_tissue.setdefault(p.tissue, []).append(p.center)
        for centers in per_tissue.values():
            assert len(set(centers)) == len(centers)

    def test_insufficient_tissue(self, small_scan_pair):
        src, _ = small_scan_pair
        with pytest.raises(InsufficientTissueError):
            extract_patches(src, 10**6, 8)

    def test_manual_mode(self, small_scan_pair):
        src, _ = small_scan_pair
        labels = src.label_map.labels
        ys, xs = np.nonzero(labels == TissueId.GM)
        inside = [(x, y) for x, y in zip(xs, ys) if 7 <= x <= 120 and 7 <= y <= 120]
        x, y = inside[0]
        got = extract_patches(src, 1, 0,
                              manual_centers=[(x, y, TissueId.GM)])
        assert len(got) == 1 and got[0].center == (x, y)
        with pytest.raises(LabelMismatchError):
            extract_patches(src, 1, 0, manual_centers=[(x, y, TissueId.WM)])
        with pytest.raises(ValueError):
            extract_patches(src, 1, 0, manual_centers=[(2, 2, TissueId.GM)])


class TestCountPairs:
    def test_published_example(self):
        assert count_pairs([10, 10, 10], [1, 1, 1]) == 696
        assert 4 * count_pairs([10, 10, 10], [1, 1, 1]) == 2784

    def test_empty(self):
        assert count_pairs([0, 0, 0], [0, 0, 0]) == 0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            count_pairs([1, -1], [0, 0])

    def test_enumeration_matches_formula_minus_self_pairs(self):
        # exhaustive check for all per-tissue counts <= 3 over two tissues,
        # and a randomized sweep over three tissues
        for n1, n2, m1, m2 in itertools.product(range(4), repeat=4):
            src, tgt = synthetic_patch_sets((n1, n2, 0), (m1, m2, 0))
            if not src and not tgt:
                continue
            pairs, _, _, _ = cs.sampling._enumerate_pairs(src, tgt)
            expected = count_pairs([n1, n2], [m1, m2]) - (n1 + n2 + m1 + m2)
            assert len(pairs) == expected, (n1, n2, m1, m2)
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = rng.integers(0, 4, size=3)
            m = rng.integers(0, 4, size=3)
            if n.sum() + m.sum() == 0:
                continue
            src, tgt = synthetic_patch_sets(tuple(n), tuple(m))
            pairs, _, _, _ = cs.sampling._enumerate_pairs(src, tgt)
            expected = count_pairs(n, m) - int(n.sum() + m.sum())
            assert len(pairs) == expected


class TestBuildPairs:
    def test_source_only_two_tissues(self):
        src, _ = synthetic_patch_sets((1, 2, 0), (0, 0, 0))
        ds = build_pairs(src, [], 100, 1)
        kinds = {k for k in ds.kind_counts() if ds.kind_counts()[k] > 0}
        assert kinds == {PairKind.SS_SAME, PairKind.SS_DIFF}

    def test_one_patch_per_tissue_per_scanner(self):
        # brute force over the 6x6 grid minus self-pairs: a single patch per
        # (tissue, scanner) cannot produce SS-same or TT-same pairs, the
        # other four kinds all appear
        src, tgt = synthetic_patch_sets((1, 1, 1), (1, 1, 1))
        ds = build_pairs(src, tgt, 10**6, 1)
        counts = ds.kind_counts()
        assert counts[PairKind.SS_SAME] == 0
        assert counts[PairKind.TT_SAME] == 0
        for kind in (PairKind.ST_SAME, PairKind.SS_DIFF, PairKind.ST_DIFF,
                     PairKind.TT_DIFF):
            assert counts[kind] >= 1
        assert len(ds) == count_pairs([1, 1, 1], [1, 1, 1]) - 6

    def test_all_six_kinds_with_two_per_tissue_per_scanner(self):
        src, tgt = synthetic_patch_sets((2, 2, 2), (2, 2, 2))
        ds = build_pairs(src, tgt, 10**6, 1)
        counts = ds.kind_counts()
        assert all(counts[k] >= 1 for k in ALL_KINDS)
        assert len(ds) == count_pairs([2, 2, 2], [2, 2, 2]) - 12

    def test_labels_follow_tissues(self):
        src, tgt = synthetic_patch_sets((2, 2, 2), (1, 1, 1))
        ds = build_pairs(src, tgt, 10**6, 1)
        for pair in ds.pairs:
            assert pair.y == (1 if pair.a.tissue == pair.b.tissue else 0)
            if pair.y == 1:
                assert pair.a is not pair.b

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            build_pairs([], [], 10, 1)

    def test_subsampling_is_stratified_and_deterministic(self):
        src, tgt = synthetic_patch_sets((6, 6, 6), (3, 3, 3))
        full = build_pairs(src, tgt, 10**6, 9)
        sub = build_pairs(src, tgt, 120, 9)
        assert len(sub) == 120
        full_counts = full.kind_counts()
        sub_counts = sub.kind_counts()
        for kind in ALL_KINDS:
            expected = 120 * full_counts[kind] / len(full)
            assert abs(sub_counts[kind] - expected) <= 1.0
        again = build_pairs(src, tgt, 120, 9)
        assert [id(p.a) for p in sub.pairs] == [id(p.a) for p in again.pairs]

    def test_csv_export(self, tmp_path):
        src, tgt = synthetic_patch_sets((2, 1, 1), (1, 1, 1))
        ds = build_pairs(src, tgt, 10**6, 1)
        path = tmp_path / "pairs.csv"
        write_pairs_csv(ds, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("a_x,a_y,")
        assert len(lines) == len(ds) + 1


class TestBatchIterator:
    def test_exact_divisible_case(self):
        # 600 pairs, 100 per kind, batch 60 -> every batch 10 of each kind
        pairs = []
        for kind in ALL_KINDS:
            same = "SAME" in kind.name
            for i in range(100):
                a = make_patch(TissueId.CSF, 0, i)
                b = make_patch(TissueId.CSF if same else TissueId.GM, 1, i + 500)
                pairs.append(cs.PatchPair(a, b, 1 if same else 0, kind))
        ds = cs.PairDataset(pairs, (TissueId.CSF, TissueId.GM))
        batches = batch_iterator(ds, 60, 4)
        assert len(batches) == 10
        for batch in batches:
            counts = {k: 0 for k in ALL_KINDS}
            for p in batch.pairs:
                counts[p.kind] += 1
            assert all(v == 10 for v in counts.values())

    def test_deterministic_per_epoch_seed(self, tiny_pair_dataset):
        a = batch_iterator(tiny_pair_dataset, 32, 5)
        b = batch_iterator(tiny_pair_dataset, 32, 5)
        c = batch_iterator(tiny_pair_dataset, 32, 6)
        key = lambda batches: [[id(p) for p in batch.pairs] for batch in batches]
        assert key(a) == key(b)
        assert key(a) != key(c)

    def test_union_is_dataset(self, tiny_pair_dataset):
        batches = batch_iterator(tiny_pair_dataset, 32, 5)
        seen = [id(p) for batch in batches for p in batch.pairs]
        assert sorted(seen) == sorted(id(p) for p in tiny_pair_dataset.pairs)

    def test_kind_mixing_within_one_pair(self, small_scan_pair):
        src_scan, tgt_scan = small_scan_pair
        src = extract_patches(src_scan, 25, 11)
        tgt = extract_patches(tgt_scan, 4, 12)
        ds = build_pairs(src, tgt, 2784, 13)
        props = {k: v / len(ds) for k, v in ds.kind_counts().items()}
        for epoch_seed in (0, 1):
            batches = batch_iterator(ds, 64, epoch_seed)
            for batch in batches[:-1]:
                counts = {k: 0 for k in ALL_KINDS}
                for p in batch.pairs:
                    counts[p.kind] += 1
                for kind in ALL_KINDS:
                    assert abs(counts[kind] - 64 * props[kind]) <= 1.0

    def test_fallback_single_batch(self, tiny_pair_dataset):
        batches = batch_iterator(tiny_pair_dataset, 10**6, 1)
        assert len(batches) == 1
        assert batches[0].single_batch_fallback
        assert len(batches[0]) == len(tiny_pair_dataset)

    def test_batch_size_floor(self, tiny_pair_dataset):
        with pytest.raises(ValueError):
            batch_iterator(tiny_pair_dataset, 5, 1)


class TestPairProperties:
    def test_symmetry_of_similarity(self):
        src, tgt = synthetic_patch_sets((2, 2, 2), (2, 2, 2))
        ds = build_pairs(src, tgt, 10**6, 3)
        for pair in ds.pairs:
            swapped_y = 1 if pair.b.tissue == pair.a.tissue else 0
            assert swapped_y == pair.y

    def test_no_cross_tissue_similar_pairs(self):
        src, tgt = synthetic_patch_sets((3, 3, 3), (1, 1, 1))
        ds = build_pairs(src, tgt, 10**6, 3)
        assert not any(p.y == 1 and p.a.tissue != p.b.tissue for p in ds.pairs)
