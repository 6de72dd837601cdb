"""Patch extraction and similarity-labeled pair datasets.

Patches are 15x15 intensity windows labeled by the tissue at their center.
Pairs combine two patches with a similarity label y (1 = same tissue,
0 = different tissue) and one of six kinds given by the scanners involved.

Pair enumeration convention: same-tissue pairs are ordered (both (a, b) and
(b, a) appear, identical instances excluded), while different-tissue pairs
are emitted once per the canonical tissue order with the source-target
combinations taken as (source from the earlier tissue, target from the
later).  Under this convention the full enumeration has exactly

    count_pairs(...) - sum_k (N_k + M_k)

pairs, i.e. the combination-count formula minus the self-pairs.
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InsufficientTissueError, LabelMismatchError
from .phantom import CLASSIFICATION_TISSUES, TissueId

PATCH_SIZE = 15
HALF = PATCH_SIZE // 2


class PairKind(Enum):
    SS_SAME = "SS-same"
    ST_SAME = "ST-same"
    TT_SAME = "TT-same"
    SS_DIFF = "SS-diff"
    ST_DIFF = "ST-diff"
    TT_DIFF = "TT-diff"


ALL_KINDS = tuple(PairKind)


@dataclass
class Patch:
    """One image window plus the metadata the pair sampler needs."""

    pixels: np.ndarray          # (15, 15) for image patches
    center: tuple               # (x, y) = (column, row)
    tissue: int                 # TissueId for image patches
    scanner_id: int             # 0 = source, 1 = target
    subject_seed: int = 0


@dataclass
class PatchPair:
    a: Patch
    b: Patch
    y: int
    kind: PairKind


@dataclass
class PairDataset:
    pairs: list
    class_set: tuple
    source_counts: dict = field(default_factory=dict)   # tissue -> N_k
    target_counts: dict = field(default_factory=dict)   # tissue -> M_k

    def __len__(self):
        return len(self.pairs)

    def kind_counts(self):
        counts = {kind: 0 for kind in ALL_KINDS}
        for pair in self.pairs:
            counts[pair.kind] += 1
        return counts


def valid_center_range(dim):
    """Inclusive (low, high) coordinates where a full window fits."""
    return HALF, dim - HALF - 1


def extract_patches(scan, per_tissue, sample_seed, manual_centers=None):
    """Tissue-labeled patches from one scan.

    Random mode draws exactly ``per_tissue`` centers per tissue without
    replacement among coordinates where the full window fits and the center
    label is CSF, GM or WM.  Manual mode takes (x, y, tissue) triples and
    validates each against the label map.
    """
    labels = scan.label_map.labels
    intensities = scan.intensities
    height, width = labels.shape
    x_lo, x_hi = valid_center_range(width)
    y_lo, y_hi = valid_center_range(height)

    def cut(x, y):
        return intensities[y - HALF:y + HALF + 1, x - HALF:x + HALF + 1].copy()

    out = []
    if manual_centers is not None:
        for x, y, tissue in manual_centers:
            tissue = TissueId(tissue)
            if not (x_lo <= x <= x_hi and y_lo <= y <= y_hi):
                raise ValueError(
                    f"manual center ({x}, {y}) leaves no room for a "
                    f"{PATCH_SIZE}x{PATCH_SIZE} window")
            actual = TissueId(labels[y, x])
            if actual != tissue:
                raise LabelMismatchError(
                    f"center ({x}, {y}) declared {tissue.name} but label map "
                    f"says {actual.name}")
            out.append(Patch(cut(x, y), (x, y), tissue, scan.scanner_id,
                             scan.label_map.subject_seed))
        return out

    if per_tissue < 1:
        raise ValueError(f"per_tissue must be >= 1, got {per_tissue}")
    rng = np.random.default_rng(int(sample_seed))
    interior = labels[y_lo:y_hi + 1, x_lo:x_hi + 1]
    for tissue in CLASSIFICATION_TISSUES:
        rows, cols = np.nonzero(interior == tissue)
        if len(rows) < per_tissue:
            raise InsufficientTissueError(
                f"{tissue.name}: {len(rows)} valid centers < {per_tissue} requested")
        pick = rng.choice(len(rows), size=per_tissue, replace=False)
        for idx in pick:
            x = int(cols[idx]) + x_lo
            y = int(rows[idx]) + y_lo
            out.append(Patch(cut(x, y), (x, y), tissue, scan.scanner_id,
                             scan.label_map.subject_seed))
    return out


def count_pairs(source_counts, target_counts):
    """Combination count over aligned per-tissue source/target counts.

    Same-tissue combinations are counted as the ordered square (N_k+M_k)^2,
    cross-tissue ones as N_k*N_l + N_k*M_l + M_k*M_l over unordered tissue
    pairs.  Self-pairs are included here (the sampler excludes them).
    """
    n = [int(v) for v in source_counts]
    m = [int(v) for v in target_counts]
    if len(n) != len(m):
        raise ValueError("source and target count lists must align")
    if any(v < 0 for v in n + m):
        raise ValueError("counts must be >= 0")
    total = sum((nk + mk) ** 2 for nk, mk in zip(n, m))
    for k in range(len(n)):
        for l in range(k + 1, len(n)):
            total += n[k] * n[l] + n[k] * m[l] + m[k] * m[l]
    return total


def _group_by_tissue(patches):
    groups = {}
    for patch in patches:
        groups.setdefault(patch.tissue, []).append(patch)
    return groups


def _enumerate_pairs(source_patches, target_patches):
    src = _group_by_tissue(source_patches)
    tgt = _group_by_tissue(target_patches)
    tissues = sorted(set(src) | set(tgt))
    same_kind = {(0, 0): PairKind.SS_SAME, (0, 1): PairKind.ST_SAME,
                 (1, 0): PairKind.ST_SAME, (1, 1): PairKind.TT_SAME}
    pairs = []
    for t in tissues:
        pool = src.get(t, []) + tgt.get(t, [])
        for i, a in enumerate(pool):
            for j, b in enumerate(pool):
                if i != j:
                    kind = same_kind[(a.scanner_id, b.scanner_id)]
                    pairs.append(PatchPair(a, b, 1, kind))
    for ki, t in enumerate(tissues):
        for u in tissues[ki + 1:]:
            for a in src.get(t, []):
                for b in src.get(u, []):
                    pairs.append(PatchPair(a, b, 0, PairKind.SS_DIFF))
            for a in src.get(t, []):
                for b in tgt.get(u, []):
                    pairs.append(PatchPair(a, b, 0, PairKind.ST_DIFF))
            for a in tgt.get(t, []):
                for b in tgt.get(u, []):
                    pairs.append(PatchPair(a, b, 0, PairKind.TT_DIFF))
    return pairs, tuple(tissues), src, tgt


def build_pairs(source_patches, target_patches, max_pairs, pair_seed):
    """Enumerate all pair kinds, subsampling per kind when over budget.

    Subsampling is stratified: each kind keeps its enumeration proportion
    to within one pair.  Deterministic for a given seed.
    """
    if not source_patches and not target_patches:
        raise ValueError("cannot build pairs from empty patch lists")
    if max_pairs < 1:
        raise ValueError(f"max_pairs must be >= 1, got {max_pairs}")
    pairs, tissues, src, tgt = _enumerate_pairs(source_patches, target_patches)

    if len(pairs) > max_pairs:
        rng = np.random.default_rng(int(pair_seed))
        by_kind = {kind: [] for kind in ALL_KINDS}
        for pair in pairs:
            by_kind[pair.kind].append(pair)
        quotas = _apportion(
            [len(by_kind[kind]) for kind in ALL_KINDS], max_pairs)
        kept = []
        for kind, quota in zip(ALL_KINDS, quotas):
            bucket = by_kind[kind]
            if quota >= len(bucket):
                kept.extend(bucket)
            elif quota > 0:
                pick = rng.choice(len(bucket), size=quota, replace=False)
                kept.extend(bucket[i] for i in np.sort(pick))
        pairs = kept

    source_counts = {t: len(src.get(t, [])) for t in tissues}
    target_counts = {t: len(tgt.get(t, [])) for t in tissues}
    return PairDataset(pairs, tissues, source_counts, target_counts)


def _apportion(counts, total):
    """Largest-remainder split of ``total`` proportional to ``counts``."""
    grand = sum(counts)
    if grand <= total:
        return list(counts)
    exact = [c * total / grand for c in counts]
    base = [math.floor(e) for e in exact]
    remainder = total - sum(base)
    order = sorted(range(len(counts)), key=lambda i: (base[i] - exact[i], i))
    for i in order[:remainder]:
        base[i] += 1
    return [min(b, c) for b, c in zip(base, counts)]


@dataclass
class Batch:
    index: int
    pairs: list
    single_batch_fallback: bool = False

    def __len__(self):
        return len(self.pairs)


def batch_index_plan(kind_codes, batch_size, epoch_seed):
    """Per-epoch batch index arrays with near-proportional kind mixing.

    ``kind_codes`` holds each pair's kind as its position in ALL_KINDS.
    Every kind's count in every batch is within one pair of the kind's
    proportional share of the requested batch size, and the union of all
    batches is exactly the dataset.  Returns (index arrays, fallback flag);
    a dataset smaller than the batch size collapses to a single batch.
    """
    if batch_size < 6:
        raise ValueError(f"batch_size must be >= 6, got {batch_size}")
    kind_codes = np.asarray(kind_codes)
    n = len(kind_codes)
    if n == 0:
        return [], False
    rng = np.random.default_rng(int(epoch_seed))
    if batch_size > n:
        return [rng.permutation(n)], True

    shuffled = []
    phases = []
    for code in range(len(ALL_KINDS)):
        bucket = np.nonzero(kind_codes == code)[0]
        shuffled.append(bucket[rng.permutation(len(bucket))]
                        if len(bucket) else bucket)
        phases.append(rng.random())

    n_batches = math.ceil(n / batch_size)
    bounds = [min(i * batch_size, n) for i in range(n_batches + 1)]

    def cumulative(code, boundary):
        nk = len(shuffled[code])
        return math.floor(boundary * nk / n + phases[code]) \
            - math.floor(phases[code])

    plan = []
    for i in range(n_batches):
        members = np.concatenate([
            shuffled[code][cumulative(code, bounds[i]):
                           cumulative(code, bounds[i + 1])]
            for code in range(len(ALL_KINDS))])
        plan.append(members[rng.permutation(len(members))])
    return plan, False


def batch_iterator(dataset, batch_size, epoch_seed):
    """Materialized batches for one epoch; see ``batch_index_plan``."""
    codes = [ALL_KINDS.index(pair.kind) for pair in dataset.pairs]
    plan, fallback = batch_index_plan(codes, batch_size, epoch_seed)
    return [Batch(i, [dataset.pairs[j] for j in idx], fallback)
            for i, idx in enumerate(plan)]


def _tissue_name(value):
    try:
        return TissueId(value).name
    except ValueError:
        return str(value)


def write_pairs_csv(dataset, path):
    """Audit export: one pair per row, patches re-extracted from scans on load."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a_x", "a_y", "a_scanner", "a_tissue",
                         "b_x", "b_y", "b_scanner", "b_tissue", "y", "kind"])
        for pair in dataset.pairs:
            writer.writerow([
                pair.a.center[0], pair.a.center[1], pair.a.scanner_id,
                _tissue_name(pair.a.tissue),
                pair.b.center[0], pair.b.center[1], pair.b.scanner_id,
                _tissue_name(pair.b.tissue),
                pair.y, pair.kind.value,
            ])
