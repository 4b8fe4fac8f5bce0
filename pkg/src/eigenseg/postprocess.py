"""Mask upscaling and prediction-to-class matching.

Upscaling offers two modes:

* nearest-exact: every output pixel copies the source label at index
  min(floor((i_dst + 0.5) * h / H), h - 1) per axis (half-pixel-offset
  nearest indexing);
* majority: every output pixel votes among the (at most) 2x2 source cells
  its footprint overlaps, weighted by overlap area, with ties resolved by
  nearest cell and then smallest label. At integer scale factors the
  footprint sits inside a single source cell, so both modes agree there.

All index and tie computations use integer arithmetic so results are exact
and platform-independent.

Matching assigns predicted labels to ground-truth classes from their joint
pixel-count table, either injectively (Hungarian, maximizing matched pixels)
or many-to-one (each prediction to its most-overlapped class).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor_io import LabelMask

ONE_TO_ONE = "one-to-one"
MANY_TO_ONE = "many-to-one"


def _check_upscale(mask: LabelMask, out_h: int, out_w: int) -> None:
    if out_h < mask.height or out_w < mask.width:
        raise ValueError(
            f"downscaling {mask.height}x{mask.width} -> {out_h}x{out_w} "
            "is unsupported"
        )


def _nearest_indices(n_src: int, n_dst: int) -> np.ndarray:
    i = np.arange(n_dst, dtype=np.int64)
    idx = ((2 * i + 1) * n_src) // (2 * n_dst)
    return np.minimum(idx, n_src - 1)


def upscale_nearest_exact(mask: LabelMask, out_h: int, out_w: int) -> LabelMask:
    _check_upscale(mask, out_h, out_w)
    rows = _nearest_indices(mask.height, out_h)
    cols = _nearest_indices(mask.width, out_w)
    return LabelMask(out_h, out_w, mask.labels[np.ix_(rows, cols)])


def _axis_overlaps(n_src: int, n_dst: int):
    """Footprint overlap bookkeeping for one axis, all in integer units of 1/n_dst.

    Returns (cell0, cell1, weight0, weight1, tiedist0, tiedist1) where cellX are
    clamped source indices, weightX the overlap lengths of the destination
    footprint with those cells, and tiedistX proportional absolute distances
    from the footprint center to the cell centers.
    """
    i = np.arange(n_dst, dtype=np.int64)
    lo = i * n_src
    hi = (i + 1) * n_src
    cell0 = ((2 * i + 1) * n_src - n_dst) // (2 * n_dst)  # floor of center position
    cell1 = cell0 + 1
    weights = []
    tiedists = []
    for cell in (cell0, cell1):
        left = np.maximum(lo, cell * n_dst)
        right = np.minimum(hi, (cell + 1) * n_dst)
        weights.append(np.maximum(right - left, 0))
        tiedists.append(np.abs((2 * i + 1) * n_src - (2 * cell + 1) * n_dst))
    clamp = lambda c: np.clip(c, 0, n_src - 1)
    return clamp(cell0), clamp(cell1), weights[0], weights[1], tiedists[0], tiedists[1]


def upscale_majority(mask: LabelMask, out_h: int, out_w: int) -> LabelMask:
    _check_upscale(mask, out_h, out_w)
    r0, r1, wr0, wr1, dr0, dr1 = _axis_overlaps(mask.height, out_h)
    c0, c1, wc0, wc1, dc0, dc1 = _axis_overlaps(mask.width, out_w)
    src = mask.labels.astype(np.int64)

    # squared distances share the denominator (2*out_h*2*out_w)^2, so the
    # integer cross terms below compare exactly
    h2 = np.int64(out_h) ** 2
    w2 = np.int64(out_w) ** 2
    slots = []
    for rc, wr, dr in ((r0, wr0, dr0), (r1, wr1, dr1)):
        for cc, wc, dc in ((c0, wc0, dc0), (c1, wc1, dc1)):
            labels = src[np.ix_(rc, cc)]
            weight = wr[:, None] * wc[None, :]
            dist2 = (dr[:, None] ** 2) * w2 + (dc[None, :] ** 2) * h2
            slots.append([labels, weight, dist2])

    # merge slots carrying the same label: weights add, tie distance is the min
    for a in range(4):
        for b in range(a + 1, 4):
            la, wa, da = slots[a]
            lb, wb, db = slots[b]
            same = (la == lb) & (wa > 0) & (wb > 0)
            wa_new = np.where(same, wa + wb, wa)
            slots[a][1] = wa_new
            slots[b][1] = np.where(same, 0, wb)
            slots[a][2] = np.where(same, np.minimum(da, db), da)

    labels = np.stack([s[0] for s in slots])
    weights = np.stack([s[1] for s in slots])
    dist2 = np.stack([s[2] for s in slots])

    valid = weights > 0
    neg = np.int64(-1)
    wmax = np.where(valid, weights, neg).max(axis=0)
    cand = valid & (weights == wmax[None, :, :])
    big = dist2.max() + 1
    dmin = np.where(cand, dist2, big).min(axis=0)
    cand &= dist2 == dmin[None, :, :]
    out = np.where(cand, labels, np.int64(np.iinfo(np.int64).max)).min(axis=0)
    return LabelMask(out_h, out_w, out.astype(np.int32))


@dataclass(frozen=True)
class ContingencyTable:
    """Joint pixel counts: rows are predicted labels, columns ground-truth classes."""

    row_labels: np.ndarray
    col_labels: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.shape != (self.row_labels.size, self.col_labels.size):
            raise ValueError("counts shape does not match label axes")
        if self.counts.size and self.counts.min() < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def is_square(self) -> bool:
        return self.row_labels.size == self.col_labels.size


@dataclass(frozen=True)
class Assignment:
    """Predicted-label to ground-truth-class map."""

    mapping: dict
    mode: str

    def __post_init__(self):
        if self.mode not in (ONE_TO_ONE, MANY_TO_ONE):
            raise ValueError(f"unknown assignment mode {self.mode!r}")
        if self.mode == ONE_TO_ONE:
            targets = list(self.mapping.values())
            if len(set(targets)) != len(targets):
                raise ValueError("one-to-one assignment must be injective")


def contingency(pred: LabelMask, gt: LabelMask) -> ContingencyTable:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"shape mismatch: pred {pred.height}x{pred.width} vs "
            f"gt {gt.height}x{gt.width}"
        )
    row_labels, row_idx = np.unique(pred.labels, return_inverse=True)
    col_labels, col_idx = np.unique(gt.labels, return_inverse=True)
    flat = row_idx.ravel() * col_labels.size + col_idx.ravel()
    counts = np.bincount(flat, minlength=row_labels.size * col_labels.size)
    return ContingencyTable(
        row_labels.astype(np.int64),
        col_labels.astype(np.int64),
        counts.reshape(row_labels.size, col_labels.size).astype(np.int64),
    )


def match_hungarian(table: ContingencyTable) -> Assignment:
    """Injective matching maximizing total matched pixels (min-cost on negated counts)."""
    if not table.is_square():
        raise ValueError(
            f"Hungarian matching needs a square table, got "
            f"{table.row_labels.size}x{table.col_labels.size}"
        )
    rows, cols = linear_sum_assignment(-table.counts)
    mapping = {
        int(table.row_labels[r]): int(table.col_labels[c])
        for r, c in zip(rows, cols)
    }
    return Assignment(mapping, ONE_TO_ONE)


def match_majority(table: ContingencyTable) -> Assignment:
    """Each predicted label goes to its most-overlapped class, ties to the smallest id."""
    mapping = {}
    for r, label in enumerate(table.row_labels):
        # argmax returns the first maximum; col_labels ascend, so ties pick
        # the smallest class id
        mapping[int(label)] = int(table.col_labels[int(table.counts[r].argmax())])
    return Assignment(mapping, MANY_TO_ONE)


def relabel(pred: LabelMask, assignment: Assignment) -> LabelMask:
    present = np.unique(pred.labels)
    missing = [int(p) for p in present if int(p) not in assignment.mapping]
    if missing:
        raise ValueError(f"assignment does not cover predicted labels {missing}")
    lut = np.zeros(int(present.max()) + 1, dtype=np.int32)
    for src, dst in assignment.mapping.items():
        if 0 <= src <= present.max():
            lut[src] = dst
    return LabelMask(pred.height, pred.width, lut[pred.labels])
