"""Per-class IoU, frame mIoU, and dataset aggregation.

The averaging rule: a frame's mIoU is the arithmetic mean of per-class IoU
over the classes present in that frame's ground truth (optionally excluding
class 0 as background). Dataset summaries are the unweighted mean and
population standard deviation over per-frame mIoU values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .postprocess import contingency
from .tensor_io import LabelMask

SUMMARY_COLUMNS = ("dataset", "task", "k", "g", "miou_mean", "miou_std", "n_frames")


@dataclass(frozen=True)
class MatchReport:
    """Per-frame evaluation: class IoUs, their mean, and the raw pixel counts."""

    frame_id: str
    per_class_iou: dict
    miou: float
    pixel_counts: dict = field(default_factory=dict)


def iou_per_class(pred: LabelMask, gt: LabelMask, class_ids=None) -> dict:
    """IoU per class; classes whose union is empty are omitted."""
    table = contingency(pred, gt)
    pred_totals = {int(l): int(c) for l, c in zip(table.row_labels, table.counts.sum(axis=1))}
    gt_totals = {int(l): int(c) for l, c in zip(table.col_labels, table.counts.sum(axis=0))}
    inter = {}
    for r, rl in enumerate(table.row_labels):
        for c, cl in enumerate(table.col_labels):
            if rl == cl:
                inter[int(rl)] = int(table.counts[r, c])
    if class_ids is None:
        class_ids = sorted(set(pred_totals) | set(gt_totals))
    ious = {}
    for cid in class_ids:
        cid = int(cid)
        p = pred_totals.get(cid, 0)
        g = gt_totals.get(cid, 0)
        i = inter.get(cid, 0)
        union = p + g - i
        if union > 0:
            ious[cid] = i / union
    return ious


def miou_from_ious(per_class_iou: dict, averaged_classes) -> float:
    averaged = [c for c in averaged_classes if c in per_class_iou]
    if not averaged:
        raise ValueError("no includable class for mIoU")
    return sum(per_class_iou[c] for c in averaged) / len(averaged)


def frame_report(
    pred: LabelMask,
    gt: LabelMask,
    frame_id: str = "",
    foreground_only: bool = False,
) -> MatchReport:
    """Evaluate one frame: mIoU averages over classes present in the ground truth."""
    ious = iou_per_class(pred, gt)
    gt_classes = sorted(int(c) for c in set(gt.labels.ravel().tolist()))
    averaged = [c for c in gt_classes if not (foreground_only and c == 0)]
    if not averaged:
        raise ValueError(
            f"frame {frame_id!r}: no includable class "
            f"(foreground_only={foreground_only})"
        )
    value = miou_from_ious(ious, averaged)
    counts = {}
    for cid in sorted(ious):
        counts[cid] = {
            "gt": int((gt.labels == cid).sum()),
            "pred": int((pred.labels == cid).sum()),
            "intersection": int(((gt.labels == cid) & (pred.labels == cid)).sum()),
        }
    return MatchReport(frame_id, ious, value, counts)


def mean_and_population_std(values) -> tuple[float, float]:
    values = list(values)
    if not values:
        raise ValueError("cannot aggregate an empty sequence")
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def aggregate(reports) -> dict:
    """Dataset summary: mean and population std of per-frame mIoU, per-class means."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    mean, std = mean_and_population_std(r.miou for r in reports)
    class_values: dict[int, list[float]] = {}
    for r in reports:
        for cid, iou in r.per_class_iou.items():
            class_values.setdefault(int(cid), []).append(iou)
    per_class_mean = {
        cid: sum(vals) / len(vals) for cid, vals in sorted(class_values.items())
    }
    return {
        "miou_mean": mean,
        "miou_std": std,
        "n_frames": len(reports),
        "per_class_mean": per_class_mean,
    }


def write_report_json(report: MatchReport, path) -> None:
    payload = {
        "frame_id": report.frame_id,
        "per_class_iou": {str(c): v for c, v in sorted(report.per_class_iou.items())},
        "miou": report.miou,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_summary_csv(rows, path) -> None:
    """Rows are dicts keyed by SUMMARY_COLUMNS; values serialized at full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row.get(col, "") for col in SUMMARY_COLUMNS})
