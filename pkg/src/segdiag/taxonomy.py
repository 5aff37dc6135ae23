"""Slice-level Dice taxonomy and the joint segmentation-vs-attention quadrants.

Slices partition into five performance categories by Dice (with the
empty-slice special cases pinned below), and vessel-bearing slices
additionally land in one of four quadrants by thresholding Dice and the
attention F1 score. Slices with no ground-truth vessels have no
quadrant; quadrant percentages are over vessel-bearing slices only.

Pinned conventions: a slice with no ground-truth vessels and an empty
prediction is TrueNegative; with a nonempty prediction it is Worst with
Dice recorded as 0 (the only bin admitting Dice <= 0.4). Quadrant cuts
default to dice >= 0.5 and f1 >= 0.3 (inclusive) and are configurable;
reports flag them as assumptions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .arrays import Mask
from .errors import EmptyInput, ShapeError, ValidationError


class Category(Enum):
    PERFECT = "perfect"
    GOOD = "good"
    BAD = "bad"
    WORST = "worst"
    TRUE_NEGATIVE = "true_negative"


class Quadrant(Enum):
    GG = "GG"  # good dice, good xai
    GB = "GB"  # good dice, bad xai
    BG = "BG"  # bad dice, good xai
    BB = "BB"  # bad dice, bad xai


CATEGORY_ORDER = (Category.PERFECT, Category.GOOD, Category.BAD, Category.WORST, Category.TRUE_NEGATIVE)
QUADRANT_ORDER = (Quadrant.GG, Quadrant.GB, Quadrant.BG, Quadrant.BB)

CATEGORY_LABELS = {
    Category.PERFECT: "Perfect",
    Category.GOOD: "Good",
    Category.BAD: "Bad",
    Category.WORST: "Worst",
    Category.TRUE_NEGATIVE: "True Negative",
}

QUADRANT_LABELS = {
    Quadrant.GG: "Good Dice & Good XAI",
    Quadrant.GB: "Good Dice & Bad XAI",
    Quadrant.BG: "Bad Dice & Good XAI",
    Quadrant.BB: "Bad Dice & Bad XAI",
}


@dataclass(frozen=True)
class TaxonomyThresholds:
    """Dice bin edges (> perfect_min, then half-open bins down) and joint cuts."""

    perfect_min: float = 0.85
    good_min: float = 0.65
    bad_min: float = 0.4
    joint_dice_cut: float = 0.5
    joint_f1_cut: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.bad_min < self.good_min < self.perfect_min <= 1.0:
            raise ValidationError(
                f"dice cut points must be strictly ordered in [0, 1], got "
                f"({self.bad_min}, {self.good_min}, {self.perfect_min})"
            )


@dataclass(frozen=True)
class SliceRecord:
    """Per-slice bookkeeping row feeding the distribution tables."""

    slice_id: str
    dice: float | None
    xai_f1: float | None
    gt_vessel_count: int
    pred_vessel_count: int
    category: Category
    quadrant: Quadrant | None


@dataclass(frozen=True)
class GroupRow:
    label: str
    count: int
    pct: float
    mean_dice: float | None
    mean_f1: float | None


@dataclass(frozen=True)
class TaxonomyDistribution:
    total: int
    categories: tuple[GroupRow, ...]
    quadrant_total: int
    quadrants: tuple[GroupRow, ...]


@dataclass(frozen=True)
class VolumeDice:
    pooled: float
    case_mean: float
    per_case: tuple[float, ...]
    baseline: float | None
    drop_pct: float | None


def dice(pred: Mask, gt: Mask) -> float:
    """2|P n G| / (|P| + |G|); two empty masks define Dice = 1.0."""
    if pred.data.shape != gt.data.shape:
        raise ShapeError(f"mask shapes differ: {pred.data.shape} vs {gt.data.shape}")
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    np_count = int(np.count_nonzero(p))
    ng = int(np.count_nonzero(g))
    if np_count + ng == 0:
        return 1.0
    inter = int(np.count_nonzero(p & g))
    return 2.0 * inter / (np_count + ng)


def classify_slice(
    dice_value: float | None,
    gt_count: int,
    pred_count: int,
    thresholds: TaxonomyThresholds = TaxonomyThresholds(),
) -> Category:
    """Category from Dice bins plus the empty-slice special cases."""
    if gt_count == 0:
        return Category.TRUE_NEGATIVE if pred_count == 0 else Category.WORST
    if dice_value is None:
        raise ValidationError("dice required to classify a vessel-bearing slice")
    if dice_value > thresholds.perfect_min:
        return Category.PERFECT
    if dice_value > thresholds.good_min:
        return Category.GOOD
    if dice_value > thresholds.bad_min:
        return Category.BAD
    return Category.WORST


def joint_classify(
    dice_value: float,
    xai_f1: float,
    dice_cut: float = 0.5,
    f1_cut: float = 0.3,
) -> Quadrant:
    """Quadrant by inclusive cuts; only meaningful for vessel-bearing slices."""
    good_dice = dice_value >= dice_cut
    good_xai = xai_f1 >= f1_cut
    if good_dice:
        return Quadrant.GG if good_xai else Quadrant.GB
    return Quadrant.BG if good_xai else Quadrant.BB


def make_record(
    slice_id: str,
    dice_value: float | None,
    xai_f1: float | None,
    gt_count: int,
    pred_count: int,
    thresholds: TaxonomyThresholds = TaxonomyThresholds(),
) -> SliceRecord:
    """Build a SliceRecord, applying the pinned empty-slice conventions."""
    if gt_count == 0:
        recorded_dice = None if pred_count == 0 else 0.0
    else:
        recorded_dice = dice_value
    category = classify_slice(recorded_dice, gt_count, pred_count, thresholds)
    quadrant = None
    if gt_count > 0 and recorded_dice is not None and xai_f1 is not None:
        quadrant = joint_classify(recorded_dice, xai_f1, thresholds.joint_dice_cut, thresholds.joint_f1_cut)
    return SliceRecord(
        slice_id=slice_id,
        dice=recorded_dice,
        xai_f1=xai_f1,
        gt_vessel_count=gt_count,
        pred_vessel_count=pred_count,
        category=category,
        quadrant=quadrant,
    )


def _group_row(label: str, members_dice: list[float], members_f1: list[float], count: int, total: int) -> GroupRow:
    return GroupRow(
        label=label,
        count=count,
        pct=count / total * 100.0 if total > 0 else 0.0,
        mean_dice=float(np.mean(members_dice)) if members_dice else None,
        mean_f1=float(np.mean(members_f1)) if members_f1 else None,
    )


def distribution(records: list[SliceRecord]) -> TaxonomyDistribution:
    """Category and quadrant percentage tables with per-group means."""
    if not records:
        raise EmptyInput("distribution needs at least one slice record")
    total = len(records)
    category_rows = []
    for category in CATEGORY_ORDER:
        members = [r for r in records if r.category is category]
        category_rows.append(
            _group_row(
                CATEGORY_LABELS[category],
                [r.dice for r in members if r.dice is not None],
                [r.xai_f1 for r in members if r.xai_f1 is not None],
                len(members),
                total,
            )
        )

    quadrant_members = [r for r in records if r.quadrant is not None]
    quadrant_total = len(quadrant_members)
    quadrant_rows = []
    for quadrant in QUADRANT_ORDER:
        members = [r for r in quadrant_members if r.quadrant is quadrant]
        quadrant_rows.append(
            _group_row(
                QUADRANT_LABELS[quadrant],
                [r.dice for r in members if r.dice is not None],
                [r.xai_f1 for r in members if r.xai_f1 is not None],
                len(members),
                quadrant_total,
            )
        )
    return TaxonomyDistribution(
        total=total,
        categories=tuple(category_rows),
        quadrant_total=quadrant_total,
        quadrants=tuple(quadrant_rows),
    )


def volume_dice(
    pred_masks: list[Mask],
    gt_masks: list[Mask],
    baseline: float | None = None,
) -> VolumeDice:
    """Dataset Dice pooled over all voxels, plus the per-case mean.

    The pooled value is the primary figure; the case mean is auxiliary
    because a dataset-level Dice rarely states which convention made it. With a
    source ``baseline``, the relative drop (1 - pooled/baseline) * 100
    is attached.
    """
    if len(pred_masks) != len(gt_masks) or not pred_masks:
        raise ValidationError(
            f"need equal nonempty mask lists, got {len(pred_masks)} predictions vs {len(gt_masks)} references"
        )
    inter_total = 0
    size_total = 0
    per_case: list[float] = []
    for pred, gt in zip(pred_masks, gt_masks):
        if pred.data.shape != gt.data.shape:
            raise ValidationError(f"pair shape mismatch: {pred.data.shape} vs {gt.data.shape}")
        p = pred.data.astype(bool)
        g = gt.data.astype(bool)
        inter = int(np.count_nonzero(p & g))
        size = int(np.count_nonzero(p)) + int(np.count_nonzero(g))
        inter_total += inter
        size_total += size
        per_case.append(1.0 if size == 0 else 2.0 * inter / size)
    pooled = 1.0 if size_total == 0 else 2.0 * inter_total / size_total
    drop = performance_drop(baseline, pooled) if baseline is not None else None
    return VolumeDice(
        pooled=pooled,
        case_mean=float(np.mean(per_case)),
        per_case=tuple(per_case),
        baseline=baseline,
        drop_pct=drop,
    )


def performance_drop(source_dice: float, target_dice: float) -> float:
    """(1 - target/source) * 100."""
    if source_dice <= 0:
        raise ValidationError(f"source dice must be > 0 to compute a drop, got {source_dice}")
    return (1.0 - target_dice / source_dice) * 100.0
