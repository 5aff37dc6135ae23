"""Attention-alignment scoring: binarized heatmaps vs reference masks.

Scores each slice against two targets: the ground-truth mask (anatomical
faithfulness) and the model's own prediction mask (internal consistency).
All metrics are computed from integer pixel counts with a single final
division, so identical inputs give bit-identical scores.

Empty-set conventions, pinned because roughly half of real target slices
carry no vessels: IoU of two empty masks is 1.0; IoU with exactly one
empty mask is 0.0; precision/recall with an empty denominator are 0 and
the score row is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .arrays import Heatmap, Mask, MaskRole
from .errors import EmptyInput, ShapeError, ValidationError


class AlignmentTarget(Enum):
    GT = "gt"
    PM = "pm"


class AverageMode(Enum):
    MICRO = "micro"
    MACRO = "macro"


@dataclass(frozen=True)
class ThresholdSpec:
    """Strictly increasing binarization levels, each inside (0, 1)."""

    taus: tuple[float, ...] = (0.2, 0.3, 0.4)

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if not taus:
            raise ValidationError("threshold spec must contain at least one tau")
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ValidationError(f"taus must lie in (0, 1), got {taus}")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValidationError(f"taus must be strictly increasing, got {taus}")
        object.__setattr__(self, "taus", taus)


@dataclass(frozen=True)
class AlignmentScores:
    """One (slice, tau, target) score row with its raw counts."""

    tau: float
    target: AlignmentTarget
    iou: float
    f1: float
    precision: float
    recall: float
    attention_area: int
    reference_area: int
    intersection: int
    union: int
    empty_attention: bool
    empty_reference: bool

    def __post_init__(self):
        if self.union != self.attention_area + self.reference_area - self.intersection:
            raise ValidationError("inconsistent counts: |A u M| != |A| + |M| - |A n M|")


@dataclass(frozen=True)
class GapScore:
    """Internal-consistency minus faithfulness: IoU_PM - IoU_GT at one tau."""

    tau: float
    gap: float

    def __post_init__(self):
        if not -1.0 <= self.gap <= 1.0:
            raise ValidationError(f"gap must lie in [-1, 1], got {self.gap}")


@dataclass(frozen=True)
class SliceScores:
    slice_id: str
    scores: tuple[AlignmentScores, ...]
    gaps: tuple[GapScore, ...]
    gt_available: bool


@dataclass(frozen=True)
class AggregateRow:
    tau: float
    target: AlignmentTarget
    mode: AverageMode
    iou: float
    f1: float
    precision: float
    recall: float
    slice_count: int


def binarize(heatmap: Heatmap, tau: float) -> Mask:
    """Attention mask: pixel is 1 iff heatmap >= tau (inclusive)."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    return Mask(data=(heatmap.data >= tau).astype(np.uint8), role=MaskRole.BINARIZED_ATTENTION)


def _counts(a: Mask, b: Mask) -> tuple[int, int, int, int]:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mask shapes differ: {a.data.shape} vs {b.data.shape}")
    a_bool = a.data.astype(bool)
    b_bool = b.data.astype(bool)
    na = int(np.count_nonzero(a_bool))
    nb = int(np.count_nonzero(b_bool))
    inter = int(np.count_nonzero(a_bool & b_bool))
    return na, nb, inter, na + nb - inter


def iou(a: Mask, b: Mask) -> float:
    """|a n b| / |a u b|; both empty -> 1.0, exactly one empty -> 0.0."""
    na, nb, inter, union = _counts(a, b)
    if union == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    return inter / union


def precision_recall_f1(attention: Mask, reference: Mask) -> tuple[float, float, float]:
    """(precision, recall, f1) of the attention mask vs a reference mask."""
    na, nm, inter, _ = _counts(attention, reference)
    precision = inter / na if na > 0 else 0.0
    recall = inter / nm if nm > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def score_masks(attention: Mask, reference: Mask, tau: float, target: AlignmentTarget) -> AlignmentScores:
    na, nm, inter, union = _counts(attention, reference)
    overlap = 1.0 if union == 0 else (0.0 if na == 0 or nm == 0 else inter / union)
    precision = inter / na if na > 0 else 0.0
    recall = inter / nm if nm > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return AlignmentScores(
        tau=tau,
        target=target,
        iou=overlap,
        f1=f1,
        precision=precision,
        recall=recall,
        attention_area=na,
        reference_area=nm,
        intersection=inter,
        union=union,
        empty_attention=na == 0,
        empty_reference=nm == 0,
    )


def score_slice(
    heatmap: Heatmap,
    gt: Mask | None,
    pm: Mask,
    taus: ThresholdSpec = ThresholdSpec(),
) -> SliceScores:
    """Full threshold sweep for one slice against both targets.

    GT rows are skipped (and the result flagged) when no ground truth
    is available; gap rows need both targets, so they are skipped too.
    """
    scores: list[AlignmentScores] = []
    gaps: list[GapScore] = []
    for tau in taus.taus:
        attention = binarize(heatmap, tau)
        pm_row = score_masks(attention, pm, tau, AlignmentTarget.PM)
        if gt is not None:
            gt_row = score_masks(attention, gt, tau, AlignmentTarget.GT)
            scores.append(gt_row)
            gaps.append(GapScore(tau=tau, gap=pm_row.iou - gt_row.iou))
        scores.append(pm_row)
    return SliceScores(
        slice_id=heatmap.slice_id,
        scores=tuple(scores),
        gaps=tuple(gaps),
        gt_available=gt is not None,
    )


def aggregate_scores(per_slice: list[SliceScores]) -> list[AggregateRow]:
    """Micro (pooled counts) and macro (mean of per-slice metrics) tables.

    Both averaging modes are emitted because summary tables rarely state
    which average produced them; downstream reports label each row.
    """
    if not per_slice:
        raise EmptyInput("aggregate_scores needs at least one slice")
    grouped: dict[tuple[float, AlignmentTarget], list[AlignmentScores]] = {}
    for slice_scores in per_slice:
        for row in slice_scores.scores:
            grouped.setdefault((row.tau, row.target), []).append(row)

    rows: list[AggregateRow] = []
    for (tau, target), members in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        n = len(members)
        na = sum(r.attention_area for r in members)
        nm = sum(r.reference_area for r in members)
        inter = sum(r.intersection for r in members)
        union = sum(r.union for r in members)
        micro_iou = 1.0 if union == 0 else (0.0 if na == 0 or nm == 0 else inter / union)
        micro_p = inter / na if na > 0 else 0.0
        micro_r = inter / nm if nm > 0 else 0.0
        micro_f1 = 2.0 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r > 0 else 0.0
        rows.append(
            AggregateRow(
                tau=tau, target=target, mode=AverageMode.MICRO,
                iou=micro_iou, f1=micro_f1, precision=micro_p, recall=micro_r,
                slice_count=n,
            )
        )
        rows.append(
            AggregateRow(
                tau=tau, target=target, mode=AverageMode.MACRO,
                iou=float(np.mean([r.iou for r in members])),
                f1=float(np.mean([r.f1 for r in members])),
                precision=float(np.mean([r.precision for r in members])),
                recall=float(np.mean([r.recall for r in members])),
                slice_count=n,
            )
        )
    return rows
