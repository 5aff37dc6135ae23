"""Assemble module outputs into machine- and human-readable artifacts.

The renderer is presentation-only: every number in a rendering comes
from the structured report, so numeric provenance stays single-sourced.
Output bytes are deterministic for a fixed report (sorted JSON keys,
fixed float formats, no timestamps).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .alignment import AggregateRow, AlignmentTarget, AverageMode, SliceScores, AlignmentScores, GapScore
from .domain_gap import (
    DiameterStats,
    DomainGapReport,
    IntensityStats,
    NoiseStats,
    ResolutionDelta,
)
from .errors import SectionError
from .taxonomy import (
    Category,
    GroupRow,
    Quadrant,
    SliceRecord,
    TaxonomyDistribution,
    VolumeDice,
)

SECTIONS = ("domain_gap", "alignment", "gap", "taxonomy", "joint", "volume_dice")


@dataclass(frozen=True)
class Provenance:
    version: str
    config: dict
    seed: int | None = None


@dataclass(frozen=True)
class GapSummaryRow:
    tau: float
    mode: AverageMode
    iou_gt: float
    iou_pm: float
    gap: float


@dataclass
class RunReport:
    provenance: Provenance
    domain_gap: DomainGapReport | None = None
    per_slice_scores: list[SliceScores] = field(default_factory=list)
    aggregate: list[AggregateRow] = field(default_factory=list)
    gap_summary: list[GapSummaryRow] = field(default_factory=list)
    slice_records: list[SliceRecord] = field(default_factory=list)
    distribution: TaxonomyDistribution | None = None
    volume_dice: VolumeDice | None = None

    def present_sections(self) -> list[str]:
        present = []
        if self.domain_gap is not None:
            present.append("domain_gap")
        if self.per_slice_scores or self.aggregate:
            present.append("alignment")
        if self.gap_summary:
            present.append("gap")
        if self.distribution is not None:
            present.append("taxonomy")
            present.append("joint")
        if self.volume_dice is not None:
            present.append("volume_dice")
        return present


def gap_summary_from_aggregate(rows: list[AggregateRow]) -> list[GapSummaryRow]:
    """Dataset-level gap rows (IoU_PM - IoU_GT) per (tau, averaging mode)."""
    by_key: dict[tuple[float, AverageMode], dict[AlignmentTarget, float]] = {}
    for row in rows:
        by_key.setdefault((row.tau, row.mode), {})[row.target] = row.iou
    out = []
    for (tau, mode), targets in sorted(by_key.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        if AlignmentTarget.GT in targets and AlignmentTarget.PM in targets:
            iou_gt = targets[AlignmentTarget.GT]
            iou_pm = targets[AlignmentTarget.PM]
            out.append(GapSummaryRow(tau=tau, mode=mode, iou_gt=iou_gt, iou_pm=iou_pm, gap=iou_pm - iou_gt))
    return out


# ---------------------------------------------------------------------------
# Dict round trip


def _intensity_to_dict(s: IntensityStats) -> dict:
    return {
        "window_lo": s.window_lo,
        "window_hi": s.window_hi,
        "mean": s.mean,
        "std": s.std,
        "voxel_count": s.voxel_count,
    }


def _intensity_from_dict(d: dict) -> IntensityStats:
    return IntensityStats(**d)


def _noise_to_dict(s: NoiseStats) -> dict:
    return {
        "noise_std": s.noise_std,
        "method": s.method,
        "patch_stds": list(s.patch_stds),
        "patch_air_counts": list(s.patch_air_counts),
    }


def _noise_from_dict(d: dict) -> NoiseStats:
    return NoiseStats(
        noise_std=d["noise_std"],
        method=d["method"],
        patch_stds=tuple(d["patch_stds"]),
        patch_air_counts=tuple(d["patch_air_counts"]),
    )


def _diam_to_dict(s: DiameterStats | None) -> dict | None:
    if s is None:
        return None
    return {
        "mean": s.mean,
        "median": s.median,
        "std": s.std,
        "min": s.min,
        "max": s.max,
        "p99": s.p99,
        "sample_count": s.sample_count,
    }


def _diam_from_dict(d: dict | None) -> DiameterStats | None:
    return None if d is None else DiameterStats(**d)


def _domain_gap_to_dict(r: DomainGapReport) -> dict:
    return {
        "source_intensity": _intensity_to_dict(r.source_intensity),
        "target_intensity": _intensity_to_dict(r.target_intensity),
        "resolution": {
            "source_spacing_mm": list(r.resolution.source_spacing_mm),
            "target_spacing_mm": list(r.resolution.target_spacing_mm),
            "percent_diff": list(r.resolution.percent_diff),
        },
        "source_noise": _noise_to_dict(r.source_noise),
        "target_noise": _noise_to_dict(r.target_noise),
        "noise_ratio": r.noise_ratio,
        "source_diameters": _diam_to_dict(r.source_diameters),
        "target_diameters": _diam_to_dict(r.target_diameters),
    }


def _domain_gap_from_dict(d: dict) -> DomainGapReport:
    res = d["resolution"]
    return DomainGapReport(
        source_intensity=_intensity_from_dict(d["source_intensity"]),
        target_intensity=_intensity_from_dict(d["target_intensity"]),
        resolution=ResolutionDelta(
            source_spacing_mm=tuple(res["source_spacing_mm"]),
            target_spacing_mm=tuple(res["target_spacing_mm"]),
            percent_diff=tuple(res["percent_diff"]),
        ),
        source_noise=_noise_from_dict(d["source_noise"]),
        target_noise=_noise_from_dict(d["target_noise"]),
        noise_ratio=d["noise_ratio"],
        source_diameters=_diam_from_dict(d["source_diameters"]),
        target_diameters=_diam_from_dict(d["target_diameters"]),
    )


def _score_to_dict(row: AlignmentScores) -> dict:
    return {
        "tau": row.tau,
        "target": row.target.value,
        "iou": row.iou,
        "f1": row.f1,
        "precision": row.precision,
        "recall": row.recall,
        "attention_area": row.attention_area,
        "reference_area": row.reference_area,
        "intersection": row.intersection,
        "union": row.union,
        "empty_attention": row.empty_attention,
        "empty_reference": row.empty_reference,
    }


def _score_from_dict(d: dict) -> AlignmentScores:
    d = dict(d)
    d["target"] = AlignmentTarget(d["target"])
    return AlignmentScores(**d)


def _slice_scores_to_dict(s: SliceScores) -> dict:
    return {
        "slice_id": s.slice_id,
        "gt_available": s.gt_available,
        "scores": [_score_to_dict(row) for row in s.scores],
        "gaps": [{"tau": g.tau, "gap": g.gap} for g in s.gaps],
    }


def _slice_scores_from_dict(d: dict) -> SliceScores:
    return SliceScores(
        slice_id=d["slice_id"],
        gt_available=d["gt_available"],
        scores=tuple(_score_from_dict(x) for x in d["scores"]),
        gaps=tuple(GapScore(tau=x["tau"], gap=x["gap"]) for x in d["gaps"]),
    )


def _group_row_to_dict(r: GroupRow) -> dict:
    return {"label": r.label, "count": r.count, "pct": r.pct, "mean_dice": r.mean_dice, "mean_f1": r.mean_f1}


def _distribution_to_dict(d: TaxonomyDistribution) -> dict:
    return {
        "total": d.total,
        "categories": [_group_row_to_dict(r) for r in d.categories],
        "quadrant_total": d.quadrant_total,
        "quadrants": [_group_row_to_dict(r) for r in d.quadrants],
    }


def _distribution_from_dict(d: dict) -> TaxonomyDistribution:
    return TaxonomyDistribution(
        total=d["total"],
        categories=tuple(GroupRow(**r) for r in d["categories"]),
        quadrant_total=d["quadrant_total"],
        quadrants=tuple(GroupRow(**r) for r in d["quadrants"]),
    )


def _record_to_dict(r: SliceRecord) -> dict:
    return {
        "slice_id": r.slice_id,
        "dice": r.dice,
        "xai_f1": r.xai_f1,
        "gt_vessel_count": r.gt_vessel_count,
        "pred_vessel_count": r.pred_vessel_count,
        "category": r.category.value,
        "quadrant": r.quadrant.value if r.quadrant is not None else None,
    }


def _record_from_dict(d: dict) -> SliceRecord:
    return SliceRecord(
        slice_id=d["slice_id"],
        dice=d["dice"],
        xai_f1=d["xai_f1"],
        gt_vessel_count=d["gt_vessel_count"],
        pred_vessel_count=d["pred_vessel_count"],
        category=Category(d["category"]),
        quadrant=Quadrant(d["quadrant"]) if d["quadrant"] is not None else None,
    )


def report_to_dict(report: RunReport) -> dict:
    return {
        "provenance": {
            "version": report.provenance.version,
            "config": report.provenance.config,
            "seed": report.provenance.seed,
        },
        "domain_gap": _domain_gap_to_dict(report.domain_gap) if report.domain_gap else None,
        "per_slice_scores": [_slice_scores_to_dict(s) for s in report.per_slice_scores],
        "aggregate": [
            {
                "tau": r.tau,
                "target": r.target.value,
                "mode": r.mode.value,
                "iou": r.iou,
                "f1": r.f1,
                "precision": r.precision,
                "recall": r.recall,
                "slice_count": r.slice_count,
            }
            for r in report.aggregate
        ],
        "gap_summary": [
            {"tau": g.tau, "mode": g.mode.value, "iou_gt": g.iou_gt, "iou_pm": g.iou_pm, "gap": g.gap}
            for g in report.gap_summary
        ],
        "slice_records": [_record_to_dict(r) for r in report.slice_records],
        "distribution": _distribution_to_dict(report.distribution) if report.distribution else None,
        "volume_dice": (
            {
                "pooled": report.volume_dice.pooled,
                "case_mean": report.volume_dice.case_mean,
                "per_case": list(report.volume_dice.per_case),
                "baseline": report.volume_dice.baseline,
                "drop_pct": report.volume_dice.drop_pct,
            }
            if report.volume_dice
            else None
        ),
    }


def report_from_dict(payload: dict) -> RunReport:
    prov = payload["provenance"]
    vd = payload.get("volume_dice")
    return RunReport(
        provenance=Provenance(version=prov["version"], config=prov["config"], seed=prov.get("seed")),
        domain_gap=_domain_gap_from_dict(payload["domain_gap"]) if payload.get("domain_gap") else None,
        per_slice_scores=[_slice_scores_from_dict(s) for s in payload.get("per_slice_scores", [])],
        aggregate=[
            AggregateRow(
                tau=r["tau"],
                target=AlignmentTarget(r["target"]),
                mode=AverageMode(r["mode"]),
                iou=r["iou"],
                f1=r["f1"],
                precision=r["precision"],
                recall=r["recall"],
                slice_count=r["slice_count"],
            )
            for r in payload.get("aggregate", [])
        ],
        gap_summary=[
            GapSummaryRow(
                tau=g["tau"],
                mode=AverageMode(g["mode"]),
                iou_gt=g["iou_gt"],
                iou_pm=g["iou_pm"],
                gap=g["gap"],
            )
            for g in payload.get("gap_summary", [])
        ],
        slice_records=[_record_from_dict(r) for r in payload.get("slice_records", [])],
        distribution=_distribution_from_dict(payload["distribution"]) if payload.get("distribution") else None,
        volume_dice=(
            VolumeDice(
                pooled=vd["pooled"],
                case_mean=vd["case_mean"],
                per_case=tuple(vd["per_case"]),
                baseline=vd["baseline"],
                drop_pct=vd["drop_pct"],
            )
            if vd
            else None
        ),
    )


def report_to_json(report: RunReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_from_json(text: str) -> RunReport:
    return report_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Rendering


def _check_sections(report: RunReport, sections: list[str] | None) -> list[str]:
    present = report.present_sections()
    if sections is None:
        return present
    unknown = [s for s in sections if s not in SECTIONS]
    if unknown:
        raise SectionError(f"unknown sections requested: {unknown}")
    missing = [s for s in sections if s not in present]
    if missing:
        raise SectionError(f"sections requested but absent from report: {missing}")
    return list(sections)


def _fmt(value: float | None, spec: str = ".4f") -> str:
    return "--" if value is None else format(value, spec)


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(" --- " for _ in header) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


_AXIS_NAMES = ("X", "Y", "Z")


def render_markdown(report: RunReport, sections: list[str] | None = None) -> str:
    chosen = _check_sections(report, sections)
    config = report.provenance.config
    out: list[str] = ["# Segmentation Diagnostics Report", ""]
    out.append(f"Tool version {report.provenance.version}; seed {report.provenance.seed!r}.")
    out.append("")
    out.append("Configuration: `" + json.dumps(config, sort_keys=True) + "`")
    out.append("")

    if "domain_gap" in chosen and report.domain_gap is not None:
        gap = report.domain_gap
        si, ti = gap.source_intensity, gap.target_intensity
        out.append(
            f"## Intensity Distribution Comparison ({si.window_lo:g}-{si.window_hi:g} HU Window)"
        )
        out.append("")
        out.extend(
            _md_table(
                ["Metric", "Source", "Target"],
                [
                    ["Mean Intensity (HU)", _fmt(si.mean, ".2f"), _fmt(ti.mean, ".2f")],
                    ["Std Intensity (HU)", _fmt(si.std, ".2f"), _fmt(ti.std, ".2f")],
                ],
            )
        )
        out.append("")
        out.append("## Spatial Resolution Comparison")
        out.append("")
        res = gap.resolution
        out.extend(
            _md_table(
                ["Axis", "Source", "Target", "Difference"],
                [
                    [
                        f"{name} Resolution (mm)",
                        _fmt(res.source_spacing_mm[i], ".3f"),
                        _fmt(res.target_spacing_mm[i], ".3f"),
                        f"{res.percent_diff[i]:+.1f}%",
                    ]
                    for i, name in enumerate(_AXIS_NAMES)
                ],
            )
        )
        out.append("")
        out.append("## Background Noise Comparison")
        out.append("")
        ratio = "--" if gap.noise_ratio is None else f"{gap.noise_ratio:.1f}x"
        out.extend(
            _md_table(
                ["Metric", "Source", "Target"],
                [
                    ["Noise Std (HU)", _fmt(gap.source_noise.noise_std, ".2f"), _fmt(gap.target_noise.noise_std, ".2f")],
                    ["Noise Ratio", "--", ratio],
                ],
            )
        )
        out.append("")
        out.append(f"Noise method: {gap.source_noise.method}")
        out.append("")
        if gap.source_diameters is not None or gap.target_diameters is not None:
            out.append("## Vessel Diameter Distribution Comparison")
            out.append("")
            sd, td = gap.source_diameters, gap.target_diameters

            def col(stats: DiameterStats | None, attr: str) -> str:
                return "--" if stats is None else _fmt(getattr(stats, attr), ".2f")

            out.extend(
                _md_table(
                    ["Metric", "Source", "Target"],
                    [
                        ["Mean Diameter (mm)", col(sd, "mean"), col(td, "mean")],
                        ["Median Diameter (mm)", col(sd, "median"), col(td, "median")],
                        ["Std Deviation (mm)", col(sd, "std"), col(td, "std")],
                        ["Min Diameter (mm)", col(sd, "min"), col(td, "min")],
                        ["Max Diameter (mm)", col(sd, "max"), col(td, "max")],
                        ["99th Percentile (mm)", col(sd, "p99"), col(td, "p99")],
                    ],
                )
            )
            out.append("")

    if "volume_dice" in chosen and report.volume_dice is not None:
        vd = report.volume_dice
        out.append("## Segmentation Performance")
        out.append("")
        rows = [
            ["Dice (voxel-pooled)", _fmt(vd.pooled)],
            ["Dice (case mean)", _fmt(vd.case_mean)],
        ]
        if vd.baseline is not None:
            rows.append(["Baseline Dice", _fmt(vd.baseline)])
            rows.append(["Performance Drop", f"-{vd.drop_pct:.1f}%"])
        out.extend(_md_table(["Metric", "Value"], rows))
        out.append("")

    if "alignment" in chosen and report.aggregate:
        taus = sorted({r.tau for r in report.aggregate})
        for target, title in ((AlignmentTarget.GT, "XAI-Ground Truth Alignment (XAI n GT)"),
                              (AlignmentTarget.PM, "XAI-Prediction Mask Alignment (XAI n PM)")):
            rows_for_target = [r for r in report.aggregate if r.target is target]
            if not rows_for_target:
                continue
            out.append(f"## {title}")
            out.append("")
            out.append(f"Thresholds: {taus}; micro and macro averages both shown, labeled per row.")
            out.append("")
            table_rows = []
            for tau in taus:
                for mode in (AverageMode.MICRO, AverageMode.MACRO):
                    matches = [r for r in rows_for_target if r.tau == tau and r.mode is mode]
                    if not matches:
                        continue
                    r = matches[0]
                    table_rows.append(
                        [f"{tau:g}", mode.value, _fmt(r.iou), _fmt(r.f1), _fmt(r.precision), _fmt(r.recall)]
                    )
            out.extend(_md_table(["Threshold", "Mode", "IoU", "F1", "Precision", "Recall"], table_rows))
            out.append("")

    if "gap" in chosen and report.gap_summary:
        out.append("## Comparison of XAI Alignment Metrics")
        out.append("")
        for mode in (AverageMode.MICRO, AverageMode.MACRO):
            rows_for_mode = [g for g in report.gap_summary if g.mode is mode]
            if not rows_for_mode:
                continue
            taus = [g.tau for g in rows_for_mode]
            out.append(f"Averaging mode: {mode.value}")
            out.append("")
            header = ["Metric"] + [f"tau={t:g}" for t in taus]
            out.extend(
                _md_table(
                    header,
                    [
                        ["XAI-GT IoU"] + [_fmt(g.iou_gt) for g in rows_for_mode],
                        ["XAI-PM IoU"] + [_fmt(g.iou_pm) for g in rows_for_mode],
                        ["Gap (XAI-PM - XAI-GT)"] + [_fmt(g.gap) for g in rows_for_mode],
                    ],
                )
            )
            out.append("")

    if "taxonomy" in chosen and report.distribution is not None:
        thresholds = config.get("taxonomy_thresholds", {})
        perfect = thresholds.get("perfect_min", 0.85)
        good = thresholds.get("good_min", 0.65)
        bad = thresholds.get("bad_min", 0.4)
        bin_labels = {
            "Perfect": f"> {perfect:g}",
            "Good": f"{good:g} < Dice <= {perfect:g}",
            "Bad": f"{bad:g} < Dice <= {good:g}",
            "Worst": f"<= {bad:g}",
            "True Negative": "No vessels (correct)",
        }
        out.append("## Slice-Level Performance Distribution")
        out.append("")
        out.append(f"{report.distribution.total} slices; bins from config.")
        out.append("")
        out.extend(
            _md_table(
                ["Category", "Dice Threshold", "Count", "%"],
                [
                    [row.label, bin_labels.get(row.label, ""), str(row.count), f"{row.pct:.1f}%"]
                    for row in report.distribution.categories
                ],
            )
        )
        out.append("")

    if "joint" in chosen and report.distribution is not None:
        thresholds = config.get("taxonomy_thresholds", {})
        dice_cut = thresholds.get("joint_dice_cut", 0.5)
        f1_cut = thresholds.get("joint_f1_cut", 0.3)
        out.append("## Joint Slice-Level Analysis: Segmentation vs. Explainability Quality")
        out.append("")
        out.append(
            f"{report.distribution.quadrant_total} vessel-bearing slices; "
            f"cuts dice >= {dice_cut:g}, f1 >= {f1_cut:g} (assumed, configurable)."
        )
        out.append("")
        out.extend(
            _md_table(
                ["Category", "Count", "%", "Mean Dice", "Mean F1"],
                [
                    [row.label, str(row.count), f"{row.pct:.1f}", _fmt(row.mean_dice), _fmt(row.mean_f1)]
                    for row in report.distribution.quadrants
                ],
            )
        )
        out.append("")

    return "\n".join(out).rstrip("\n") + "\n"


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC-4180 CRLF line endings by default
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue().encode("utf-8")


def render_csv_bundle(report: RunReport, sections: list[str] | None = None) -> dict[str, bytes]:
    """CSV files keyed by filename; one row per slice x tau x target in scores.csv."""
    chosen = _check_sections(report, sections)
    files: dict[str, bytes] = {}

    if "alignment" in chosen:
        score_rows = []
        for slice_scores in report.per_slice_scores:
            for row in slice_scores.scores:
                score_rows.append(
                    [
                        slice_scores.slice_id,
                        row.tau,
                        row.target.value,
                        row.iou,
                        row.f1,
                        row.precision,
                        row.recall,
                        row.attention_area,
                        row.reference_area,
                        row.intersection,
                        row.union,
                        int(row.empty_attention),
                        int(row.empty_reference),
                    ]
                )
        files["scores.csv"] = _csv_bytes(
            [
                "slice_id", "tau", "target", "iou", "f1", "precision", "recall",
                "attention_area", "reference_area", "intersection", "union",
                "empty_attention", "empty_reference",
            ],
            score_rows,
        )
        files["aggregate.csv"] = _csv_bytes(
            ["tau", "target", "mode", "iou", "f1", "precision", "recall", "slice_count"],
            [
                [r.tau, r.target.value, r.mode.value, r.iou, r.f1, r.precision, r.recall, r.slice_count]
                for r in report.aggregate
            ],
        )

    if "gap" in chosen:
        files["gap.csv"] = _csv_bytes(
            ["tau", "mode", "iou_gt", "iou_pm", "gap"],
            [[g.tau, g.mode.value, g.iou_gt, g.iou_pm, g.gap] for g in report.gap_summary],
        )

    if "taxonomy" in chosen and report.distribution is not None:
        files["slices.csv"] = _csv_bytes(
            ["slice_id", "dice", "xai_f1", "gt_vessel_count", "pred_vessel_count", "category", "quadrant"],
            [
                [
                    r.slice_id,
                    r.dice,
                    r.xai_f1,
                    r.gt_vessel_count,
                    r.pred_vessel_count,
                    r.category.value,
                    r.quadrant.value if r.quadrant else None,
                ]
                for r in report.slice_records
            ],
        )
        files["taxonomy.csv"] = _csv_bytes(
            ["category", "count", "pct", "mean_dice", "mean_f1"],
            [[r.label, r.count, r.pct, r.mean_dice, r.mean_f1] for r in report.distribution.categories],
        )

    if "joint" in chosen and report.distribution is not None:
        files["joint.csv"] = _csv_bytes(
            ["quadrant", "count", "pct", "mean_dice", "mean_f1"],
            [[r.label, r.count, r.pct, r.mean_dice, r.mean_f1] for r in report.distribution.quadrants],
        )

    if "domain_gap" in chosen and report.domain_gap is not None:
        gap = report.domain_gap
        rows = [
            ["mean_intensity_hu", gap.source_intensity.mean, gap.target_intensity.mean],
            ["std_intensity_hu", gap.source_intensity.std, gap.target_intensity.std],
            ["noise_std_hu", gap.source_noise.noise_std, gap.target_noise.noise_std],
            ["noise_ratio", None, gap.noise_ratio],
        ]
        for i, name in enumerate(("x", "y", "z")):
            rows.append(
                [
                    f"{name}_resolution_mm",
                    gap.resolution.source_spacing_mm[i],
                    gap.resolution.target_spacing_mm[i],
                ]
            )
            rows.append([f"{name}_resolution_diff_pct", None, gap.resolution.percent_diff[i]])
        if gap.source_diameters or gap.target_diameters:
            for attr in ("mean", "median", "std", "min", "max", "p99"):
                rows.append(
                    [
                        f"diameter_{attr}_mm",
                        getattr(gap.source_diameters, attr) if gap.source_diameters else None,
                        getattr(gap.target_diameters, attr) if gap.target_diameters else None,
                    ]
                )
        files["domain_gap.csv"] = _csv_bytes(["metric", "source", "target"], rows)

    return files


def render(
    report: RunReport,
    fmt: str,
    out_dir: str | Path,
    sections: list[str] | None = None,
) -> list[Path]:
    """Write the report in one format; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if fmt == "json":
        _check_sections(report, sections)
        path = out_dir / "report.json"
        path.write_bytes(report_to_json(report).encode("utf-8"))
        written.append(path)
    elif fmt == "markdown":
        path = out_dir / "report.md"
        path.write_bytes(render_markdown(report, sections).encode("utf-8"))
        written.append(path)
    elif fmt == "csv-bundle":
        for name, payload in sorted(render_csv_bundle(report, sections).items()):
            path = out_dir / name
            path.write_bytes(payload)
            written.append(path)
    else:
        raise SectionError(f"unknown format {fmt!r}; expected json, markdown, or csv-bundle")
    return written
