"""Command-line entry point for the two-phase diagnostic pipeline.

Subcommands: domain-gap, saliency, evaluate, taxonomy, phantom, report.
Defaults are frozen to the evaluation operating point: thresholds
{0.2, 0.3, 0.4} with 0.3 primary, gradient pooling window 1, and the
seven-layer set encoder.4/encoder.5/decoder.0..decoder.4.

Settings resolve as: explicit flag > --config JSON file > built-in
default; the SEGDIAG_WORKERS environment variable overrides the worker
count last. Exit codes: 0 success, 1 validation error, 2 internal
error; errors print one ``ERROR <Type>: <message>`` line to stderr.

Slices are processed by a thread pool over immutable inputs and merged
in slice-id order, so the worker count never changes the output bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import AlignmentTarget, ThresholdSpec, aggregate_scores, score_slice
from .arrays import (
    MaskRole,
    load_heatmap,
    load_manifest,
    load_mask,
    load_volume,
    save_heatmap,
    save_mask,
    save_volume,
    validate_pair,
)
from .domain_gap import (
    combine_moments,
    dataset_noise,
    diameter_samples,
    diameter_stats,
    domain_gap_report,
    estimate_background_noise,
    intensity_moments,
    IntensityStats,
    resolution_compare,
)
from .errors import EmptyInput, PairingError, SegDiagError, SidecarError, ValidationError
from .phantom import Cylinder, PhantomSpec, generate_phantom
from .report import (
    Provenance,
    RunReport,
    gap_summary_from_aggregate,
    render,
    report_from_json,
)
from .saliency import (
    LayerSet,
    PoolSpec,
    compute_pipeline,
    METHOD_CHANNEL_WEIGHTS,
    METHOD_POOLED_GRADIENTS,
)
from .taxonomy import TaxonomyThresholds, dice, distribution, make_record, volume_dice

WORKERS_ENV = "SEGDIAG_WORKERS"
DEFAULT_TAUS = (0.2, 0.3, 0.4)
DEFAULT_PRIMARY_TAU = 0.3


# ---------------------------------------------------------------------------
# Option plumbing


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return payload


def _resolve(args: argparse.Namespace, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _resolve_workers(args: argparse.Namespace, config: dict) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            workers = int(env)
        except ValueError as exc:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    else:
        workers = int(_resolve(args, config, "workers", 1))
    if workers < 1:
        raise ValidationError(f"worker count must be >= 1, got {workers}")
    return workers


def _parallel_map(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in str(text).split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in str(text).split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Dataset discovery


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    volume_path: Path
    sidecar_path: Path
    mask_path: Path | None


def discover_dataset(root: str | Path) -> list[DatasetEntry]:
    """Volumes are <id>.npy + <id>.json sidecars, masks <id>.mask.npy."""
    root = Path(root)
    volume_paths = sorted(
        p for p in root.glob("*.npy") if not p.name.endswith(".mask.npy")
    )
    if not volume_paths:
        raise EmptyInput(f"no volumes (*.npy) found in {root}")
    missing_sidecars = [str(p) for p in volume_paths if not p.with_suffix(".json").is_file()]
    if missing_sidecars:
        raise SidecarError(f"volumes without sidecars: {', '.join(missing_sidecars)}")
    entries = []
    for path in volume_paths:
        mask_path = path.with_name(path.stem + ".mask.npy")
        entries.append(
            DatasetEntry(
                id=path.stem,
                volume_path=path,
                sidecar_path=path.with_suffix(".json"),
                mask_path=mask_path if mask_path.is_file() else None,
            )
        )
    return entries


def _stems(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.glob("*.npy"))}


# ---------------------------------------------------------------------------
# domain-gap


def _dataset_stats(entries: list[DatasetEntry], window, patch_edge: int, workers: int):
    def job(entry: DatasetEntry):
        volume = load_volume(entry.volume_path, entry.sidecar_path)
        moments = intensity_moments(volume, window)
        noise = estimate_background_noise(volume, patch_edge)
        samples = None
        if entry.mask_path is not None:
            mask = load_mask(entry.mask_path)
            validate_pair(volume, mask)
            if mask.count() > 0:
                samples = diameter_samples(mask, volume.spacing_mm)
        return volume.spacing_mm, moments, noise, samples

    results = _parallel_map(job, entries, workers)

    total = (0, 0.0, 0.0)
    for _, moments, _, _ in results:
        total = combine_moments(total, moments)
    n, mean, m2 = total
    if n == 0:
        raise EmptyInput(f"no voxels inside window {window} across the dataset")
    intensity = IntensityStats(
        window_lo=float(window[0]), window_hi=float(window[1]),
        mean=mean, std=float(np.sqrt(m2 / n)), voxel_count=n,
    )
    noise = dataset_noise([r[2] for r in results])
    spacing = tuple(float(np.median([r[0][axis] for r in results])) for axis in range(3))
    sample_arrays = [r[3] for r in results if r[3] is not None]
    diameters = diameter_stats(np.concatenate(sample_arrays)) if sample_arrays else None
    return intensity, noise, spacing, diameters


def cmd_domain_gap(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    window = _parse_floats(_resolve(args, config, "window", "0,80"))
    if len(window) != 2:
        raise ValidationError(f"window must be lo,hi, got {window}")
    patch_edge = int(_resolve(args, config, "patch_edge", 20))
    workers = _resolve_workers(args, config)
    out_dir = Path(_resolve(args, config, "out", "domain_gap_out"))

    source_entries = discover_dataset(args.source_dir)
    target_entries = discover_dataset(args.target_dir)
    src_int, src_noise, src_spacing, src_diam = _dataset_stats(source_entries, window, patch_edge, workers)
    tgt_int, tgt_noise, tgt_spacing, tgt_diam = _dataset_stats(target_entries, window, patch_edge, workers)

    gap = domain_gap_report(
        source_intensity=src_int,
        target_intensity=tgt_int,
        resolution=resolution_compare(src_spacing, tgt_spacing),
        source_noise=src_noise,
        target_noise=tgt_noise,
        source_diameters=src_diam,
        target_diameters=tgt_diam,
    )
    report = RunReport(
        provenance=Provenance(
            version=__version__,
            config={
                "window": list(window),
                "patch_edge": patch_edge,
                "source_dir": str(args.source_dir),
                "target_dir": str(args.target_dir),
            },
        ),
        domain_gap=gap,
    )
    for fmt in ("json", "markdown", "csv-bundle"):
        render(report, fmt, out_dir)
    print(f"domain-gap report written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# saliency


def cmd_saliency(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    method = _resolve(args, config, "method", METHOD_POOLED_GRADIENTS)
    if method not in (METHOD_POOLED_GRADIENTS, METHOD_CHANNEL_WEIGHTS):
        raise ValidationError(f"method must be segxrescam or seg-gradcam, got {method!r}")
    pool = PoolSpec(int(_resolve(args, config, "pool_window", 1)))
    layer_names = _resolve(args, config, "layers", None)
    if isinstance(layer_names, str):
        layer_names = tuple(part.strip() for part in layer_names.split(","))
    layers = LayerSet(tuple(layer_names)) if layer_names else LayerSet()
    workers = _resolve_workers(args, config)
    out_dir = Path(_resolve(args, config, "out", "saliency_out"))
    keep_per_layer = bool(_resolve(args, config, "per_layer", False))

    manifest_paths: list[Path] = []
    for pattern in args.manifests:
        path = Path(pattern)
        if path.is_file():
            manifest_paths.append(path)
        else:
            manifest_paths.extend(sorted(path.parent.glob(path.name)))
    manifest_paths = sorted(set(manifest_paths))
    if not manifest_paths:
        raise EmptyInput(f"no manifests matched {args.manifests}")

    out_dir.mkdir(parents=True, exist_ok=True)

    def job(path: Path) -> str:
        manifest = load_manifest(path)
        result = compute_pipeline(
            manifest, method=method, pool=pool, layers=layers, keep_per_layer=keep_per_layer
        )
        save_heatmap(out_dir / f"{manifest.slice_id}.npy", result.final)
        sidecar = {
            "slice_id": manifest.slice_id,
            "method": method,
            "pool_window": pool.window,
            "layers": list(layers.names),
            "normalization": "minmax-per-layer-then-mean",
        }
        (out_dir / f"{manifest.slice_id}.json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if keep_per_layer and result.per_layer:
            layer_dir = out_dir / f"{manifest.slice_id}.layers"
            for name, heatmap in result.per_layer.items():
                save_heatmap(layer_dir / f"{name}.npy", heatmap)
        return manifest.slice_id

    slice_ids = _parallel_map(job, manifest_paths, workers)
    print(f"saliency maps for {len(slice_ids)} slices written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / taxonomy


def _pair_slices(
    heatmap_dir: Path, pred_dir: Path, gt_dir: Path | None
) -> list[tuple[str, Path, Path, Path | None]]:
    heatmaps = _stems(heatmap_dir)
    preds = _stems(pred_dir)
    gts = _stems(gt_dir) if gt_dir is not None else {}
    if not heatmaps:
        raise EmptyInput(f"no heatmaps (*.npy) in {heatmap_dir}")
    missing_pred = sorted(set(heatmaps) - set(preds))
    if missing_pred:
        raise PairingError(f"missing prediction masks for slices: {', '.join(missing_pred)}")
    stray = sorted(set(preds) - set(heatmaps))
    if stray:
        raise PairingError(f"prediction masks without heatmaps: {', '.join(stray)}")
    if gt_dir is not None:
        stray_gt = sorted(set(gts) - set(heatmaps))
        if stray_gt:
            raise PairingError(f"ground-truth masks without heatmaps: {', '.join(stray_gt)}")
    return [
        (sid, heatmaps[sid], preds[sid], gts.get(sid))
        for sid in sorted(heatmaps)
    ]


def _evaluate_corpus(args: argparse.Namespace, config: dict):
    taus = ThresholdSpec(_parse_floats(_resolve(args, config, "taus", "0.2,0.3,0.4")))
    primary_tau = float(_resolve(args, config, "primary_tau", DEFAULT_PRIMARY_TAU))
    if primary_tau not in taus.taus:
        raise ValidationError(f"primary tau {primary_tau} not in threshold set {taus.taus}")
    thresholds = TaxonomyThresholds(
        joint_dice_cut=float(_resolve(args, config, "dice_cut", 0.5)),
        joint_f1_cut=float(_resolve(args, config, "f1_cut", 0.3)),
    )
    workers = _resolve_workers(args, config)
    gt_dir = _resolve(args, config, "gt", None)
    pairs = _pair_slices(
        Path(args.heatmaps), Path(args.pred), Path(gt_dir) if gt_dir else None
    )

    def job(item):
        slice_id, heatmap_path, pred_path, gt_path = item
        heatmap = load_heatmap(heatmap_path)
        pred = load_mask(pred_path, role=MaskRole.PREDICTION)
        gt = load_mask(gt_path, role=MaskRole.GROUND_TRUTH) if gt_path else None
        slice_scores = score_slice(heatmap, gt, pred, taus)
        record = None
        dice_value = None
        if gt is not None:
            dice_value = dice(pred, gt)
            xai_f1 = next(
                (
                    row.f1
                    for row in slice_scores.scores
                    if row.tau == primary_tau and row.target is AlignmentTarget.GT
                ),
                None,
            )
            record = make_record(
                slice_id, dice_value, xai_f1, gt.count(), pred.count(), thresholds
            )
        return slice_id, slice_scores, record, pred, gt

    results = _parallel_map(job, pairs, workers)
    results.sort(key=lambda r: r[0])
    return taus, primary_tau, thresholds, results


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    taus, primary_tau, thresholds, results = _evaluate_corpus(args, config)
    out_dir = Path(_resolve(args, config, "out", "evaluate_out"))
    baseline = _resolve(args, config, "baseline_dice", None)
    baseline = float(baseline) if baseline is not None else None

    per_slice = [r[1] for r in results]
    records = [r[2] for r in results if r[2] is not None]
    aggregate = aggregate_scores(per_slice)

    gt_pairs = [(r[3], r[4]) for r in results if r[4] is not None]
    vd = None
    if gt_pairs:
        vd = volume_dice([p for p, _ in gt_pairs], [g for _, g in gt_pairs], baseline=baseline)

    report = RunReport(
        provenance=Provenance(
            version=__version__,
            config={
                "taus": list(taus.taus),
                "primary_tau": primary_tau,
                "taxonomy_thresholds": {
                    "perfect_min": thresholds.perfect_min,
                    "good_min": thresholds.good_min,
                    "bad_min": thresholds.bad_min,
                    "joint_dice_cut": thresholds.joint_dice_cut,
                    "joint_f1_cut": thresholds.joint_f1_cut,
                },
                "baseline_dice": baseline,
            },
        ),
        per_slice_scores=per_slice,
        aggregate=aggregate,
        gap_summary=gap_summary_from_aggregate(aggregate),
        slice_records=records,
        distribution=distribution(records) if records else None,
        volume_dice=vd,
    )
    for fmt in ("json", "markdown", "csv-bundle"):
        render(report, fmt, out_dir)
    print(f"evaluation report for {len(results)} slices written to {out_dir}")
    return 0


def cmd_taxonomy(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    thresholds = TaxonomyThresholds(
        joint_dice_cut=float(_resolve(args, config, "dice_cut", 0.5)),
        joint_f1_cut=float(_resolve(args, config, "f1_cut", 0.3)),
    )
    tau = float(_resolve(args, config, "tau", DEFAULT_PRIMARY_TAU))
    workers = _resolve_workers(args, config)
    out_dir = Path(_resolve(args, config, "out", "taxonomy_out"))

    gt_map = _stems(Path(args.gt))
    pred_map = _stems(Path(args.pred))
    if not gt_map:
        raise EmptyInput(f"no masks (*.npy) in {args.gt}")
    mismatch = sorted(set(gt_map) ^ set(pred_map))
    if mismatch:
        raise PairingError(f"gt/pred slice ids differ: {', '.join(mismatch)}")
    heatmap_map = _stems(Path(args.heatmaps)) if args.heatmaps else {}

    def job(slice_id: str):
        gt = load_mask(gt_map[slice_id], role=MaskRole.GROUND_TRUTH)
        pred = load_mask(pred_map[slice_id], role=MaskRole.PREDICTION)
        xai_f1 = None
        if slice_id in heatmap_map:
            heatmap = load_heatmap(heatmap_map[slice_id])
            slice_scores = score_slice(heatmap, gt, pred, ThresholdSpec((tau,)))
            xai_f1 = slice_scores.scores[0].f1
        return make_record(slice_id, dice(pred, gt), xai_f1, gt.count(), pred.count(), thresholds)

    records = _parallel_map(job, sorted(gt_map), workers)
    report = RunReport(
        provenance=Provenance(
            version=__version__,
            config={
                "tau": tau,
                "taxonomy_thresholds": {
                    "perfect_min": thresholds.perfect_min,
                    "good_min": thresholds.good_min,
                    "bad_min": thresholds.bad_min,
                    "joint_dice_cut": thresholds.joint_dice_cut,
                    "joint_f1_cut": thresholds.joint_f1_cut,
                },
            },
        ),
        slice_records=list(records),
        distribution=distribution(list(records)),
    )
    for fmt in ("json", "markdown", "csv-bundle"):
        render(report, fmt, out_dir)
    print(f"taxonomy for {len(records)} slices written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# phantom


def cmd_phantom(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out_dir = Path(_resolve(args, config, "out", "phantom_out"))
    count = int(_resolve(args, config, "count", 1))
    grid = _parse_ints(_resolve(args, config, "grid", "48,48,24"))
    spacing = _parse_floats(_resolve(args, config, "spacing", "0.457,0.457,1.114"))
    noise_std = float(_resolve(args, config, "noise_std", 0.0))
    seed = int(_resolve(args, config, "seed", 0))
    tissue_hu = float(_resolve(args, config, "tissue_hu", 42.0))
    prefix = str(_resolve(args, config, "prefix", "vol_"))
    radii = _parse_floats(_resolve(args, config, "vessel_radii", "1.0"))
    if len(grid) != 3 or len(spacing) != 3:
        raise ValidationError("grid and spacing must each have 3 components")

    extents = tuple((n - 1) * s for n, s in zip(grid, spacing))
    vessels = []
    for i, radius in enumerate(radii):
        cx = extents[0] * (i + 1) / (len(radii) + 1)
        vessels.append(
            Cylinder(
                axis=2,
                center_mm=(cx, extents[1] / 2, extents[2] / 2),
                radius_mm=float(radius),
                length_mm=extents[2] * 0.5,
            )
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    for index in range(count):
        vol_id = f"{prefix}{index:03d}"
        spec = PhantomSpec(
            shape=grid,
            spacing_mm=spacing,
            noise_std=noise_std,
            tissue_hu=tissue_hu,
            vessels=tuple(vessels),
            seed=seed + index,
        )
        volume, mask = generate_phantom(spec, volume_id=vol_id)
        save_volume(volume, out_dir / f"{vol_id}.npy", out_dir / f"{vol_id}.json")
        save_mask(out_dir / f"{vol_id}.mask.npy", mask)
        spec_payload = {
            "shape": list(grid),
            "spacing_mm": list(spacing),
            "noise_std": noise_std,
            "tissue_hu": tissue_hu,
            "vessel_radii_mm": list(radii),
            "seed": seed + index,
        }
        (out_dir / f"{vol_id}.phantom.json").write_text(
            json.dumps(spec_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(f"{count} phantom volume(s) written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out_dir = Path(_resolve(args, config, "out", "report_out"))
    sections = None
    if args.sections:
        sections = [part.strip() for part in args.sections.split(",")]
    report = report_from_json(Path(args.report).read_text(encoding="utf-8"))
    fmts = [args.format] if args.format != "all" else ["json", "markdown", "csv-bundle"]
    for fmt in fmts:
        render(report, fmt, out_dir, sections=sections)
    print(f"report re-rendered to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segdiag",
        description="Domain-gap quantification and saliency-alignment diagnostics",
    )
    parser.add_argument("--version", action="version", version=f"segdiag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--workers", type=int, help=f"worker threads (env {WORKERS_ENV} overrides)")
    common.add_argument("--out", help="output directory")

    p = sub.add_parser("domain-gap", parents=[common], help="compare two volume datasets")
    p.add_argument("--source-dir", required=True)
    p.add_argument("--target-dir", required=True)
    p.add_argument("--window", help="intensity window lo,hi in HU (default 0,80)")
    p.add_argument("--patch-edge", type=int, dest="patch_edge", help="noise corner patch edge (default 20)")
    p.set_defaults(func=cmd_domain_gap)

    p = sub.add_parser("saliency", parents=[common], help="compute per-slice saliency maps")
    p.add_argument("--manifests", nargs="+", required=True, help="manifest files or globs")
    p.add_argument("--method", choices=[METHOD_POOLED_GRADIENTS, METHOD_CHANNEL_WEIGHTS])
    p.add_argument("--pool-window", type=int, dest="pool_window")
    p.add_argument("--layers", help="comma-separated layer names")
    p.add_argument("--per-layer", action="store_const", const=True, dest="per_layer",
                   help="also write per-layer maps")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("evaluate", parents=[common], help="score heatmaps against masks")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt")
    p.add_argument("--taus", help="comma-separated thresholds (default 0.2,0.3,0.4)")
    p.add_argument("--primary-tau", type=float, dest="primary_tau")
    p.add_argument("--dice-cut", type=float, dest="dice_cut")
    p.add_argument("--f1-cut", type=float, dest="f1_cut")
    p.add_argument("--baseline-dice", type=float, dest="baseline_dice",
                   help="source-domain Dice for the performance-drop row")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("taxonomy", parents=[common], help="slice categories and quadrants")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--heatmaps", help="optional heatmap dir for the XAI F1 axis")
    p.add_argument("--tau", type=float)
    p.add_argument("--dice-cut", type=float, dest="dice_cut")
    p.add_argument("--f1-cut", type=float, dest="f1_cut")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("phantom", parents=[common], help="generate synthetic volumes")
    p.add_argument("--count", type=int)
    p.add_argument("--grid", help="voxels per axis, e.g. 48,48,24")
    p.add_argument("--spacing", help="mm per axis, e.g. 0.457,0.457,1.114")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--seed", type=int)
    p.add_argument("--tissue-hu", type=float, dest="tissue_hu")
    p.add_argument("--vessel-radii", dest="vessel_radii", help="comma-separated radii in mm")
    p.add_argument("--prefix")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("report", parents=[common], help="re-render a saved report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--format", default="all", choices=["all", "json", "markdown", "csv-bundle"])
    p.add_argument("--sections", help="comma-separated section names to render")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SegDiagError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"ERROR Internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
