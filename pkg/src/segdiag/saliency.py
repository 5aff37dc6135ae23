"""Gradient-based saliency maps for segmentation, from exported layer tensors.

Two map families are supported per layer:

* spatially pooled gradients times features (sharp maps; pooling window 1
  is the identity, window 2 trades sharpness for smoothness), and
* globally averaged gradient channel weights times features (the coarse
  classic-CAM adaptation).

Per layer: raw map -> bilinear upsample to the input shape -> min-max
normalization -> [0, 1] heatmap. The final map is the pointwise mean of
the per-layer heatmaps, so fixed binarization thresholds keep a stable
meaning. Normalizing per layer (before the mean) makes every layer
contribute on equal footing and keeps the aggregate inside [0, 1]
without renormalization.

Pooling is a sliding max with stride 1 covering offsets
``-((k-1)//2) .. k//2`` on each axis, clamped at the edges
(edge-replicated padding), so the window always contains the center
pixel and the output shape equals the input shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import (
    Heatmap,
    HeatmapProvenance,
    LayerDump,
    Manifest,
    Mask,
    MaskRole,
    load_array,
    load_layer_dump,
)
from .errors import ManifestError, ShapeError, ValidationError

DEGENERATE_RANGE = 1e-12

METHOD_POOLED_GRADIENTS = "segxrescam"
METHOD_CHANNEL_WEIGHTS = "seg-gradcam"

DEFAULT_LAYER_NAMES = (
    "encoder.4",
    "encoder.5",
    "decoder.0",
    "decoder.1",
    "decoder.2",
    "decoder.3",
    "decoder.4",
)


@dataclass(frozen=True)
class PoolSpec:
    """Gradient max-pooling window (stride 1, shape preserving)."""

    window: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError(f"pool window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class LayerSet:
    """Ordered, unique layer names contributing to the aggregated map."""

    names: tuple[str, ...] = DEFAULT_LAYER_NAMES

    def __post_init__(self):
        if not self.names:
            raise ValidationError("layer set must be nonempty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError(f"layer names must be unique, got {self.names}")

    def __len__(self) -> int:
        return len(self.names)


def sliding_max(grid: np.ndarray, window: int) -> np.ndarray:
    """Shape-preserving max over a window x window neighborhood.

    Works on the trailing two axes, so both (H, W) and (C, H, W) inputs
    are accepted. window=1 is the identity.
    """
    if window < 1:
        raise ValidationError(f"pool window must be >= 1, got {window}")
    if window == 1:
        return grid
    h, w = grid.shape[-2], grid.shape[-1]
    rows = np.arange(h)
    cols = np.arange(w)
    lo = -((window - 1) // 2)
    hi = window // 2
    out = np.full(grid.shape, -np.inf, dtype=np.float64)
    for dr in range(lo, hi + 1):
        rr = np.clip(rows + dr, 0, h - 1)
        for dc in range(lo, hi + 1):
            cc = np.clip(cols + dc, 0, w - 1)
            np.maximum(out, grid[..., rr[:, None], cc[None, :]], out=out)
    return out


def segxrescam_accumulator(dump: LayerDump, pool: PoolSpec = PoolSpec()) -> np.ndarray:
    """Pre-ReLU channel sum: sum_c MaxPool_k(G_c) * A_c, in float64."""
    feats = dump.features.astype(np.float64)
    grads = dump.grads.astype(np.float64)
    if feats.shape != grads.shape:
        raise ShapeError(f"features/grads shape mismatch: {feats.shape} vs {grads.shape}")
    pooled = sliding_max(grads, pool.window)
    return np.einsum("chw,chw->hw", pooled, feats)


def segxrescam_layer(dump: LayerDump, pool: PoolSpec = PoolSpec()) -> np.ndarray:
    """Raw pooled-gradient map at feature resolution: ReLU of the accumulator."""
    return np.maximum(segxrescam_accumulator(dump, pool), 0.0)


def seg_gradcam_layer(dump: LayerDump) -> np.ndarray:
    """Raw channel-weight map: ReLU( sum_c mean(G_c) * A_c )."""
    feats = dump.features.astype(np.float64)
    grads = dump.grads.astype(np.float64)
    if feats.shape != grads.shape:
        raise ShapeError(f"features/grads shape mismatch: {feats.shape} vs {grads.shape}")
    weights = grads.mean(axis=(1, 2))
    return np.maximum(np.einsum("c,chw->hw", weights, feats), 0.0)


def upsample_bilinear(raw: np.ndarray, target_shape: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear upsampling to exactly target_shape."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ShapeError(f"expected a 2D map, got shape {raw.shape}")
    h, w = raw.shape
    th, tw = int(target_shape[0]), int(target_shape[1])
    if th < h or tw < w:
        raise ShapeError(f"target {target_shape} smaller than source {(h, w)}")
    if (th, tw) == (h, w):
        return raw.copy()

    def source_coords(n: int, t: int) -> np.ndarray:
        if t == 1 or n == 1:
            return np.zeros(t, dtype=np.float64)
        return np.arange(t, dtype=np.float64) * (n - 1) / (t - 1)

    ys = source_coords(h, th)
    xs = source_coords(w, tw)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    return (
        raw[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + raw[np.ix_(y1, x0)] * wy * (1 - wx)
        + raw[np.ix_(y0, x1)] * (1 - wy) * wx
        + raw[np.ix_(y1, x1)] * wy * wx
    )


def normalize_minmax(
    raw: np.ndarray,
    slice_id: str = "",
    provenance: HeatmapProvenance = HeatmapProvenance.PER_LAYER,
) -> Heatmap:
    """(v - min) / (max - min); a (near-)constant map normalizes to all zeros.

    The degenerate rule makes an uninformative map produce empty
    attention at every threshold rather than full attention.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValidationError(f"cannot normalize non-finite map for slice {slice_id!r}")
    lo = raw.min()
    span = raw.max() - lo
    if span < DEGENERATE_RANGE:
        normalized = np.zeros_like(raw)
    else:
        normalized = (raw - lo) / span
    return Heatmap(data=normalized, slice_id=slice_id, provenance=provenance)


def aggregate_layers(maps: list[Heatmap], layers: LayerSet) -> Heatmap:
    """Pointwise mean of the per-layer heatmaps (one per configured layer)."""
    if len(maps) != len(layers):
        raise ShapeError(f"expected {len(layers)} maps (one per layer), got {len(maps)}")
    shapes = {m.data.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeError(f"heatmap shapes differ: {sorted(shapes)}")
    stacked = np.stack([m.data for m in maps])
    # Per-pixel sorted accumulation: float addition is not associative, so
    # canonicalizing the order makes the mean exactly permutation-invariant.
    mean = np.sort(stacked, axis=0).sum(axis=0) / len(maps)
    if mean.min() < -1e-9 or mean.max() > 1 + 1e-9:
        raise ValidationError("aggregated map escaped [0, 1]")
    mean = np.clip(mean, 0.0, 1.0)
    slice_ids = {m.slice_id for m in maps if m.slice_id}
    slice_id = slice_ids.pop() if len(slice_ids) == 1 else ""
    return Heatmap(data=mean, slice_id=slice_id, provenance=HeatmapProvenance.AGGREGATED)


@dataclass(frozen=True)
class PipelineResult:
    final: Heatmap
    per_layer: dict[str, Heatmap] | None
    prediction_mask: Mask
    ground_truth_mask: Mask | None


def layer_raw_map(dump: LayerDump, method: str, pool: PoolSpec) -> np.ndarray:
    if method == METHOD_POOLED_GRADIENTS:
        return segxrescam_layer(dump, pool)
    if method == METHOD_CHANNEL_WEIGHTS:
        return seg_gradcam_layer(dump)
    raise ValidationError(
        f"unknown method {method!r}; expected {METHOD_POOLED_GRADIENTS!r} or {METHOD_CHANNEL_WEIGHTS!r}"
    )


def compute_pipeline(
    manifest: Manifest,
    method: str = METHOD_POOLED_GRADIENTS,
    pool: PoolSpec = PoolSpec(),
    layers: LayerSet = LayerSet(),
    keep_per_layer: bool = False,
) -> PipelineResult:
    """Full per-slice saliency pipeline over a manifest.

    The gradients in the dumps were taken against the model's own
    prediction mask (not the ground truth); that choice is encoded by
    the exporter and carried through here unchanged.
    """
    by_name = {entry.layer_name: entry for entry in manifest.layers}
    missing = [name for name in layers.names if name not in by_name]
    if missing:
        raise ManifestError(f"slice {manifest.slice_id!r}: manifest missing layers {missing}")

    per_layer: dict[str, Heatmap] = {}
    for name in layers.names:
        dump = load_layer_dump(by_name[name], slice_id=manifest.slice_id)
        raw = layer_raw_map(dump, method, pool)
        upsampled = upsample_bilinear(raw, manifest.input_shape)
        per_layer[name] = normalize_minmax(upsampled, slice_id=manifest.slice_id)

    final = aggregate_layers([per_layer[name] for name in layers.names], layers)

    pred = Mask(load_array(manifest.prediction_mask_path), role=MaskRole.PREDICTION)
    gt = None
    if manifest.ground_truth_mask_path is not None:
        gt = Mask(load_array(manifest.ground_truth_mask_path), role=MaskRole.GROUND_TRUTH)
    return PipelineResult(
        final=final,
        per_layer=per_layer if keep_per_layer else None,
        prediction_mask=pred,
        ground_truth_mask=gt,
    )
