"""Diagnostics for segmentation domain shift: dataset gap metrics plus
saliency-alignment scoring of exported layer tensors."""

__version__ = "0.1.0"

from .arrays import (  # noqa: F401
    Heatmap,
    HeatmapProvenance,
    LayerDump,
    Manifest,
    Mask,
    MaskRole,
    Volume,
    load_array,
    load_heatmap,
    load_manifest,
    load_mask,
    load_volume,
    save_array,
    save_heatmap,
    save_manifest,
    save_mask,
    save_volume,
    validate_pair,
)
from .errors import SegDiagError  # noqa: F401
