"""Committed-fixture generation: toy model dumps over procedural slices."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .hooks import DEFAULT_LAYERS, HookConfig, capture_slice, write_dump
from .model import build_toy_model, procedural_slice


def make_toy_fixtures(
    seed: int,
    count: int,
    out_dir: str | Path,
    layer_names: tuple[str, ...] = DEFAULT_LAYERS,
) -> list[Path]:
    """Dump `count` procedural slices through a seed-built toy model.

    Ground truth masks are synthesized by thresholding the input bumps,
    so evaluation-style runs have something to pair against.
    """
    out_dir = Path(out_dir)
    model = build_toy_model(seed)
    config = HookConfig(layer_names=layer_names, out_dir=out_dir)
    manifests = []
    for index in range(count):
        image = procedural_slice(seed * 1000 + index)
        gt = (image > 0.5).astype(np.uint8)
        dump = capture_slice(model, image, f"slice_{index:03d}", config)
        manifests.append(write_dump(dump, out_dir, gt_mask=gt))
    return manifests
