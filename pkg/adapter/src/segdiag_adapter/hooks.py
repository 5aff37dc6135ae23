"""Layer capture and gradient export for one slice.

The backward target is the model's own prediction: the sum of the
predicted-class logits over the pixels the model labeled foreground.
Summing (rather than averaging) over the mask is pinned so gradient
scales do not depend on the predicted area. Because the mask enters
only as a constant index set, the exported gradients equal the
derivatives of that scalar with the mask frozen, which is what the
finite-difference checks verify.

Everything is written in the plain exchange formats (NPY v1.0 arrays,
JSON manifests); this package never imports the analysis toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .model import FOREGROUND_CLASS

DEFAULT_LAYERS = (
    "encoder.4",
    "encoder.5",
    "decoder.0",
    "decoder.1",
    "decoder.2",
    "decoder.3",
    "decoder.4",
)


class HookError(RuntimeError):
    """A requested layer name does not resolve on the network."""


@dataclass(frozen=True)
class HookConfig:
    layer_names: tuple[str, ...] = DEFAULT_LAYERS
    out_dir: Path = Path("dumps")
    slice_ids: tuple[str, ...] | None = None  # None = every offered slice
    device: str = "cpu"

    def wants(self, slice_id: str) -> bool:
        return self.slice_ids is None or slice_id in self.slice_ids


@dataclass
class SliceDump:
    """In-memory capture for one slice, before/after writing."""

    slice_id: str
    features: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]
    prediction_mask: np.ndarray
    logits: np.ndarray
    target_value: float
    zero_target: bool
    manifest_path: Path | None = None


def _resolve_modules(model: torch.nn.Module, names: tuple[str, ...]) -> dict[str, torch.nn.Module]:
    lookup = dict(model.named_modules())
    missing = [name for name in names if name not in lookup]
    if missing:
        raise HookError(f"layer names not found on the network: {missing}")
    return {name: lookup[name] for name in names}


def capture_slice(
    model: torch.nn.Module,
    image: np.ndarray,
    slice_id: str,
    config: HookConfig = HookConfig(),
) -> SliceDump:
    """Forward + prediction-targeted backward pass with layer capture."""
    modules = _resolve_modules(model, config.layer_names)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2D slice, got shape {image.shape}")

    captured: dict[str, torch.Tensor] = {}
    handles = []

    def make_hook(name):
        def hook(_module, _inputs, output):
            output.retain_grad()
            captured[name] = output
            return output

        return hook

    for name, module in modules.items():
        handles.append(module.register_forward_hook(make_hook(name)))

    try:
        device = torch.device(config.device)
        x = torch.from_numpy(image)[None, None].to(device)
        model.zero_grad(set_to_none=True)
        logits = model(x)
        prediction = logits.argmax(dim=1)[0]
        mask = prediction == FOREGROUND_CLASS
        zero_target = not bool(mask.any())
        if zero_target:
            target = logits.sum() * 0.0
        else:
            target = logits[0, FOREGROUND_CLASS][mask].sum()
        target.backward()
    finally:
        for handle in handles:
            handle.remove()

    features = {}
    grads = {}
    for name in config.layer_names:
        tensor = captured[name][0]
        features[name] = tensor.detach().cpu().numpy()
        grad = captured[name].grad
        grads[name] = (
            np.zeros_like(features[name])
            if grad is None
            else grad[0].detach().cpu().numpy()
        )
    return SliceDump(
        slice_id=slice_id,
        features=features,
        grads=grads,
        prediction_mask=mask.cpu().numpy().astype(np.uint8),
        logits=logits[0].detach().cpu().numpy(),
        target_value=float(target.detach()),
        zero_target=zero_target,
    )


def _write_npy(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(arr), version=(1, 0))


def write_dump(
    dump: SliceDump,
    out_dir: str | Path,
    gt_mask: np.ndarray | None = None,
) -> Path:
    """Write arrays plus the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    slice_dir = out_dir / dump.slice_id
    layer_entries = []
    for name in dump.features:
        features_rel = f"{dump.slice_id}/{name}.features.npy"
        grads_rel = f"{dump.slice_id}/{name}.grads.npy"
        _write_npy(out_dir / features_rel, dump.features[name].astype(np.float32))
        _write_npy(out_dir / grads_rel, dump.grads[name].astype(np.float32))
        layer_entries.append(
            {"layer_name": name, "features_path": features_rel, "grads_path": grads_rel}
        )
    pred_rel = f"{dump.slice_id}/pred.npy"
    _write_npy(out_dir / pred_rel, dump.prediction_mask.astype(np.uint8))
    manifest = {
        "slice_id": dump.slice_id,
        "input_shape": list(dump.prediction_mask.shape),
        "layers": layer_entries,
        "prediction_mask_path": pred_rel,
        "zero_target": dump.zero_target,
        "target_value": dump.target_value,
    }
    if gt_mask is not None:
        gt_rel = f"{dump.slice_id}/gt.npy"
        _write_npy(out_dir / gt_rel, np.asarray(gt_mask, dtype=np.uint8))
        manifest["ground_truth_mask_path"] = gt_rel
    manifest_path = out_dir / f"{dump.slice_id}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dump.manifest_path = manifest_path
    return manifest_path


def dump_slice(
    model: torch.nn.Module,
    image: np.ndarray,
    slice_id: str,
    config: HookConfig = HookConfig(),
    gt_mask: np.ndarray | None = None,
) -> Path:
    """Capture one slice and write it; the one-call form of the above."""
    dump = capture_slice(model, image, slice_id, config)
    return write_dump(dump, config.out_dir, gt_mask=gt_mask)


def target_with_injection(
    model: torch.nn.Module,
    image: np.ndarray,
    layer_name: str,
    delta: torch.Tensor,
    frozen_mask: np.ndarray,
) -> float:
    """Target scalar with the layer activation perturbed by ``delta``.

    The prediction mask is frozen to the unperturbed run's mask, which
    matches what the exported gradients differentiate.
    """
    modules = _resolve_modules(model, (layer_name,))

    def hook(_module, _inputs, output):
        return output + delta.to(output.dtype)

    handle = modules[layer_name].register_forward_hook(hook)
    try:
        x = torch.from_numpy(np.asarray(image, dtype=np.float64))[None, None]
        with torch.no_grad():
            logits = model(x)
    finally:
        handle.remove()
    mask = torch.from_numpy(np.asarray(frozen_mask, dtype=bool))
    if not bool(mask.any()):
        return 0.0
    return float(logits[0, FOREGROUND_CLASS][mask].sum())
