from pathlib import Path

import numpy as np
import pytest

from segdiag.arrays import (
    Manifest,
    ManifestLayer,
    save_array,
    save_heatmap,
    save_manifest,
)
from segdiag.phantom import make_rng


def pytest_runtest_logreport(report):
    # one PASS/FAIL line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    print(f"\nACCEPTANCE {name}: {'PASS' if report.passed else 'FAIL'}")


@pytest.fixture
def rng():
    return make_rng(20240901)


def random_mask(rng: np.random.Generator, shape, density: float = 0.4) -> np.ndarray:
    return (rng.random(shape) < density).astype(np.uint8)


def random_heatmap(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.random(shape)


def write_eval_slice(root: Path, slice_id: str, heatmap, gt, pred) -> None:
    """Lay out one slice of an evaluation corpus (heatmaps/, gt/, pred/)."""
    save_heatmap(root / "heatmaps" / f"{slice_id}.npy", heatmap)
    if gt is not None:
        save_array(root / "gt" / f"{slice_id}.npy", np.asarray(gt, dtype=np.uint8))
    save_array(root / "pred" / f"{slice_id}.npy", np.asarray(pred, dtype=np.uint8))


def write_manifest_corpus(root: Path, slice_arrays: dict, input_shape=(8, 8)) -> list[Path]:
    """Write manifests for {slice_id: {layer_name: (features, grads)}}."""
    paths = []
    for slice_id, layer_arrays in slice_arrays.items():
        slice_dir = root / slice_id
        slice_dir.mkdir(parents=True, exist_ok=True)
        layers = []
        for name, (feats, grads) in layer_arrays.items():
            fpath = slice_dir / f"{name}.features.npy"
            gpath = slice_dir / f"{name}.grads.npy"
            save_array(fpath, np.asarray(feats, dtype=np.float32))
            save_array(gpath, np.asarray(grads, dtype=np.float32))
            layers.append(ManifestLayer(name, fpath, gpath))
        pred_path = slice_dir / "pred.npy"
        save_array(pred_path, np.zeros(input_shape, np.uint8))
        manifest = Manifest(
            slice_id=slice_id,
            input_shape=input_shape,
            layers=tuple(layers),
            prediction_mask_path=pred_path,
        )
        path = root / f"{slice_id}.manifest.json"
        save_manifest(manifest, path)
        paths.append(path)
    return paths
