"""Grid containers, array-exchange I/O, and manifest handling.

On-disk arrays use the NPY version 1.0 layout (magic ``\\x93NUMPY``,
little-endian, C row-major) restricted to float32/float64/uint8.
Volumes carry a JSON sidecar ``{"spacing_mm": [x, y, z], "id": ...}``.
Array axes follow the sidecar order: axis 0 is x, axis 1 is y, axis 2
is z, so ``data[i, j, k]`` maps to file element ``i*(J*K) + j*K + k``.

All containers are immutable after construction (backing arrays are
marked read-only), so they are safe to share across parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    ManifestError,
    ShapeError,
    SidecarError,
    UnsupportedDtype,
    ValidationError,
)

NPY_MAGIC = b"\x93NUMPY"

# Exchange dtypes: 32/64-bit little-endian floats and 8-bit unsigned masks.
_ALLOWED_DTYPES = (np.dtype("<f4"), np.dtype("<f8"), np.dtype("|u1"))


class MaskRole(Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTION = "prediction"
    BINARIZED_ATTENTION = "binarized_attention"


class HeatmapProvenance(Enum):
    PER_LAYER = "per_layer"
    AGGREGATED = "aggregated"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Volume:
    """3D scalar grid in Hounsfield Units with per-axis voxel spacing."""

    data: np.ndarray
    spacing_mm: tuple[float, float, float]
    id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ShapeError(f"volume must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"volume dimensions must be >= 1, got {data.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise SidecarError(f"spacing_mm must be 3 positive numbers, got {self.spacing_mm}")
        if np.isnan(data).any():
            raise ValidationError(f"volume {self.id!r} contains NaN")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


@dataclass(frozen=True)
class Mask:
    """Binary grid (2D or 3D) aligned to a reference Volume or slice."""

    data: np.ndarray
    role: MaskRole = MaskRole.GROUND_TRUTH

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind == "f" and np.isnan(data).any():
            raise ValidationError("mask contains NaN")
        if not np.isin(data, (0, 1)).all():
            bad = np.unique(data[~np.isin(data, (0, 1))])[:4]
            raise ValidationError(f"mask values must be 0/1, found {bad.tolist()}")
        object.__setattr__(self, "data", _freeze(data.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def count(self) -> int:
        """Number of foreground pixels/voxels."""
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True)
class Heatmap:
    """2D attention grid normalized to [0, 1].

    Kept in float64 in memory; the exchange files store float32.
    """

    data: np.ndarray
    slice_id: str = ""
    provenance: HeatmapProvenance = HeatmapProvenance.AGGREGATED

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"heatmap must be 2D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError(f"heatmap {self.slice_id!r} has non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError(
                f"heatmap {self.slice_id!r} outside [0, 1]: "
                f"min={data.min()}, max={data.max()}"
            )
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


@dataclass(frozen=True)
class LayerDump:
    """One layer's feature maps and gradients for a single slice."""

    layer_name: str
    features: np.ndarray
    grads: np.ndarray
    slice_id: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        grads = np.asarray(self.grads, dtype=np.float32)
        if feats.ndim != 3 or min(feats.shape) < 1:
            raise ShapeError(f"features must be CxHxW with all dims >= 1, got {feats.shape}")
        if feats.shape != grads.shape:
            raise ShapeError(
                f"features/grads shape mismatch for {self.layer_name!r}: "
                f"{feats.shape} vs {grads.shape}"
            )
        if not (np.isfinite(feats).all() and np.isfinite(grads).all()):
            raise ValidationError(f"layer dump {self.layer_name!r} has non-finite values")
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "grads", _freeze(grads))


@dataclass(frozen=True)
class ManifestLayer:
    layer_name: str
    features_path: Path
    grads_path: Path


@dataclass(frozen=True)
class Manifest:
    """Index of one slice's exported tensors and masks."""

    slice_id: str
    input_shape: tuple[int, int]
    layers: tuple[ManifestLayer, ...]
    prediction_mask_path: Path
    ground_truth_mask_path: Path | None = None

    def layer_names(self) -> tuple[str, ...]:
        return tuple(entry.layer_name for entry in self.layers)


# ---------------------------------------------------------------------------
# NPY exchange


def load_array(path: str | Path) -> np.ndarray:
    """Load an exchange array, validating the NPY v1.0 layout.

    Returns the grid with its on-disk dtype (float32, float64, or uint8)
    in row-major order; the caller converts via the typed loaders below.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(NPY_MAGIC)) != NPY_MAGIC:
            raise FormatError(f"{path}: missing NPY magic header")
        fh.seek(0)
        try:
            version = np.lib.format.read_magic(fh)
            if version == (1, 0):
                shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(fh)
            elif version == (2, 0):
                shape, fortran_order, dtype = np.lib.format.read_array_header_2_0(fh)
            else:
                raise FormatError(f"{path}: unsupported NPY version {version}")
        except ValueError as exc:
            raise FormatError(f"{path}: malformed NPY header ({exc})") from exc
        if fortran_order:
            raise FormatError(f"{path}: column-major layout is not part of the exchange format")
        if dtype not in _ALLOWED_DTYPES:
            raise UnsupportedDtype(f"{path}: dtype {dtype} not in (float32, float64, uint8)")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read()
    expected = count * dtype.itemsize
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload ({len(payload)} < {expected} bytes)")
    return np.frombuffer(payload[:expected], dtype=dtype).reshape(shape)


def save_array(path: str | Path, arr: np.ndarray) -> Path:
    """Write an array in NPY v1.0 layout (C order, little-endian)."""
    arr = np.asarray(arr)
    if arr.dtype not in _ALLOWED_DTYPES:
        raise UnsupportedDtype(f"cannot save dtype {arr.dtype}; use float32, float64, or uint8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(arr), version=(1, 0))
    return path


# ---------------------------------------------------------------------------
# Typed loaders


def load_volume(data_path: str | Path, sidecar_path: str | Path) -> Volume:
    """Load a volume plus its spacing sidecar."""
    arr = load_array(data_path)
    if arr.ndim != 3:
        raise ShapeError(f"{data_path}: volume must be 3D, got shape {arr.shape}")
    sidecar_path = Path(sidecar_path)
    try:
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise SidecarError(f"missing sidecar {sidecar_path}") from exc
    except json.JSONDecodeError as exc:
        raise SidecarError(f"{sidecar_path}: invalid JSON ({exc})") from exc
    spacing = sidecar.get("spacing_mm")
    if (
        not isinstance(spacing, (list, tuple))
        or len(spacing) != 3
        or not all(isinstance(s, (int, float)) and s > 0 for s in spacing)
    ):
        raise SidecarError(f"{sidecar_path}: spacing_mm must be 3 positive numbers, got {spacing!r}")
    vol_id = str(sidecar.get("id", Path(data_path).stem))
    return Volume(data=arr.astype(np.float32), spacing_mm=tuple(spacing), id=vol_id)


def save_volume(volume: Volume, data_path: str | Path, sidecar_path: str | Path) -> None:
    save_array(data_path, volume.data.astype(np.float32))
    sidecar = {"spacing_mm": list(volume.spacing_mm), "id": volume.id}
    Path(sidecar_path).write_text(json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8")


def load_mask(path: str | Path, role: MaskRole = MaskRole.GROUND_TRUTH) -> Mask:
    arr = load_array(path)
    if arr.dtype.kind == "f" and np.isnan(arr).any():
        raise ValidationError(f"{path}: NaN in mask data")
    return Mask(data=arr, role=role)


def save_mask(path: str | Path, mask: Mask) -> Path:
    return save_array(path, mask.data)


def load_heatmap(path: str | Path, provenance: HeatmapProvenance = HeatmapProvenance.AGGREGATED) -> Heatmap:
    """Load a heatmap; fails unless values are finite and inside [0, 1]."""
    arr = load_array(path)
    if arr.ndim != 2:
        raise ShapeError(f"{path}: heatmap must be 2D, got shape {arr.shape}")
    return Heatmap(data=arr, slice_id=Path(path).stem, provenance=provenance)


def save_heatmap(path: str | Path, heatmap: Heatmap) -> Path:
    return save_array(path, heatmap.data.astype(np.float32))


def validate_pair(volume: Volume, mask: Mask | np.ndarray) -> None:
    """Check that a mask matches its reference grid: same shape, values 0/1."""
    mask_data = mask.data if isinstance(mask, Mask) else np.asarray(mask)
    if tuple(volume.data.shape) != tuple(mask_data.shape):
        raise ValidationError(
            f"shape mismatch: volume {tuple(volume.data.shape)} vs mask {tuple(mask_data.shape)}"
        )
    if not np.isin(mask_data, (0, 1)).all():
        raise ValidationError("mask values must all be 0 or 1")


# ---------------------------------------------------------------------------
# Manifests


def load_manifest(path: str | Path) -> Manifest:
    """Load a slice manifest; relative paths resolve against its directory."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc})") from exc

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else path.parent / candidate

    try:
        slice_id = str(payload["slice_id"])
        input_shape = tuple(int(v) for v in payload["input_shape"])
        raw_layers = payload["layers"]
        pred_path = resolve(payload["prediction_mask_path"])
    except KeyError as exc:
        raise ManifestError(f"{path}: missing manifest key {exc}") from exc
    if len(input_shape) != 2:
        raise ManifestError(f"{path}: input_shape must be (H, W), got {input_shape}")

    layers = []
    for entry in raw_layers:
        layers.append(
            ManifestLayer(
                layer_name=str(entry["layer_name"]),
                features_path=resolve(entry["features_path"]),
                grads_path=resolve(entry["grads_path"]),
            )
        )
    names = [layer.layer_name for layer in layers]
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}: duplicate layer names in manifest")

    gt_raw = payload.get("ground_truth_mask_path")
    gt_path = resolve(gt_raw) if gt_raw else None

    manifest = Manifest(
        slice_id=slice_id,
        input_shape=(input_shape[0], input_shape[1]),
        layers=tuple(layers),
        prediction_mask_path=pred_path,
        ground_truth_mask_path=gt_path,
    )
    missing = [
        str(p)
        for p in [layer.features_path for layer in manifest.layers]
        + [layer.grads_path for layer in manifest.layers]
        + [manifest.prediction_mask_path]
        + ([manifest.ground_truth_mask_path] if manifest.ground_truth_mask_path else [])
        if not Path(p).is_file()
    ]
    if missing:
        raise ManifestError(f"{path}: unresolvable paths: {', '.join(missing)}")
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    """Write a manifest with paths relative to the manifest directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def rel(p: Path | None) -> str | None:
        if p is None:
            return None
        p = Path(p)
        try:
            return p.relative_to(path.parent).as_posix()
        except ValueError:
            return str(p)

    payload = {
        "slice_id": manifest.slice_id,
        "input_shape": list(manifest.input_shape),
        "layers": [
            {
                "layer_name": layer.layer_name,
                "features_path": rel(layer.features_path),
                "grads_path": rel(layer.grads_path),
            }
            for layer in manifest.layers
        ],
        "prediction_mask_path": rel(manifest.prediction_mask_path),
    }
    if manifest.ground_truth_mask_path is not None:
        payload["ground_truth_mask_path"] = rel(manifest.ground_truth_mask_path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_layer_dump(entry: ManifestLayer, slice_id: str = "") -> LayerDump:
    try:
        features = load_array(entry.features_path)
        grads = load_array(entry.grads_path)
    except FileNotFoundError as exc:
        raise ManifestError(f"missing layer file for {entry.layer_name!r}: {exc}") from exc
    return LayerDump(
        layer_name=entry.layer_name,
        features=features.astype(np.float32),
        grads=grads.astype(np.float32),
        slice_id=slice_id,
    )
