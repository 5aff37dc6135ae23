"""Synthetic phantoms: vessel volumes and attention maps with known targets.

The generator is the end-to-end oracle for the rest of the toolkit:
axis-aligned cylinder vessels give analytic diameter/voxel-count
expectations, seeded Gaussian noise gives a known background sigma, and
the attention constructor hits a requested IoU against a base mask to
within +/-0.01 (verifying itself and failing loudly otherwise).

Randomness comes from numpy's Philox engine (a named 64-bit
counter-based generator with published constants) keyed directly by the
spec seed, so identical specs reproduce bit-identical outputs.

Geometry convention: voxel (i, j, k) has its center at
(i*sx, j*sy, k*sz) mm; cylinder containment tests voxel centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .arrays import Heatmap, HeatmapProvenance, Mask, MaskRole, Volume
from .errors import ConstructionError, EmptyMask, ValidationError

IOU_TOLERANCE = 0.01


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator keyed by the seed."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True)
class Cylinder:
    """Axis-aligned solid cylinder: axis 0=x, 1=y, 2=z; center/extent in mm."""

    axis: int
    center_mm: tuple[float, float, float]
    radius_mm: float
    length_mm: float

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValidationError(f"cylinder axis must be 0, 1, or 2, got {self.axis}")
        if self.radius_mm <= 0 or self.length_mm <= 0:
            raise ValidationError("cylinder radius and length must be > 0")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry + intensity recipe for one synthetic volume."""

    shape: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    background_hu: float = -1000.0
    tissue_hu: float = 42.0
    vessel_hu: float = 300.0
    noise_std: float = 0.0
    tissue_fraction: float = 0.5
    vessels: tuple[Cylinder, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if len(self.shape) != 3 or any(int(n) < 1 for n in self.shape):
            raise ValidationError(f"shape must be 3 positive ints, got {self.shape}")
        if len(self.spacing_mm) != 3 or any(s <= 0 for s in self.spacing_mm):
            raise ValidationError(f"spacing_mm must be 3 positive numbers, got {self.spacing_mm}")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")
        if not 0.0 <= self.tissue_fraction <= 1.0:
            raise ValidationError("tissue_fraction must lie in [0, 1]")
        extents = tuple((n - 1) * s for n, s in zip(self.shape, self.spacing_mm))
        for vessel in self.vessels:
            for axis in range(3):
                half = vessel.length_mm / 2 if axis == vessel.axis else vessel.radius_mm
                lo = vessel.center_mm[axis] - half
                hi = vessel.center_mm[axis] + half
                if lo < 0 or hi > extents[axis]:
                    raise ValidationError(
                        f"vessel extends outside the grid on axis {axis}: "
                        f"[{lo:.3f}, {hi:.3f}] mm vs [0, {extents[axis]:.3f}] mm"
                    )


def _voxel_centers_mm(shape: tuple[int, int, int], spacing: tuple[float, float, float]):
    axes = [np.arange(n, dtype=np.float64) * s for n, s in zip(shape, spacing)]
    return np.meshgrid(*axes, indexing="ij")


def _cylinder_mask(spec: PhantomSpec, vessel: Cylinder) -> np.ndarray:
    xs, ys, zs = _voxel_centers_mm(spec.shape, spec.spacing_mm)
    coords = (xs, ys, zs)
    perp = [a for a in range(3) if a != vessel.axis]
    radial_sq = sum((coords[a] - vessel.center_mm[a]) ** 2 for a in perp)
    along = np.abs(coords[vessel.axis] - vessel.center_mm[vessel.axis])
    return (radial_sq <= vessel.radius_mm**2) & (along <= vessel.length_mm / 2)


def _tissue_box(spec: PhantomSpec) -> tuple[slice, slice, slice]:
    slices = []
    for n in spec.shape:
        margin = int(round(n * (1.0 - spec.tissue_fraction) / 2.0))
        slices.append(slice(margin, max(margin + 1, n - margin)))
    return tuple(slices)


def generate_phantom(spec: PhantomSpec, volume_id: str | None = None) -> tuple[Volume, Mask]:
    """Deterministic (volume, vessel-mask) pair for a spec.

    Air background, a centered tissue box, cylinder vessels on top, and
    seeded Gaussian noise added to every voxel. The mask is a pure
    function of the geometry, independent of seed and noise.
    """
    data = np.full(spec.shape, spec.background_hu, dtype=np.float64)
    if spec.tissue_fraction > 0:
        data[_tissue_box(spec)] = spec.tissue_hu
    mask = np.zeros(spec.shape, dtype=bool)
    for vessel in spec.vessels:
        mask |= _cylinder_mask(spec, vessel)
    data[mask] = spec.vessel_hu
    if spec.noise_std > 0:
        rng = make_rng(spec.seed)
        data = data + rng.standard_normal(spec.shape) * spec.noise_std
    volume = Volume(
        data=data.astype(np.float32),
        spacing_mm=spec.spacing_mm,
        id=volume_id if volume_id is not None else f"phantom-{spec.seed}",
    )
    return volume, Mask(data=mask.astype(np.uint8), role=MaskRole.GROUND_TRUTH)


# ---------------------------------------------------------------------------
# Attention with a target IoU


@dataclass(frozen=True)
class AttentionSpec:
    """Request: heatmap whose binarization at tau has a given IoU vs base."""

    base: Mask
    target_iou: float
    tau: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.target_iou <= 1.0:
            raise ValidationError(f"target IoU must lie in [0, 1], got {self.target_iou}")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError(f"tau must lie in (0, 1), got {self.tau}")


def _ranked_take(candidates: np.ndarray, key: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of the `count` best candidates by key, seeded tie-breaking."""
    jitter = rng.random(len(key))
    order = np.lexsort((jitter, -key))
    return candidates[order[:count]]


def mask_with_target_iou(base: np.ndarray, target_iou: float, seed: int = 0) -> np.ndarray:
    """Boolean set A with |A n B| / |A u B| within +/-0.01 of the target.

    Keeps an erosion-ordered core of the base (interior pixels first)
    and adds a dilation-ordered false-positive ring, sized so the exact
    integer count ratio lands on the target.
    """
    base = np.asarray(base).astype(bool)
    m = int(base.sum())
    if m == 0:
        raise EmptyMask("base mask must be nonempty")
    rng = make_rng(seed)
    if target_iou >= 1.0:
        return base.copy()

    outside = np.argwhere(~base)
    dist_out = ndimage.distance_transform_edt(~base)

    if target_iou <= 0.0:
        # Disjoint blob around the pixel farthest from the base.
        if len(outside) == 0:
            raise ConstructionError("base fills the grid; a disjoint region is impossible")
        seed_idx = np.unravel_index(int(np.argmax(dist_out)), base.shape)
        d_seed = np.sqrt(
            ((outside - np.asarray(seed_idx)) ** 2).sum(axis=1).astype(np.float64)
        )
        take = min(len(outside), m)
        chosen = _ranked_take(outside, -d_seed, take, rng)
        out = np.zeros_like(base)
        out[tuple(chosen.T)] = True
        return out

    # Feasible extras: e <= m*(1-t)/t keeps the kept-core size within |B|.
    e_max = int(np.floor(m * (1.0 - target_iou) / target_iou))
    extras = min(e_max // 2, len(outside))
    keep = int(round(target_iou * (m + extras)))
    keep = min(max(keep, 1), m)
    achieved = keep / (m + extras)
    if abs(achieved - target_iou) > IOU_TOLERANCE:
        raise ConstructionError(
            f"target IoU {target_iou} unreachable within {IOU_TOLERANCE}: "
            f"best achievable {achieved:.4f} with base size {m}"
        )

    inside = np.argwhere(base)
    dist_in = ndimage.distance_transform_edt(base)
    core = _ranked_take(inside, dist_in[base], keep, rng)
    out = np.zeros_like(base)
    out[tuple(core.T)] = True
    if extras > 0:
        ring = _ranked_take(outside, -dist_out[~base], extras, rng)
        out[tuple(ring.T)] = True
    return out


def generate_attention(spec: AttentionSpec) -> Heatmap:
    """Heatmap whose binarization at spec.tau hits spec.target_iou vs spec.base.

    Supra-threshold values are spread over [tau + 0.3(1-tau), 1) and
    sub-threshold values over [0, 0.8 tau), both seeded; the measured
    IoU is re-checked and a miss raises ConstructionError.
    """
    base = spec.base.data.astype(bool)
    if base.ndim != 2:
        raise ValidationError(f"attention bases must be 2D slices, got shape {base.shape}")
    attention_set = mask_with_target_iou(base, spec.target_iou, seed=spec.seed)
    rng = make_rng(spec.seed + 0x5EED)
    tau = spec.tau
    values = rng.random(base.shape)
    heat = np.where(
        attention_set,
        tau + (1.0 - tau) * (0.3 + 0.7 * values),
        tau * 0.8 * values,
    )
    heatmap = Heatmap(data=heat, slice_id=f"attention-{spec.seed}", provenance=HeatmapProvenance.AGGREGATED)

    measured_set = heatmap.data >= tau
    inter = int(np.count_nonzero(measured_set & base))
    union = int(np.count_nonzero(measured_set | base))
    measured = 1.0 if union == 0 else inter / union
    if abs(measured - spec.target_iou) > IOU_TOLERANCE:
        raise ConstructionError(
            f"constructed attention measures IoU {measured:.4f}, "
            f"target {spec.target_iou:.4f} +/- {IOU_TOLERANCE}"
        )
    return heatmap


def alignment_fixture(
    gt: Mask,
    iou_gt: float,
    iou_pm: float,
    tau: float = 0.3,
    seed: int = 0,
) -> tuple[Heatmap, Mask]:
    """(heatmap, prediction mask) with pinned IoUs against both targets.

    The heatmap hits ``iou_gt`` against the ground truth; the returned
    prediction mask is then constructed to hit ``iou_pm`` against the
    binarized attention, which is what the attention-vs-prediction
    metric measures.
    """
    heatmap = generate_attention(AttentionSpec(base=gt, target_iou=iou_gt, tau=tau, seed=seed))
    attention_set = heatmap.data >= tau
    pm = mask_with_target_iou(attention_set, iou_pm, seed=seed + 1)
    return heatmap, Mask(data=pm.astype(np.uint8), role=MaskRole.PREDICTION)
