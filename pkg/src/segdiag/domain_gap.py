"""Phase-1 quantification of the gap between two volumetric datasets.

Covers the four factors that drive segmentation transfer failure:
intensity distribution, spatial resolution, background noise, and
vessel morphology. Statistics accumulate in float64 and use the
population (ddof=0) convention throughout.

The noise and diameter procedures are declared substitutes validated
on synthetic phantoms:

* background noise = median of per-corner-patch stds over air voxels
  (< -500 HU), eight corner patches of ``patch_edge``^3 clipped to the
  volume bounds, a patch contributing only if it holds >= 100 air voxels;
* vessel diameters = 2 x anisotropic Euclidean distance transform
  sampled at ridge voxels (EDT >= all 26 neighbors). The EDT measures
  distance to the nearest background voxel center, so a single
  foreground voxel at isotropic spacing ``s`` reports diameter ``2 s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .arrays import Mask, Volume
from .errors import (
    EmptyMask,
    EmptyWindow,
    InsufficientBackground,
    ValidationError,
)

AIR_THRESHOLD_HU = -500.0
MIN_AIR_VOXELS_PER_PATCH = 100


@dataclass(frozen=True)
class IntensityStats:
    """Mean/std of voxels inside an inclusive HU window."""

    window_lo: float
    window_hi: float
    mean: float
    std: float
    voxel_count: int

    def __post_init__(self):
        if not self.window_lo < self.window_hi:
            raise ValidationError(f"window_lo must be < window_hi, got ({self.window_lo}, {self.window_hi})")
        if self.std < 0 or self.voxel_count <= 0:
            raise ValidationError("intensity stats require std >= 0 and voxel_count > 0")


@dataclass(frozen=True)
class ResolutionDelta:
    """Per-axis spacing comparison; percent difference is (target-source)/source*100."""

    source_spacing_mm: tuple[float, float, float]
    target_spacing_mm: tuple[float, float, float]
    percent_diff: tuple[float, float, float]


@dataclass(frozen=True)
class NoiseStats:
    """Background noise level plus per-patch diagnostics."""

    noise_std: float
    method: str
    patch_stds: tuple[float, ...]
    patch_air_counts: tuple[int, ...]

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")


@dataclass(frozen=True)
class DiameterStats:
    """Distribution of vessel diameters in mm."""

    mean: float
    median: float
    std: float
    min: float
    max: float
    p99: float
    sample_count: int

    def __post_init__(self):
        if not (0 <= self.min <= self.median <= self.max):
            raise ValidationError("diameter stats must satisfy 0 <= min <= median <= max")
        if self.p99 > self.max:
            raise ValidationError("p99 cannot exceed max")


@dataclass(frozen=True)
class DomainGapReport:
    """Assembled source-vs-target comparison (Phase 1 output)."""

    source_intensity: IntensityStats
    target_intensity: IntensityStats
    resolution: ResolutionDelta
    source_noise: NoiseStats
    target_noise: NoiseStats
    noise_ratio: float | None
    source_diameters: DiameterStats | None
    target_diameters: DiameterStats | None


# ---------------------------------------------------------------------------
# Intensity


def intensity_stats(volume: Volume, window: tuple[float, float] = (0.0, 80.0)) -> IntensityStats:
    """Population mean/std over voxels with window_lo <= v <= window_hi."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValidationError(f"window lo must be < hi, got ({lo}, {hi})")
    data = volume.data.astype(np.float64, copy=False)
    selected = data[(data >= lo) & (data <= hi)]
    if selected.size == 0:
        raise EmptyWindow(f"volume {volume.id!r}: no voxels in window [{lo}, {hi}] HU")
    return IntensityStats(
        window_lo=lo,
        window_hi=hi,
        mean=float(np.mean(selected)),
        std=float(np.std(selected)),
        voxel_count=int(selected.size),
    )


def intensity_moments(volume: Volume, window: tuple[float, float]) -> tuple[int, float, float]:
    """(count, mean, M2) partial for exact streaming combination."""
    lo, hi = float(window[0]), float(window[1])
    data = volume.data.astype(np.float64, copy=False)
    selected = data[(data >= lo) & (data <= hi)]
    n = int(selected.size)
    if n == 0:
        return 0, 0.0, 0.0
    mean = float(np.mean(selected))
    m2 = float(np.sum((selected - mean) ** 2))
    return n, mean, m2


def combine_moments(a: tuple[int, float, float], b: tuple[int, float, float]) -> tuple[int, float, float]:
    """Chan et al. pairwise merge of (count, mean, M2) partials."""
    na, mean_a, m2a = a
    nb, mean_b, m2b = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mean_b - mean_a
    mean = mean_a + delta * nb / n
    m2 = m2a + m2b + delta * delta * na * nb / n
    return n, mean, m2


def dataset_intensity_stats(volumes: list[Volume], window: tuple[float, float] = (0.0, 80.0)) -> IntensityStats:
    """Pool the window statistics of several volumes (merged in given order)."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValidationError(f"window lo must be < hi, got ({lo}, {hi})")
    total: tuple[int, float, float] = (0, 0.0, 0.0)
    for volume in volumes:
        total = combine_moments(total, intensity_moments(volume, window))
    n, mean, m2 = total
    if n == 0:
        raise EmptyWindow(f"no voxels in window [{lo}, {hi}] HU across {len(volumes)} volumes")
    return IntensityStats(window_lo=lo, window_hi=hi, mean=mean, std=float(np.sqrt(m2 / n)), voxel_count=n)


# ---------------------------------------------------------------------------
# Resolution


def resolution_compare(
    source_spacing_mm: tuple[float, float, float],
    target_spacing_mm: tuple[float, float, float],
) -> ResolutionDelta:
    """Per-axis percent difference relative to the source spacing."""
    src = tuple(float(s) for s in source_spacing_mm)
    tgt = tuple(float(s) for s in target_spacing_mm)
    if len(src) != 3 or len(tgt) != 3 or any(s <= 0 for s in src + tgt):
        raise ValidationError(f"spacings must be 3 positive numbers, got {src} and {tgt}")
    pct = tuple((t - s) / s * 100.0 for s, t in zip(src, tgt))
    return ResolutionDelta(source_spacing_mm=src, target_spacing_mm=tgt, percent_diff=pct)


# ---------------------------------------------------------------------------
# Noise


def _corner_patches(shape: tuple[int, ...], edge: int) -> list[tuple[slice, slice, slice]]:
    spans = []
    for dim in shape:
        e = min(edge, dim)
        spans.append((slice(0, e), slice(dim - e, dim)))
    return [(sx, sy, sz) for sx in spans[0] for sy in spans[1] for sz in spans[2]]


def estimate_background_noise(volume: Volume, patch_edge: int = 20) -> NoiseStats:
    """Noise std from air voxels in the eight corner patches.

    Each patch contributes the population std of its air voxels
    (< -500 HU) when it holds at least 100 of them; the reported level
    is the median of the contributing patches, which is robust to
    anatomy intruding into a corner.
    """
    if patch_edge < 1:
        raise ValidationError("patch_edge must be >= 1")
    nx, ny, _ = volume.data.shape
    if nx < 2 * patch_edge or ny < 2 * patch_edge:
        raise ValidationError(
            f"volume {volume.id!r} too small in-plane for patch_edge {patch_edge}: "
            f"needs >= {2 * patch_edge}, got {(nx, ny)}"
        )
    data = volume.data.astype(np.float64, copy=False)
    stds: list[float] = []
    air_counts: list[int] = []
    for patch_slices in _corner_patches(volume.data.shape, patch_edge):
        patch = data[patch_slices]
        air = patch[patch < AIR_THRESHOLD_HU]
        air_counts.append(int(air.size))
        if air.size >= MIN_AIR_VOXELS_PER_PATCH:
            stds.append(float(np.std(air)))
    if not stds:
        raise InsufficientBackground(
            f"volume {volume.id!r}: no corner patch holds >= {MIN_AIR_VOXELS_PER_PATCH} air voxels"
        )
    return NoiseStats(
        noise_std=float(np.median(stds)),
        method=f"corner-air-median(patch_edge={patch_edge}, air<{AIR_THRESHOLD_HU:g}HU)",
        patch_stds=tuple(stds),
        patch_air_counts=tuple(air_counts),
    )


def dataset_noise(per_volume: list[NoiseStats]) -> NoiseStats:
    """Dataset noise level = median over per-volume estimates."""
    if not per_volume:
        raise ValidationError("dataset_noise requires at least one per-volume estimate")
    values = [stats.noise_std for stats in per_volume]
    return NoiseStats(
        noise_std=float(np.median(values)),
        method=f"median-over-volumes[{per_volume[0].method}]",
        patch_stds=tuple(values),
        patch_air_counts=(),
    )


# ---------------------------------------------------------------------------
# Vessel morphology


def mask_edt(mask: Mask, spacing_mm: tuple[float, float, float]) -> np.ndarray:
    """Anisotropic EDT inside the mask (mm to nearest background voxel center)."""
    spacing = tuple(float(s) for s in spacing_mm)
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValidationError(f"spacing must be 3 positive numbers, got {spacing_mm}")
    fg = mask.data.astype(bool)
    if fg.ndim != 3:
        raise ValidationError(f"vessel masks must be 3D, got shape {fg.shape}")
    if fg.all():
        raise ValidationError("mask has no background voxels; EDT undefined")
    return ndimage.distance_transform_edt(fg, sampling=spacing)


def diameter_samples(mask: Mask, spacing_mm: tuple[float, float, float]) -> np.ndarray:
    """Diameters (2 x EDT, mm) sampled at ridge voxels of the mask."""
    fg = mask.data.astype(bool)
    if not fg.any():
        raise EmptyMask("cannot sample diameters from an empty mask")
    edt = mask_edt(mask, spacing_mm)
    # Ridge: EDT >= all 26 neighbors. cval=0 never beats interior values.
    neighborhood_max = ndimage.maximum_filter(edt, size=3, mode="constant", cval=0.0)
    ridge = fg & (edt >= neighborhood_max)
    return np.sort(2.0 * edt[ridge], kind="stable")


def diameter_stats(samples: np.ndarray) -> DiameterStats:
    if samples.size == 0:
        raise EmptyMask("no diameter samples")
    samples = np.asarray(samples, dtype=np.float64)
    return DiameterStats(
        mean=float(np.mean(samples)),
        median=float(np.median(samples)),
        std=float(np.std(samples)),
        min=float(np.min(samples)),
        max=float(np.max(samples)),
        p99=float(np.percentile(samples, 99)),
        sample_count=int(samples.size),
    )


def vessel_diameters(mask: Mask, spacing_mm: tuple[float, float, float]) -> DiameterStats:
    """Diameter distribution of a vessel mask via EDT ridge sampling."""
    return diameter_stats(diameter_samples(mask, spacing_mm))


# ---------------------------------------------------------------------------
# Assembly


def domain_gap_report(
    source_intensity: IntensityStats,
    target_intensity: IntensityStats,
    resolution: ResolutionDelta,
    source_noise: NoiseStats,
    target_noise: NoiseStats,
    source_diameters: DiameterStats | None = None,
    target_diameters: DiameterStats | None = None,
) -> DomainGapReport:
    """Assemble the Phase-1 report; noise ratio is absent when source noise is 0."""
    if source_noise.noise_std > 0:
        noise_ratio = target_noise.noise_std / source_noise.noise_std
    else:
        noise_ratio = None
    return DomainGapReport(
        source_intensity=source_intensity,
        target_intensity=target_intensity,
        resolution=resolution,
        source_noise=source_noise,
        target_noise=target_noise,
        noise_ratio=noise_ratio,
        source_diameters=source_diameters,
        target_diameters=target_diameters,
    )
