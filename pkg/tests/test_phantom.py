import numpy as np
import pytest

from segdiag.alignment import binarize, iou
from segdiag.arrays import Mask
from segdiag.domain_gap import estimate_background_noise
from segdiag.errors import ConstructionError, EmptyMask, ValidationError
from segdiag.phantom import (
    AttentionSpec,
    Cylinder,
    PhantomSpec,
    alignment_fixture,
    generate_attention,
    generate_phantom,
    make_rng,
    mask_with_target_iou,
)

SPACING = (0.5, 0.5, 0.5)


def _spec(**kwargs):
    defaults = dict(shape=(40, 40, 24), spacing_mm=SPACING, seed=3)
    defaults.update(kwargs)
    return PhantomSpec(**defaults)


def _centered_cylinder(spec_shape, radius_mm, spacing=SPACING, length_frac=0.6):
    extents = tuple((n - 1) * s for n, s in zip(spec_shape, spacing))
    return Cylinder(
        axis=2,
        center_mm=(extents[0] / 2, extents[1] / 2, extents[2] / 2),
        radius_mm=radius_mm,
        length_mm=extents[2] * length_frac,
    )


# ---------------------------------------------------------------------------
# Volume generation


def test_mask_voxel_count_near_analytic():
    shape = (40, 40, 24)
    radius = 2 * SPACING[0]  # two voxels
    vessel = _centered_cylinder(shape, radius)
    _, mask = generate_phantom(_spec(vessels=(vessel,), noise_std=0.0))
    slices_covered = int(vessel.length_mm / SPACING[2]) + 1
    per_slice = mask.count() / slices_covered
    analytic = np.pi * (vessel.radius_mm / SPACING[0]) ** 2
    assert per_slice == pytest.approx(analytic, rel=0.25)  # discretization slack


def test_seed_changes_noise_not_mask():
    vessel = _centered_cylinder((40, 40, 24), 1.0)
    vol_a, mask_a = generate_phantom(_spec(vessels=(vessel,), noise_std=3.0, seed=1))
    vol_b, mask_b = generate_phantom(_spec(vessels=(vessel,), noise_std=3.0, seed=2))
    assert not np.array_equal(vol_a.data, vol_b.data)
    np.testing.assert_array_equal(mask_a.data, mask_b.data)


def test_seed_determinism_bit_identical():
    vessel = _centered_cylinder((40, 40, 24), 1.0)
    vol_a, mask_a = generate_phantom(_spec(vessels=(vessel,), noise_std=3.0, seed=9))
    vol_b, mask_b = generate_phantom(_spec(vessels=(vessel,), noise_std=3.0, seed=9))
    np.testing.assert_array_equal(vol_a.data, vol_b.data)
    np.testing.assert_array_equal(mask_a.data, mask_b.data)


def test_phantom_noise_closes_loop_with_estimator():
    volume, _ = generate_phantom(_spec(noise_std=7.96, seed=5))
    stats = estimate_background_noise(volume, patch_edge=16)
    assert stats.noise_std == pytest.approx(7.96, rel=0.10)


def test_vessel_outside_grid_rejected():
    with pytest.raises(ValidationError):
        _spec(vessels=(Cylinder(axis=2, center_mm=(1.0, 1.0, 1.0), radius_mm=5.0, length_mm=4.0),))


def test_noiseless_volume_has_flat_air():
    volume, _ = generate_phantom(_spec(noise_std=0.0))
    assert estimate_background_noise(volume, patch_edge=16).noise_std == 0.0


# ---------------------------------------------------------------------------
# Attention construction


def _base_mask(seed=4, shape=(96, 96), density=0.35, box=48):
    rng = make_rng(seed)
    grid = np.zeros(shape, bool)
    lo = (shape[0] - box) // 2
    grid[lo : lo + box, lo : lo + box] = rng.random((box, box)) < density
    return Mask(data=grid.astype(np.uint8))


def test_attention_hits_full_overlap():
    base = _base_mask()
    heatmap = generate_attention(AttentionSpec(base=base, target_iou=1.0, tau=0.3, seed=0))
    assert iou(binarize(heatmap, 0.3), base) == 1.0


def test_attention_hits_zero_overlap():
    base = _base_mask()
    heatmap = generate_attention(AttentionSpec(base=base, target_iou=0.0, tau=0.3, seed=0))
    assert iou(binarize(heatmap, 0.3), base) == 0.0
    assert binarize(heatmap, 0.3).count() > 0  # disjoint blob, not an empty map


def test_attention_hits_reference_target():
    base = _base_mask()
    heatmap = generate_attention(AttentionSpec(base=base, target_iou=0.4671, tau=0.3, seed=2))
    measured = iou(binarize(heatmap, 0.3), base)
    assert 0.4571 <= measured <= 0.4771


def test_attention_self_consistent_over_many_targets():
    base = _base_mask(seed=11)
    rng = make_rng(123)
    for _ in range(100):
        target = float(rng.uniform(0.02, 0.98))
        seed = int(rng.integers(0, 2**31))
        heatmap = generate_attention(AttentionSpec(base=base, target_iou=target, tau=0.3, seed=seed))
        measured = iou(binarize(heatmap, 0.3), base)
        assert abs(measured - target) <= 0.01


def test_attention_deterministic_per_seed():
    base = _base_mask()
    spec = AttentionSpec(base=base, target_iou=0.3, tau=0.3, seed=77)
    a = generate_attention(spec)
    b = generate_attention(spec)
    np.testing.assert_array_equal(a.data, b.data)


def test_attention_empty_base_rejected():
    with pytest.raises(EmptyMask):
        mask_with_target_iou(np.zeros((8, 8), bool), 0.5)


def test_attention_unreachable_target_rejected():
    # a tiny base cannot land within 0.01 of an awkward ratio
    base = np.zeros((8, 8), bool)
    base[0, 0] = True
    with pytest.raises(ConstructionError):
        mask_with_target_iou(base, 0.515)


def test_alignment_fixture_hits_both_targets():
    base = _base_mask(seed=21)
    heatmap, pm = alignment_fixture(base, iou_gt=0.4671, iou_pm=0.5220, tau=0.3, seed=3)
    attention = binarize(heatmap, 0.3)
    assert abs(iou(attention, base) - 0.4671) <= 0.01
    assert abs(iou(attention, pm) - 0.5220) <= 0.01
