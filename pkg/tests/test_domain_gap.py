import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import edt_anisotropic
from segdiag.arrays import Mask, Volume
from segdiag.domain_gap import (
    combine_moments,
    dataset_intensity_stats,
    domain_gap_report,
    estimate_background_noise,
    intensity_moments,
    intensity_stats,
    mask_edt,
    NoiseStats,
    resolution_compare,
    vessel_diameters,
)
from segdiag.errors import EmptyMask, EmptyWindow, InsufficientBackground, ValidationError
from segdiag.phantom import PhantomSpec, generate_phantom


def _volume(values, spacing=(1.0, 1.0, 1.0)):
    return Volume(data=np.asarray(values, dtype=np.float32), spacing_mm=spacing)


# ---------------------------------------------------------------------------
# Intensity


def test_intensity_constant_field():
    vol = _volume(np.full((4, 4, 4), 40.0))
    stats = intensity_stats(vol, (0, 80))
    assert stats.mean == 40.0
    assert stats.std == 0.0
    assert stats.voxel_count == 64


def test_intensity_three_values():
    data = np.full((3, 1, 1), -1000.0)
    data[:, 0, 0] = [10.0, 30.0, 50.0]
    stats = intensity_stats(_volume(data), (0, 80))
    assert stats.mean == pytest.approx(30.0)
    assert stats.std == pytest.approx(16.3299, abs=1e-4)


def test_intensity_empty_window():
    vol = _volume(np.full((4, 4, 4), -1000.0))
    with pytest.raises(EmptyWindow):
        intensity_stats(vol, (0, 80))


def test_intensity_window_is_inclusive():
    data = np.full((4, 1, 1), -1000.0)
    data[:2, 0, 0] = [0.0, 80.0]
    stats = intensity_stats(_volume(data), (0, 80))
    assert stats.voxel_count == 2


def test_intensity_permutation_invariant(rng):
    data = rng.uniform(-100, 150, size=(5, 5, 5)).astype(np.float32)
    stats = intensity_stats(_volume(data), (0, 80))
    shuffled = data.flatten()
    rng.shuffle(shuffled)
    stats2 = intensity_stats(_volume(shuffled.reshape(5, 5, 5)), (0, 80))
    assert stats.voxel_count == stats2.voxel_count
    assert stats.mean == pytest.approx(stats2.mean, abs=1e-9)
    assert stats.std == pytest.approx(stats2.std, abs=1e-9)


def test_intensity_outside_window_voxels_ignored(rng):
    data = rng.uniform(10, 70, size=(4, 4, 4)).astype(np.float32)
    stats = intensity_stats(_volume(data), (0, 80))
    padded = np.concatenate([data, np.full((4, 4, 4), -500.0, np.float32)], axis=2)
    stats2 = intensity_stats(_volume(padded), (0, 80))
    assert stats.mean == stats2.mean
    assert stats.std == stats2.std
    assert stats.voxel_count == stats2.voxel_count


def test_moment_merge_matches_whole(rng):
    data = rng.uniform(-50, 120, size=(8, 8, 8)).astype(np.float32)
    whole = intensity_stats(_volume(data), (0, 80))
    a = intensity_moments(_volume(data[:4]), (0, 80))
    b = intensity_moments(_volume(data[4:]), (0, 80))
    n, mean, m2 = combine_moments(a, b)
    assert n == whole.voxel_count
    assert mean == pytest.approx(whole.mean, abs=1e-9)
    assert np.sqrt(m2 / n) == pytest.approx(whole.std, abs=1e-9)


def test_dataset_intensity_pools_volumes(rng):
    vols = [_volume(rng.uniform(0, 80, size=(4, 4, 4)).astype(np.float32)) for _ in range(3)]
    pooled = dataset_intensity_stats(vols, (0, 80))
    flat = np.concatenate([v.data.ravel() for v in vols]).astype(np.float64)
    assert pooled.mean == pytest.approx(flat.mean(), abs=1e-9)
    assert pooled.std == pytest.approx(flat.std(), abs=1e-9)


# ---------------------------------------------------------------------------
# Resolution


def test_resolution_z_delta_reference_value():
    delta = resolution_compare((0.457, 0.457, 1.114), (0.452, 0.452, 0.715))
    assert delta.percent_diff[2] == pytest.approx(-35.8, abs=0.1)
    assert delta.percent_diff[0] == pytest.approx(-1.1, abs=0.1)
    assert delta.percent_diff[1] == pytest.approx(-1.1, abs=0.1)


def test_resolution_identity_is_zero():
    delta = resolution_compare((0.5, 0.5, 1.0), (0.5, 0.5, 1.0))
    assert delta.percent_diff == (0.0, 0.0, 0.0)


def test_resolution_rejects_nonpositive():
    with pytest.raises(ValidationError):
        resolution_compare((0.5, 0.5, 0.0), (0.5, 0.5, 1.0))


@settings(max_examples=50, deadline=None)
@given(
    st.tuples(*[st.floats(0.05, 5.0) for _ in range(3)]),
    st.tuples(*[st.floats(0.05, 5.0) for _ in range(3)]),
)
def test_resolution_defining_formula(a, b):
    delta = resolution_compare(a, b)
    for axis in range(3):
        expected = (b[axis] - a[axis]) / a[axis] * 100.0
        assert delta.percent_diff[axis] == expected


# ---------------------------------------------------------------------------
# Noise


def _air_phantom(sigma: float, seed: int) -> Volume:
    spec = PhantomSpec(shape=(48, 48, 24), spacing_mm=(0.457, 0.457, 1.114),
                       noise_std=sigma, tissue_fraction=0.5, seed=seed)
    volume, _ = generate_phantom(spec)
    return volume


def test_noise_recovers_known_sigma():
    stats = estimate_background_noise(_air_phantom(2.37, seed=1), patch_edge=20)
    assert 2.13 <= stats.noise_std <= 2.61  # +/- 10 percent


def test_noise_ratio_reference_factor():
    low = estimate_background_noise(_air_phantom(2.37, seed=2), patch_edge=20)
    high = estimate_background_noise(_air_phantom(7.96, seed=2), patch_edge=20)
    assert 7.16 <= high.noise_std <= 8.76
    assert high.noise_std / low.noise_std == pytest.approx(3.4, rel=0.10)


def test_noise_zero_on_constant_air():
    vol = _volume(np.full((48, 48, 8), -1000.0))
    stats = estimate_background_noise(vol, patch_edge=20)
    assert stats.noise_std == 0.0


def test_noise_converges_over_seeds():
    sigma = 5.0
    for seed in range(20):
        stats = estimate_background_noise(_air_phantom(sigma, seed=seed), patch_edge=20)
        assert abs(stats.noise_std - sigma) / sigma < 0.10


def test_noise_requires_air():
    vol = _volume(np.zeros((48, 48, 8)))  # all water, no air
    with pytest.raises(InsufficientBackground):
        estimate_background_noise(vol, patch_edge=20)


def test_noise_requires_inplane_size():
    vol = _volume(np.full((30, 30, 8), -1000.0))
    with pytest.raises(ValidationError):
        estimate_background_noise(vol, patch_edge=20)


def test_noise_ignores_anatomy_in_one_corner(rng):
    # median over patches tolerates a corner filled with tissue
    data = np.full((48, 48, 24), -1000.0) + rng.standard_normal((48, 48, 24)) * 3.0
    data[:20, :20, :20] = 40.0
    stats = estimate_background_noise(_volume(data.astype(np.float32)), patch_edge=20)
    assert stats.noise_std == pytest.approx(3.0, rel=0.10)


# ---------------------------------------------------------------------------
# Vessel diameters


def _cylinder_mask_voxels(shape, radius_vox, axis=2):
    grid = np.zeros(shape, dtype=np.uint8)
    cx, cy = (shape[0] - 1) / 2, (shape[1] - 1) / 2
    for i in range(shape[0]):
        for j in range(shape[1]):
            if (i - cx) ** 2 + (j - cy) ** 2 <= radius_vox**2:
                grid[i, j, :] = 1
    return Mask(data=grid)


def test_cylinder_diameter_near_analytic():
    mask = _cylinder_mask_voxels((21, 21, 40), radius_vox=3)
    stats = vessel_diameters(mask, (0.5, 0.5, 0.5))
    assert stats.mean == pytest.approx(3.0, abs=0.5)


def test_single_voxel_diameter_convention():
    grid = np.zeros((5, 5, 5), np.uint8)
    grid[2, 2, 2] = 1
    stats = vessel_diameters(Mask(data=grid), (1.0, 1.0, 1.0))
    # EDT to the nearest background voxel center is one spacing unit
    assert stats.mean == 2.0
    assert stats.sample_count == 1


def test_two_cylinders_bimodal():
    shape = (40, 20, 30)
    grid = np.zeros(shape, np.uint8)
    for center, r in ((10, 2), (29, 4)):
        for i in range(shape[0]):
            for j in range(shape[1]):
                if (i - center) ** 2 + (j - 9.5) ** 2 <= r**2:
                    grid[i, j, :] = 1
    spacing = 0.5
    stats = vessel_diameters(Mask(data=grid), (spacing, spacing, spacing))
    assert stats.min == pytest.approx(2 * 2 * spacing, abs=2 * spacing)
    assert stats.max == pytest.approx(2 * 4 * spacing, abs=2 * spacing)
    assert stats.min < stats.max


def test_empty_mask_rejected():
    with pytest.raises(EmptyMask):
        vessel_diameters(Mask(data=np.zeros((4, 4, 4), np.uint8)), (1, 1, 1))


def test_edt_matches_brute_force_exactly(rng):
    for spacing in ((1.0, 1.0, 1.0), (0.5, 0.5, 2.0), (0.25, 0.5, 1.0)):
        for _ in range(5):
            mask_data = (rng.random((9, 8, 10)) < 0.5).astype(np.uint8)
            mask_data[0, 0, 0] = 0  # keep at least one background voxel
            mask = Mask(data=mask_data)
            got = mask_edt(mask, spacing)
            expected = edt_anisotropic(mask_data.astype(bool), spacing)
            np.testing.assert_array_equal(got, expected)


def test_edt_nondyadic_spacing_close(rng):
    mask_data = (rng.random((8, 8, 8)) < 0.6).astype(np.uint8)
    mask_data[0, 0, 0] = 0
    got = mask_edt(Mask(data=mask_data), (0.457, 0.457, 1.114))
    expected = edt_anisotropic(mask_data.astype(bool), (0.457, 0.457, 1.114))
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_diameters_scale_linearly_with_spacing(rng):
    mask_data = (rng.random((10, 10, 10)) < 0.5).astype(np.uint8)
    mask_data[0, 0, 0] = 0
    mask_data[5, 5, 5] = 1
    mask = Mask(data=mask_data)
    base = vessel_diameters(mask, (0.5, 0.5, 1.0))
    doubled = vessel_diameters(mask, (1.0, 1.0, 2.0))
    for attr in ("mean", "median", "std", "min", "max", "p99"):
        assert getattr(doubled, attr) == 2.0 * getattr(base, attr)
    assert doubled.sample_count == base.sample_count


def test_all_foreground_mask_rejected():
    with pytest.raises(ValidationError):
        vessel_diameters(Mask(data=np.ones((4, 4, 4), np.uint8)), (1, 1, 1))


# ---------------------------------------------------------------------------
# Report assembly


def _noise(value):
    return NoiseStats(noise_std=value, method="test", patch_stds=(value,), patch_air_counts=(1000,))


def test_report_noise_ratio():
    report = domain_gap_report(
        source_intensity=intensity_stats(_volume(np.full((2, 2, 2), 40.0)), (0, 80)),
        target_intensity=intensity_stats(_volume(np.full((2, 2, 2), 42.0)), (0, 80)),
        resolution=resolution_compare((1, 1, 1), (1, 1, 1)),
        source_noise=_noise(2.37),
        target_noise=_noise(7.96),
    )
    assert report.noise_ratio == pytest.approx(3.36, abs=0.01)


def test_report_identical_sides():
    stats = intensity_stats(_volume(np.full((2, 2, 2), 40.0)), (0, 80))
    report = domain_gap_report(
        source_intensity=stats,
        target_intensity=stats,
        resolution=resolution_compare((1, 1, 1), (1, 1, 1)),
        source_noise=_noise(1.0),
        target_noise=_noise(1.0),
    )
    assert report.noise_ratio == 1.0
    assert report.resolution.percent_diff == (0.0, 0.0, 0.0)


def test_report_zero_source_noise_has_no_ratio():
    stats = intensity_stats(_volume(np.full((2, 2, 2), 40.0)), (0, 80))
    report = domain_gap_report(
        source_intensity=stats,
        target_intensity=stats,
        resolution=resolution_compare((1, 1, 1), (1, 1, 1)),
        source_noise=_noise(0.0),
        target_noise=_noise(1.0),
    )
    assert report.noise_ratio is None
