import numpy as np
import pytest
from hypothesis import given, strategies as st

from plainfinger.enhancement import (EnhancedMap, OrientationMask, enhance, enhance_selective,
                                     gabor_bank, gabor_kernel, grouped_phases, orientation_mask,
                                     safe_arg, soft_orientation_mask, to_display, _nearest_bins)
from plainfinger.errors import InvalidKernel, ShapeMismatch
from plainfinger.orientation import AngleDistribution, OrientationField, encode_angles
from plainfinger.raster import conv2d
from plainfinger.synth import SynthSpec, phase_field, synth_print


def test_bank_two_orientations():
    bank = gabor_bank(bins=2)
    np.testing.assert_array_equal(bank.thetas, [0.0, 90.0])
    k0 = bank.kernels[0]
    # theta = 0: the carrier phase depends on y only
    phase = np.angle(k0)
    np.testing.assert_allclose(phase, np.repeat(phase[:, 12:13], 25, axis=1), atol=1e-12)
    assert np.ptp(phase[:, 12]) > 1.0


def test_kernel_symmetry():
    for k in gabor_bank(bins=6).kernels:
        flipped = k[::-1, ::-1]
        np.testing.assert_allclose(k.real, flipped.real, atol=1e-15)
        np.testing.assert_allclose(k.imag, -flipped.imag, atol=1e-15)


def test_bank_validation():
    with pytest.raises(InvalidKernel):
        gabor_bank(ksize=24)
    with pytest.raises(InvalidKernel):
        gabor_kernel(0.0, 0.1, 4.0, 8)
    with pytest.raises(ValueError):
        gabor_bank(bins=1)


def test_orientation_selectivity():
    bank = gabor_bank()
    img, _ = synth_print(SynthSpec(width=64, height=64, orientation=30.0))
    matched = np.abs(conv2d(img, bank.kernels[15]))[20:-20, 20:-20].mean()
    perp = np.abs(conv2d(img, bank.kernels[60]))[20:-20, 20:-20].mean()
    assert matched >= 5 * perp


def test_zero_image():
    phases, amps = grouped_phases(np.zeros((30, 30)), gabor_bank(bins=4))
    assert not phases.any() and not amps.any()


def test_phase_of_matched_sinusoid():
    bank = gabor_bank()
    spec = SynthSpec(width=80, height=80, orientation=40.0, global_phase=0.7)
    img, _ = synth_print(spec)
    phases, _ = grouped_phases(img, bank)
    psi = phase_field(spec)
    d = np.angle(np.exp(1j * (phases[..., 20] - psi)))[25:-25, 25:-25]
    assert np.max(np.abs(d)) < 0.05


def test_grouped_phases_real_imag_oracle(rng):
    bank = gabor_bank(bins=3)
    img = rng.normal(size=(30, 32))
    phases, amps = grouped_phases(img, bank)
    for i, k in enumerate(bank.kernels):
        c = conv2d(img, k.real) + 1j * conv2d(img, k.imag)
        assert np.max(np.abs(amps[..., i] - np.abs(c))) <= 1e-12
        assert np.max(np.abs(np.angle(np.exp(1j * (phases[..., i] - np.angle(c)))))) <= 1e-9


def test_safe_arg_range():
    z = np.array([-1 + 0j, -1 - 0j, 1e-12, 1j])
    a = safe_arg(z)
    assert a[0] == np.pi and a[1] == np.pi and a[2] == 0.0
    assert np.all((a > -np.pi) & (a <= np.pi))


def test_mask_nearest_bin_cases():
    bank = gabor_bank()
    field = OrientationField(np.array([[46.0, 47.0, 179.5, 179.0, 0.5]]))
    np.testing.assert_array_equal(orientation_mask(field, bank).index, [[23, 23, 0, 0, 0]])


@given(st.sampled_from([2, 3, 4, 5, 6, 9, 10, 12, 18, 20, 36, 45, 60, 90, 180]), st.integers(0, 10 ** 6))
def test_mask_fast_path_matches_brute_force(n, seed):
    thetas = (180 // n) * np.arange(n, dtype=float)
    r = np.random.default_rng(seed)
    step = 180 / n
    angles = np.concatenate([r.uniform(0, 180, 50), (np.arange(n) + 0.5) * step, thetas])
    angles = angles[angles < 180]
    d = np.abs(angles[:, None] - thetas)
    d = np.minimum(d, 180 - d)
    np.testing.assert_array_equal(_nearest_bins(angles, thetas), np.argmin(d, axis=1))


def test_mask_upsamples_strided_field():
    bank = gabor_bank()
    field = OrientationField(np.array([[0.0, 90.0], [10.0, 20.0]]), stride=4)
    m = orientation_mask(field, bank, shape=(7, 6))
    assert m.shape == (7, 6)
    assert m.index[0, 0] == 0 and m.index[0, 5] == 45 and m.index[6, 5] == 10
    assert np.all(m.dense().sum(axis=-1) == 1)


def test_soft_mask():
    probs = encode_angles(np.array([[10.0, 100.0]])).probs
    soft = soft_orientation_mask(AngleDistribution(probs))
    np.testing.assert_allclose(soft.weights.sum(axis=-1), 1.0, atol=1e-6)
    onehot = np.zeros((1, 2, 90))
    onehot[0, 0, 5] = onehot[0, 1, 50] = 1
    hard = OrientationMask(bins=90, index=np.array([[5, 50]]))
    np.testing.assert_array_equal(soft_orientation_mask(AngleDistribution(onehot)).dense(), hard.dense())
    with pytest.raises(ShapeMismatch):
        soft_orientation_mask(AngleDistribution(probs), gabor_bank(bins=45))


def test_enhance_selection_and_null_mask(rng):
    phases = rng.uniform(-np.pi, np.pi, size=(5, 6, 4))
    e = enhance(phases, OrientationMask(bins=4, index=np.full((5, 6), 2)))
    np.testing.assert_array_equal(e.phase, phases[..., 2])
    e0 = enhance(phases, OrientationMask(bins=4, weights=np.zeros((5, 6, 4))))
    assert not e0.phase.any()
    uniform = enhance(phases, OrientationMask(bins=4, weights=np.full((5, 6, 4), 0.25)))
    np.testing.assert_allclose(uniform.phase, phases.mean(axis=-1))
    with pytest.raises(ShapeMismatch):
        enhance(phases, OrientationMask(bins=4, index=np.zeros((5, 5), int)))


def _half_plane_image(rng, h=72, w=80):
    return rng.normal(size=(h, w))


def test_selective_matches_grouped(rng):
    bank = gabor_bank(bins=18)
    img = rng.normal(size=(50, 70))
    idx = rng.integers(0, 18, size=(50, 70))
    mask = OrientationMask(bins=18, index=idx)
    phases, amps = grouped_phases(img, bank)
    full = enhance(phases, mask, amps)
    sel = enhance_selective(img, bank, mask, tile=16)
    assert np.max(np.abs(sel.amplitude - full.amplitude)) <= 1e-10
    ok = full.amplitude > 1e-6
    d = np.angle(np.exp(1j * (sel.phase - full.phase)))
    assert np.max(np.abs(d[ok])) <= 1e-9


def test_selective_region(rng):
    bank = gabor_bank(bins=9)
    img = rng.normal(size=(40, 40))
    mask = OrientationMask(bins=9, index=rng.integers(0, 9, size=(40, 40)))
    region = np.zeros((40, 40), bool)
    region[5:20, 10:35] = True
    a = enhance_selective(img, bank, mask)
    b = enhance_selective(img, bank, mask, region=region)
    np.testing.assert_array_equal(b.phase[region], a.phase[region])
    assert not b.phase[~region].any() and not b.amplitude[~region].any()


def test_selective_needs_hard_mask():
    bank = gabor_bank(bins=4)
    with pytest.raises(ValueError):
        enhance_selective(np.zeros((30, 30)), bank, OrientationMask(4, weights=np.ones((30, 30, 4)) / 4))


def test_to_display_range():
    e = EnhancedMap(phase=np.array([[0.0, np.pi, np.pi / 2]]))
    np.testing.assert_allclose(to_display(e), [[255.0, 0.0, 127.5]], atol=1e-12)
