import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aloft.errors import DimensionError, ValidationError
from aloft.spectral import (build_mask, center, dft2, fft, filter_image, idft2, naive_dft2,
                            split_bands, uncenter)


def rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


# dft2 ---------------------------------------------------------------------

def test_constant_image_is_dc_only():
    x = np.full((1, 4, 4, 1), 2.5)
    f = dft2(x, centered=True)
    expected = np.zeros_like(f)
    expected[0, 2, 2, 0] = 16 * 2.5
    np.testing.assert_allclose(f, expected, atol=1e-12)


def test_impulse_has_flat_spectrum():
    x = np.zeros((1, 4, 4, 1))
    x[0, 0, 0, 0] = 1
    np.testing.assert_allclose(dft2(x, centered=False), np.ones((1, 4, 4, 1)), atol=1e-12)


@pytest.mark.parametrize("h,w", [(4, 4), (3, 5), (7, 6), (8, 8), (16, 16), (17, 9), (24, 20), (31, 2), (1, 1)])
def test_matches_direct_sum_oracle(h, w, rng):
    x = rng.normal(size=(2, h, w, 3))
    assert rel(dft2(x, centered=False), naive_dft2(x)) < 1e-10
    assert rel(dft2(x, centered=True), center(naive_dft2(x))) < 1e-10


@pytest.mark.parametrize("n", [2, 3, 5, 7, 8, 11, 12, 13, 16, 17, 30, 32, 37, 48, 64, 97, 128, 210])
def test_fft_lengths_match_numpy(n, rng):
    z = rng.normal(size=(3, n)) + 1j * rng.normal(size=(3, n))
    assert rel(fft(z), np.fft.fft(z)) < 1e-12
    assert rel(fft(z, inverse=True), np.fft.ifft(z) * n) < 1e-12


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
def test_precision(dtype, tol, rng):
    x = rng.normal(size=(4, 12, 10, 5)).astype(dtype)
    f = dft2(x)
    assert f.dtype == (np.complex64 if dtype == np.float32 else np.complex128)
    assert rel(f, center(naive_dft2(x.astype(np.float64)))) < tol


def test_center_roundtrip(rng):
    z = rng.normal(size=(1, 5, 6, 2))
    assert np.array_equal(uncenter(center(z)), z)


# idft2 --------------------------------------------------------------------

@pytest.mark.parametrize("h,w", [(8, 8), (5, 7), (20, 18)])
def test_roundtrip(h, w, rng):
    x = rng.normal(size=(3, h, w, 2)).astype(np.float32)
    y, residual = idft2(dft2(x), return_residual=True)
    assert rel(y, x) < 1e-5 and residual < 1e-5


def test_zero_spectrum():
    assert not idft2(np.zeros((1, 4, 6, 2), complex)).any()


def test_residual_reports_imaginary_part():
    spec = np.zeros((1, 4, 4, 1), complex)
    spec[0, 2, 3, 0] = 1.0  # a single off-center bin is not Hermitian
    _, residual = idft2(spec, return_residual=True)
    assert residual > 1e-3


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_parseval_and_hermitian(h, w, seed):
    x = np.random.default_rng(seed).normal(size=(1, h, w, 2))
    f = dft2(x, centered=False)
    assert abs((x**2).sum() - (np.abs(f) ** 2).sum() / (h * w)) <= 1e-10 * (x**2).sum() + 1e-12
    mirror = np.conj(f[:, (-np.arange(h)) % h][:, :, (-np.arange(w)) % w])
    np.testing.assert_allclose(f, mirror, atol=1e-9)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_linearity(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(1, 6, 5, 1)), r.normal(size=(1, 6, 5, 1))
    np.testing.assert_allclose(dft2(a * x + b * y), a * dft2(x) + b * dft2(y), atol=1e-9)


def test_requires_4d():
    with pytest.raises(DimensionError):
        dft2(np.zeros((4, 4)))


# masks --------------------------------------------------------------------

def test_mask_examples():
    m = build_mask(8, 8, 0.0)
    assert m.support == 1 and m.bits[4, 4]
    assert build_mask(8, 8, 1.0).bits.all()
    half = build_mask(8, 8, 0.5).bits
    expected = np.zeros((8, 8), bool)
    expected[2:7, 2:7] = True
    assert np.array_equal(half, expected)


def test_mask_rejects_bad_ratio():
    for r in (-0.1, 1.1):
        with pytest.raises(ValidationError):
            build_mask(8, 8, r)


@given(st.integers(1, 20), st.integers(1, 20), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_mask_monotone_and_symmetric(h, w, r1, r2):
    lo, hi = sorted((r1, r2))
    a, b = build_mask(h, w, lo).bits, build_mask(h, w, hi).bits
    assert not (a & ~b).any()
    # symmetric about the center cell wherever the mirror index is on the grid
    cu, cv = h // 2, w // 2
    for u, v in zip(*np.nonzero(b)):
        mu, mv = 2 * cu - u, 2 * cv - v
        if 0 <= mu < h and 0 <= mv < w:
            assert b[mu, mv]


# bands and filtering ---------------------------------------------------------

def test_split_bands_examples(rng):
    f = rng.normal(size=(2, 8, 8, 3)) + 1j * rng.normal(size=(2, 8, 8, 3))
    full = split_bands(f, build_mask(8, 8, 1.0))
    assert np.array_equal(full.low, f) and not full.high.any()
    dc = split_bands(f, build_mask(8, 8, 0.0))
    assert np.count_nonzero(dc.low[0, :, :, 0]) == 1 and dc.low[0, 4, 4, 0] == f[0, 4, 4, 0]
    bands = split_bands(f, build_mask(8, 8, 0.5))
    assert np.array_equal(bands.low + bands.high, f)
    assert not bands.low[:, ~bands.mask.bits].any() and not bands.high[:, bands.mask.bits].any()


def test_split_bands_dimension_check(rng):
    with pytest.raises(DimensionError):
        split_bands(np.zeros((1, 4, 4, 1), complex), build_mask(5, 4, 0.5))


def test_filter_image_examples(rng):
    x = rng.uniform(size=(3, 12, 12, 3))
    np.testing.assert_allclose(filter_image(x, 1.0, "low"), x, atol=1e-5)
    np.testing.assert_allclose(filter_image(x, 1.0, "high"), 0, atol=1e-5)
    total = filter_image(x, 0.3, "low") + filter_image(x, 0.3, "high")
    np.testing.assert_allclose(total, x, atol=1e-5)
    single = filter_image(x[0], 0.3, "low")
    np.testing.assert_allclose(single, filter_image(x, 0.3, "low")[0], atol=1e-12)


def test_filter_image_bad_band(rng):
    with pytest.raises(ValidationError):
        filter_image(np.zeros((4, 4, 3)), 0.5, "mid")
