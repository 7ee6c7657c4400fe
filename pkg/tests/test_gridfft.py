"""Transform correctness: frozen oracle values first, then properties.

The brute-force dft_reference is validated against hand-computed spectra,
and the fast path is then held to agreement with it. Tolerances 1e-9 except
where a case states tighter.
"""

import numpy as np
import pytest

from fdtn.gridfft import (
    ComplexGrid,
    RealGrid,
    dft_reference,
    fft1,
    fft2,
    fft2_fast,
    fft_forward,
    fft_inverse,
    ifft1,
    ifft2,
    ifft2_fast,
    translate_periodic,
)


def rand_grid(rng, w, h):
    return RealGrid(w, h, rng.uniform(size=(h, w)))


# ---------------------------------------------------------------------------
# dft_reference oracle values


def test_reference_delta_at_zero():
    # delta transforms to the all-ones spectrum
    g = RealGrid(4, 1, np.array([[1.0, 0.0, 0.0, 0.0]]))
    spec = dft_reference(g)
    assert np.allclose(spec.re, 1.0, atol=1e-12)
    assert np.allclose(spec.im, 0.0, atol=1e-12)


def test_reference_constant_2x2():
    spec = dft_reference(RealGrid(2, 2, np.ones((2, 2))))
    want = np.array([[4.0, 0.0], [0.0, 0.0]])
    assert np.allclose(spec.re, want, atol=1e-12)
    assert np.allclose(spec.im, 0.0, atol=1e-12)


def test_reference_cosine_frequency_one():
    n = np.arange(8)
    g = RealGrid(8, 1, np.cos(2 * np.pi * n / 8)[None, :])
    spec = dft_reference(g)
    want = np.zeros(8)
    want[1] = want[7] = 4.0  # amplitude * N / 2 at +-1
    assert np.max(np.abs(spec.re - want[None, :])) < 1e-12
    assert np.max(np.abs(spec.im)) < 1e-12


def test_reference_size_guard():
    with pytest.raises(ValueError):
        dft_reference(RealGrid(65, 64, np.zeros((64, 65))))


# ---------------------------------------------------------------------------
# fft_forward against the frozen values and the reference


def test_forward_delta_all_ones():
    g = RealGrid(8, 1, np.eye(1, 8))
    spec = fft_forward(g)
    assert np.allclose(spec.re, 1.0, atol=1e-12)
    assert np.allclose(spec.im, 0.0, atol=1e-12)


def test_forward_constant_dc_only():
    c = 0.7
    spec = fft_forward(RealGrid(4, 1, np.full((1, 4), c)))
    assert abs(spec.re[0, 0] - 4 * c) < 1e-12
    assert np.max(np.abs(spec.re[0, 1:])) < 1e-12
    assert np.max(np.abs(spec.im)) < 1e-12


def test_forward_matches_reference_8x8():
    rng = np.random.default_rng(11)
    g = rand_grid(rng, 8, 8)
    a = fft_forward(g)
    b = dft_reference(g)
    assert np.max(np.abs(a.to_complex() - b.to_complex())) < 1e-9


def test_forward_matches_reference_all_sizes_to_16():
    rng = np.random.default_rng(12)
    for w in range(1, 17):
        for h in range(1, 17):
            g = rand_grid(rng, w, h)
            diff = fft_forward(g).to_complex() - dft_reference(g).to_complex()
            assert np.max(np.abs(diff)) < 1e-9, (w, h)


def test_forward_matches_reference_40():
    rng = np.random.default_rng(13)
    for w, h in [(40, 40), (40, 3), (3, 40), (40, 1), (1, 40), (33, 27)]:
        g = rand_grid(rng, w, h)
        diff = fft_forward(g).to_complex() - dft_reference(g).to_complex()
        assert np.max(np.abs(diff)) < 1e-9, (w, h)


def test_forward_conjugate_symmetry():
    rng = np.random.default_rng(14)
    for w, h in [(8, 8), (40, 40), (5, 9)]:
        spec = fft_forward(rand_grid(rng, w, h))
        assert spec.conjugate_symmetry_error() < 1e-9


# ---------------------------------------------------------------------------
# fft_inverse


def test_roundtrip_16x16():
    rng = np.random.default_rng(15)
    g = rand_grid(rng, 16, 16)
    back = fft_inverse(fft_forward(g))
    assert np.max(np.abs(back.values - g.values)) < 1e-9


def test_inverse_all_ones_spectrum_is_delta():
    spec = ComplexGrid(8, 1, np.ones((1, 8)), np.zeros((1, 8)))
    back = fft_inverse(spec)
    want = np.eye(1, 8)
    assert np.max(np.abs(back.values - want)) < 1e-12


def test_inverse_delta_at_three():
    g = RealGrid(8, 1, np.eye(1, 8, 3))
    back = fft_inverse(dft_reference(g))
    assert abs(back.values[0, 3] - 1.0) < 1e-10
    off = back.values.copy()
    off[0, 3] = 0.0
    assert np.max(np.abs(off)) < 1e-10


def test_inverse_drops_asymmetric_imaginary_part():
    # not conjugate-symmetric: inverse has a genuine imaginary part to drop
    rng = np.random.default_rng(16)
    spec = ComplexGrid(6, 5, rng.normal(size=(5, 6)), rng.normal(size=(5, 6)))
    assert spec.conjugate_symmetry_error() > 1e-3
    back = fft_inverse(spec)
    want = ifft2(spec.to_complex()).real
    assert np.max(np.abs(back.values - want)) < 1e-12


# ---------------------------------------------------------------------------
# properties


SIZE_LATTICE = [1, 2, 3, 4, 5, 7, 8, 11, 16, 27, 32, 40, 64]


def test_roundtrip_size_lattice():
    rng = np.random.default_rng(17)
    for w in SIZE_LATTICE:
        for h in SIZE_LATTICE:
            g = rand_grid(rng, w, h)
            back = fft_inverse(fft_forward(g))
            assert np.max(np.abs(back.values - g.values)) < 1e-9, (w, h)


def test_linearity():
    rng = np.random.default_rng(18)
    for w, h in [(8, 8), (40, 40), (13, 7)]:
        x = rand_grid(rng, w, h)
        y = rand_grid(rng, w, h)
        a, b = 2.5, -1.25
        combo = RealGrid(w, h, a * x.values + b * y.values)
        lhs = fft_forward(combo).to_complex()
        rhs = a * fft_forward(x).to_complex() + b * fft_forward(y).to_complex()
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_parseval():
    rng = np.random.default_rng(19)
    for w, h in [(8, 8), (40, 40), (31, 17)]:
        g = rand_grid(rng, w, h)
        spatial = np.sum(g.values**2)
        spec = fft_forward(g).to_complex()
        spectral = np.sum(np.abs(spec) ** 2) / (w * h)
        assert abs(spatial - spectral) < 1e-9 * spatial


def test_shift_theorem():
    rng = np.random.default_rng(20)
    for w, h, dx, dy in [(8, 8, 3, 2), (40, 40, 7, 0), (13, 9, 1, 5)]:
        g = rand_grid(rng, w, h)
        shifted = np.roll(g.values, (dy, dx), axis=(0, 1))
        lhs = fft_forward(RealGrid(w, h, shifted)).to_complex()
        i = np.arange(w)[None, :]
        j = np.arange(h)[:, None]
        ramp = np.exp(-2j * np.pi * (i * dx / w + j * dy / h))
        rhs = fft_forward(g).to_complex() * ramp
        assert np.max(np.abs(lhs - rhs)) < 1e-9


# ---------------------------------------------------------------------------
# raw-array kernels and the hot path


def test_fft1_ifft1_roundtrip_batched():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(4, 3, 40)) + 1j * rng.normal(size=(4, 3, 40))
    assert np.max(np.abs(ifft1(fft1(x)) - x)) < 1e-9


def test_fast_path_agrees_with_algorithmic_path():
    rng = np.random.default_rng(22)
    for shape in [(40, 40), (32, 32), (5, 40, 40), (2, 3, 9, 13), (1, 8)]:
        x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        assert np.max(np.abs(fft2_fast(x) - fft2(x))) < 1e-9, shape
        assert np.max(np.abs(ifft2_fast(x) - ifft2(x))) < 1e-9, shape


def test_fast_path_large_axis_delegates():
    rng = np.random.default_rng(23)
    x = rng.normal(size=(2, 130, 4))
    assert np.max(np.abs(fft2_fast(x) - fft2(x))) < 1e-9


# ---------------------------------------------------------------------------
# grid types and the shift utility


def test_realgrid_validation():
    with pytest.raises(ValueError):
        RealGrid(3, 2, np.zeros(5))
    with pytest.raises(ValueError):
        RealGrid(0, 2, np.zeros(0))


def test_realgrid_reshapes_flat_values():
    g = RealGrid(3, 2, np.arange(6.0))
    assert g.values.shape == (2, 3)
    assert g.values[1, 0] == 3.0


def test_translate_integer_matches_roll():
    rng = np.random.default_rng(24)
    x = rng.uniform(size=(9, 12))
    out = translate_periodic(x, 5, 2)
    assert np.max(np.abs(out - np.roll(x, (2, 5), axis=(0, 1)))) < 1e-9


def test_translate_subpixel_cosine():
    # band-limited signal: fractional shift has a closed form
    w = 16
    n = np.arange(w)
    x = np.cos(2 * np.pi * 2 * n / w)[None, :]
    out = translate_periodic(x, 0.25)
    want = np.cos(2 * np.pi * 2 * (n - 0.25) / w)[None, :]
    assert np.max(np.abs(out - want)) < 1e-9
