import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slmepi.errors import ValidationError
from slmepi.kspace import (
    IMAGE,
    KSPACE,
    ComplexGrid,
    MeasuredData,
    SamplingPattern,
    apply_sampling,
    epi_pattern,
    epi_patterns,
    fft2_centered,
    fft2c,
    ifft2_centered,
    ifft2c,
    nrmse,
    sign_flip_unmeasured,
    zero_fill,
)

from conftest import crandn


def test_grid_promotes_and_validates():
    g = ComplexGrid(np.ones((4, 6)))
    assert g.shape == (4, 6, 1, 1) and g.data.dtype == np.complex128
    with pytest.raises(ValidationError):
        ComplexGrid(np.ones((4, 5)))
    with pytest.raises(ValidationError):
        ComplexGrid(np.ones((1, 4)))
    bad = np.ones((4, 4), dtype=complex)
    bad[0, 0] = np.nan
    with pytest.raises(ValidationError):
        ComplexGrid(bad)
    with pytest.raises(ValidationError):
        ComplexGrid(np.ones((4, 4)), "fourier")


def test_epi_patterns_even_odd_and_disjoint():
    (p,), (m,) = epi_patterns(8)
    assert p.kept_lines == (0, 2, 4, 6)
    assert m.kept_lines == (1, 3, 5, 7)
    for R in (2, 3):
        (p,), (m,) = epi_patterns(12, R)
        assert p.kept_lines[:2] == (0, 2 * R)
        assert m.kept_lines[0] == R
        assert not set(p.kept_lines) & set(m.kept_lines)


def test_multishot_patterns_tile_the_grid():
    plus, minus = epi_patterns(16, acceleration=1, shots=2)
    lines = sorted(i for pat in plus + minus for i in pat.kept_lines)
    assert lines == list(range(16))


def test_pattern_validation():
    with pytest.raises(ValidationError):
        SamplingPattern(8, ())
    with pytest.raises(ValidationError):
        SamplingPattern(8, (2, 1))
    with pytest.raises(ValidationError):
        SamplingPattern(8, (0, 8))
    with pytest.raises(ValidationError):
        epi_pattern(8, acceleration=0)


def test_sampling_ones_and_zero():
    p = epi_pattern(4)
    d = apply_sampling(ComplexGrid(np.ones((4, 4))), p)
    assert d.samples.shape == (4, 2, 1, 1)
    assert np.all(d.samples == 1)
    z = apply_sampling(ComplexGrid(np.zeros((4, 4))), epi_pattern(4, "negative"))
    assert not np.any(z.samples)


def test_sampling_dimension_mismatch():
    with pytest.raises(ValidationError, match="ny"):
        apply_sampling(ComplexGrid(np.ones((4, 6))), epi_pattern(4))
    with pytest.raises(ValidationError):
        apply_sampling(ComplexGrid(np.ones((4, 4)), IMAGE), epi_pattern(4))


def test_zero_fill_layout():
    p = epi_pattern(4)
    g = zero_fill(MeasuredData(p, np.ones((4, 2))))
    assert np.all(g.data[:, [0, 2]] == 1) and not np.any(g.data[:, [1, 3]])


def test_sampling_matches_dense_selection_matrix(rng):
    k = ComplexGrid(crandn(rng, 8, 8))
    p = epi_pattern(8, "negative")
    A = np.eye(8)[list(p.kept_lines)]
    d = apply_sampling(k, p)
    assert np.array_equal(d.samples[..., 0, 0], k.data[..., 0, 0] @ A.T)
    again = apply_sampling(zero_fill(d), p)
    assert np.array_equal(again.samples, d.samples)


def test_sampling_adjoint_dot_product(rng):
    for _ in range(20):
        shape = (int(rng.integers(2, 33)), 2 * int(rng.integers(1, 17)),
                 int(rng.integers(1, 5)), int(rng.integers(1, 3)))
        p = epi_pattern(shape[1], "positive" if rng.random() < 0.5 else "negative")
        x = ComplexGrid(crandn(rng, *shape))
        y = MeasuredData(p, crandn(rng, shape[0], len(p.kept_lines), *shape[2:]))
        lhs = np.vdot(y.samples, apply_sampling(x, p).samples)
        rhs = np.vdot(zero_fill(y).data, x.data)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(2, 12), half=st.integers(1, 8), R=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_complementary_patterns_partition_kspace(nx, half, R, seed):
    ny = 2 * half
    rng = np.random.default_rng(seed)
    k = ComplexGrid(crandn(rng, nx, ny, 2))
    (p,), (m,) = epi_patterns(ny)
    total = zero_fill(apply_sampling(k, p)).data + zero_fill(apply_sampling(k, m)).data
    assert np.array_equal(total, k.data)


def test_sign_flip_ones_and_involution(rng):
    p = epi_pattern(4)
    f = sign_flip_unmeasured(ComplexGrid(np.ones((4, 4))), p)
    assert np.all(f.data[:, [0, 2]] == 1) and np.all(f.data[:, [1, 3]] == -1)
    k = ComplexGrid(crandn(rng, 8, 8))
    p = epi_pattern(8)
    assert np.array_equal(sign_flip_unmeasured(sign_flip_unmeasured(k, p), p).data, k.data)
    assert np.array_equal(apply_sampling(sign_flip_unmeasured(k, p), p).samples,
                          apply_sampling(k, p).samples)


def test_sign_flip_is_half_fov_shift(rng):
    img = crandn(rng, 8, 8)
    k = ComplexGrid(fft2c(img))
    out = ifft2c(sign_flip_unmeasured(k, epi_pattern(8)).data)[..., 0, 0]
    assert np.max(np.abs(out - np.roll(img, 4, axis=1))) <= 1e-12


def test_fft_unitary_and_inverse(rng):
    g = ComplexGrid(crandn(rng, 16, 12, 3), IMAGE)
    k = fft2_centered(g)
    assert abs(np.linalg.norm(k.data) - np.linalg.norm(g.data)) <= 1e-12 * np.linalg.norm(g.data)
    assert np.max(np.abs(ifft2_centered(k).data - g.data)) <= 1e-12
    with pytest.raises(ValidationError):
        fft2_centered(k)


def test_fft_center_delta_is_flat():
    img = np.zeros((8, 8))
    img[4, 4] = 1
    k = fft2c(img)
    assert np.allclose(np.abs(k), 1 / 8, atol=1e-15)


def test_fft_shift_theorem_matches_direct_dft(rng):
    n = 8
    img = crandn(rng, n, n)
    idx = np.arange(n) - n // 2
    W = np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    direct = W @ img @ W.T
    assert np.max(np.abs(direct - fft2c(img))) <= 1e-12
    shifted = np.roll(img, n // 2, axis=1)
    signs = (-1.0) ** idx
    assert np.max(np.abs(fft2c(shifted) - fft2c(img) * signs[np.newaxis, :])) <= 1e-12


def test_nrmse_examples(rng):
    ref = ComplexGrid(crandn(rng, 6, 6))
    assert nrmse(ref, ref) == 0
    assert nrmse(np.zeros_like(ref.data), ref) == pytest.approx(1.0, abs=1e-15)
    assert nrmse(1.1 * ref.data, ref) == pytest.approx(0.1, abs=1e-12)
    assert nrmse(np.exp(1j) * ref.data, ref, align_phase=True) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        nrmse(ref, np.zeros((6, 6)))
    with pytest.raises(ValidationError):
        nrmse(ref, np.ones((6, 4)))


def test_measured_data_checks_line_count():
    with pytest.raises(ValidationError):
        MeasuredData(epi_pattern(8), np.ones((4, 3)))
    assert KSPACE == "kspace"
