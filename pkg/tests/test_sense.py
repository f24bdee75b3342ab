import numpy as np
import pytest

from slmepi.errors import ValidationError
from slmepi.kspace import fft2c, ifft2c
from slmepi.sense import (
    SenseMaps,
    encode,
    encode_adjoint,
    encode_sampled,
    encode_sampled_adjoint,
    estimate_maps_from_acs,
    normalize_maps,
)
from slmepi.simulation import make_phantom, make_sensitivities

from conftest import crandn


def _vdot(a, b):
    return np.vdot(a.ravel(), b.ravel())


def test_maps_validation():
    with pytest.raises(ValidationError):
        SenseMaps(np.full((4, 4, 2), 1.0))
    m = np.zeros((4, 4, 1))
    with pytest.raises(ValidationError):
        SenseMaps(m)
    support = np.zeros((4, 4), dtype=bool)
    support[1:3, 1:3] = True
    with pytest.raises(ValidationError):
        SenseMaps(np.ones((4, 4, 1)), support)
    s = SenseMaps.from_mask(support)
    assert s.nc == 1 and s.support.sum() == 4


def test_normalize_maps_sum_of_squares(rng):
    m = normalize_maps(crandn(rng, 8, 8, 3))
    assert np.allclose(np.sum(np.abs(m.maps) ** 2, axis=2), 1.0, atol=1e-12)


@pytest.mark.parametrize("mask_kind", ["none", "lines", "batched"])
def test_encoding_adjoint_50_trials(mask_kind, rng):
    maps = make_sensitivities(8, 10, 3)
    worst = 0.0
    for _ in range(50):
        if mask_kind == "none":
            x, y = crandn(rng, 8, 10), crandn(rng, 8, 10, 3)
            ax, aty = encode(x, maps), encode_adjoint(y, maps)
        elif mask_kind == "lines":
            mask = rng.random(10) < 0.5
            x, y = crandn(rng, 8, 10), crandn(rng, 8, 10, 3)
            ax, aty = encode_sampled(x, maps, mask), encode_sampled_adjoint(y, maps, mask)
        else:
            mask = rng.random((10, 2)) < 0.5
            x, y = crandn(rng, 8, 10, 2), crandn(rng, 8, 10, 3, 2)
            ax, aty = encode_sampled(x, maps, mask), encode_sampled_adjoint(y, maps, mask)
        lhs, rhs = _vdot(ax, y), _vdot(x, aty)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    assert worst <= 1e-12


def test_full_encoding_is_isometry_on_support(rng):
    maps = make_sensitivities(16, 16, 4)
    x = crandn(rng, 16, 16)
    assert np.allclose(encode_adjoint(encode(x, maps), maps), x, atol=1e-12)


def test_encode_matches_fft_of_modulated_image(rng):
    maps = make_sensitivities(8, 8, 2)
    x = crandn(rng, 8, 8)
    k = encode(x, maps)
    assert np.allclose(k, fft2c(maps.maps * x[..., None]), atol=1e-13)
    assert np.allclose(ifft2c(k), maps.maps * x[..., None], atol=1e-13)


def test_acs_maps_close_to_truth_on_object():
    maps = make_sensitivities(64, 64, 8)
    rho = make_phantom(64, 64).data[:, :, 0, 0]
    k = fft2c(maps.maps * rho[..., None])
    est = estimate_maps_from_acs(k[:, 20:44], 64)
    assert np.allclose(np.sum(np.abs(est.maps) ** 2, axis=2)[est.support], 1.0)
    obj = np.abs(rho) > 0.15
    # maps are defined up to one common phase per pixel
    inner = np.abs(np.sum(est.maps * np.conj(maps.maps), axis=2))
    assert np.median(inner[obj]) > 0.98
    with pytest.raises(ValidationError):
        estimate_maps_from_acs(np.zeros((8, 12, 2)), 8)
