import numpy as np
import pytest

from slmepi.errors import ValidationError
from slmepi.evaluation import ghost_ratio
from slmepi.kspace import IMAGE, ComplexGrid, ifft2c
from slmepi.sense import encode
from slmepi.simulation import (
    SHEPP_LOGAN,
    PhaseErrorModel,
    SimScenario,
    apply_phase_error,
    interleave,
    make_phantom,
    make_sensitivities,
    simulate_epi,
)

from conftest import crandn


def _ellipse_oracle(nx, ny):
    # display convention: row 0 is the top (y = +1), column 0 the left edge (x = -1)
    img = np.zeros((nx, ny))
    for i in range(nx):
        y = 1 - (2 * i + 1) / nx
        for j in range(ny):
            x = -1 + (2 * j + 1) / ny
            for val, a, b, x0, y0, ang in SHEPP_LOGAN:
                c, s = np.cos(np.deg2rad(ang)), np.sin(np.deg2rad(ang))
                xr, yr = (x - x0) * c + (y - y0) * s, -(x - x0) * s + (y - y0) * c
                if (xr / a) ** 2 + (yr / b) ** 2 <= 1:
                    img[i, j] += val
    return np.clip(img, 0, None)


def test_phantom_basic_properties():
    for kind in ("shepp_logan", "discs"):
        p = make_phantom(64, 64, kind).data[:, :, 0, 0]
        assert p.sum().real > 0 and np.all(p.imag == 0) and np.all(p.real >= 0)
        support = np.abs(p) > 0
        assert not (support[0].any() or support[-1].any() or support[:, 0].any() or support[:, -1].any())
    discs = make_phantom(64, 64, "discs").data[:, :, 0, 0]
    assert (np.abs(discs) > 0).mean() <= 0.5
    with pytest.raises(ValidationError):
        make_phantom(16, 16)


def test_shepp_logan_matches_ellipse_oracle():
    p = make_phantom(64, 64).data[:, :, 0, 0].real
    assert np.allclose(p, _ellipse_oracle(64, 64), atol=1e-12)


def test_sensitivities():
    one = make_sensitivities(16, 16, 1)
    assert np.allclose(np.abs(one.maps), 1.0)
    m = make_sensitivities(32, 32, 8)
    assert np.allclose(np.sum(np.abs(m.maps) ** 2, axis=2), 1.0, atol=1e-10)
    A = m.maps.reshape(-1, 8)
    A = A / np.linalg.norm(A, axis=0)
    G = A.conj().T @ A
    off = np.abs(G - np.diag(np.diag(G)))
    assert off.max() < 1 - 1e-6  # no two profiles are proportional
    assert np.linalg.svd(A, compute_uv=False)[-1] > 1e-6


def test_apply_phase_error(rng):
    img = ComplexGrid(crandn(rng, 8, 8, 2), IMAGE)
    assert apply_phase_error(img, PhaseErrorModel()) is img
    neg = apply_phase_error(img, PhaseErrorModel("constant", (np.pi,)))
    assert np.allclose(neg.data, -img.data, atol=1e-14)
    poly = PhaseErrorModel("polynomial_2d", tuple(rng.standard_normal(6)))
    out = apply_phase_error(img, poly)
    assert np.allclose(np.abs(out.data), np.abs(img.data), atol=1e-14)
    lin = PhaseErrorModel("linear_1d", (0.1, 0.05)).phase(8, 8)
    assert np.allclose(lin[:, 0], 0.1 + 0.05 * (np.arange(8) - 4))
    with pytest.raises(ValidationError):
        PhaseErrorModel("constant", (1.0, 2.0))
    with pytest.raises(ValidationError):
        PhaseErrorModel("cubic", ())
    with pytest.raises(ValidationError):
        apply_phase_error(ComplexGrid(np.zeros((4, 4))), poly)


def test_phase_commutes_with_modulation(rng):
    maps = make_sensitivities(16, 16, 3)
    rho = crandn(rng, 16, 16)
    poly = PhaseErrorModel("polynomial_2d", (0.3, 0.8, 0.4, 0.2, 0.1, 0.2))
    a = apply_phase_error(ComplexGrid(maps.maps * rho[..., None], IMAGE), poly).data[..., 0]
    phased = apply_phase_error(ComplexGrid(rho, IMAGE), poly).data[:, :, 0, 0]
    assert np.allclose(a, maps.maps * phased[..., None], atol=1e-14)


def test_noiseless_interleave_round_trip():
    sim = simulate_epi(SimScenario())
    img = ifft2c(interleave(sim.d_plus, sim.d_minus))
    ref = sim.maps.maps * sim.truth.data[:, :, 0, 0][..., None]
    assert np.max(np.abs(img - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_constant_pi_phase_makes_half_fov_ghost():
    sim = simulate_epi(SimScenario(phantom="discs", phase_minus=PhaseErrorModel("constant", (np.pi,))))
    img = ifft2c(interleave(sim.d_plus, sim.d_minus))
    energy = np.sum(np.abs(img) ** 2, axis=2)
    assert energy[~sim.support].sum() > 0.1 * energy.sum()


def test_identical_phases_give_no_ghost():
    pe = PhaseErrorModel("polynomial_2d", (0.3, 0.8, 0.4, 0.2, 0.1, 0.2))
    sim = simulate_epi(SimScenario(phantom="discs", phase_plus=pe, phase_minus=pe))
    img = ifft2c(interleave(sim.d_plus, sim.d_minus))
    assert ghost_ratio(ComplexGrid(img, IMAGE), sim.support) <= 1e-10


def test_simulation_is_deterministic():
    scn = SimScenario(noise_sigma=0.01, acceleration=2, ns=2, seed=7)
    a, b = simulate_epi(scn), simulate_epi(scn)
    for x, y in zip(a.d_plus + a.d_minus, b.d_plus + b.d_minus):
        assert x.samples.tobytes() == y.samples.tobytes()
    assert a.acs.data.tobytes() == b.acs.data.tobytes()
    c = simulate_epi(SimScenario(noise_sigma=0.01, acceleration=2, ns=2, seed=8))
    assert c.d_plus[0].samples.tobytes() != a.d_plus[0].samples.tobytes()


def test_noise_level_matches_sigma():
    clean = simulate_epi(SimScenario(nc=2))
    noisy = simulate_epi(SimScenario(nc=2, noise_sigma=0.05))
    n = noisy.d_plus[0].samples - clean.d_plus[0].samples
    assert np.mean(np.abs(n) ** 2) == pytest.approx(0.05 ** 2, rel=0.05)


def test_acs_uses_its_own_phase_model():
    pe = PhaseErrorModel("constant", (0.7,))
    sim = simulate_epi(SimScenario(nc=2, acs_phase=pe, acs_lines=16))
    ref = encode(sim.truth.data[:, :, 0, 0] * np.exp(0.7j), sim.maps)[:, 24:40]
    assert np.allclose(sim.acs.data[..., 0], ref, atol=1e-12)


def test_scenario_validation():
    with pytest.raises(ValidationError):
        SimScenario(acs_lines=65)
    with pytest.raises(ValidationError):
        SimScenario(noise_sigma=-1)
    with pytest.raises(ValidationError):
        simulate_epi(SimScenario(ns=2, phase_plus=[PhaseErrorModel()]))
