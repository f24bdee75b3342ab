"""Synthetic EPI acquisitions: phantoms, coils, polarity phase errors, noise."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kspace import (
    IMAGE,
    KSPACE,
    ComplexGrid,
    MeasuredData,
    apply_sampling,
    epi_patterns,
    fft2c,
)
from .sense import SenseMaps, normalize_maps

# Modified Shepp-Logan: (intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)
# a and x0 refer to the horizontal image axis, b and y0 to the vertical one.
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

# (intensity, radius, u0, v0) in normalized coordinates; u is readout, v phase encode
DISCS = (
    (1.0, 0.42, 0.0, 0.0),
    (0.5, 0.14, 0.15, -0.2),
    (-0.4, 0.1, -0.18, 0.12),
    (0.8, 0.06, 0.2, 0.22),
)


def _coords(nx, ny):
    """Pixel-center coordinates in [-1, 1]; ``u`` down the rows, ``v`` across."""
    u = (np.arange(nx) - (nx - 1) / 2) * (2.0 / nx)
    v = (np.arange(ny) - (ny - 1) / 2) * (2.0 / ny)
    return np.meshgrid(u, v, indexing="ij")


def make_phantom(nx, ny, kind="shepp_logan", fov_fraction=1.0):
    """Real, nonnegative test object on an ``nx`` x ``ny`` image grid.

    ``shepp_logan`` is rasterized in the usual display orientation (rows run
    top to bottom along the readout axis, columns left to right along phase
    encoding). ``discs`` stays inside the central half of the phase-encode
    field of view, so its half-FOV ghost never overlaps it. ``fov_fraction``
    shrinks the object by that factor.
    """
    if nx < 32 or ny < 32:
        raise ValidationError("phantoms need at least 32x32 pixels")
    u, v = _coords(nx, ny)
    u, v = u / fov_fraction, v / fov_fraction
    img = np.zeros((nx, ny))
    if kind == "shepp_logan":
        # vertical axis points up, so the first row is the top of the image
        yv, xh = -u, v
        for val, a, b, x0, y0, ang in SHEPP_LOGAN:
            t = np.deg2rad(ang)
            xr = (xh - x0) * np.cos(t) + (yv - y0) * np.sin(t)
            yr = -(xh - x0) * np.sin(t) + (yv - y0) * np.cos(t)
            img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    elif kind == "discs":
        for val, r, u0, v0 in DISCS:
            img[(u - u0) ** 2 + (v - v0) ** 2 <= r ** 2] += val
    else:
        raise ValidationError(f"unknown phantom {kind!r}")
    img = np.clip(img, 0.0, None)
    return ComplexGrid(img.astype(np.complex128), IMAGE)


def make_sensitivities(nx, ny, nc, width=0.6, radius=1.1):
    """Smooth complex coil profiles, sum-of-squares normalized everywhere.

    Coil ``c`` is a Gaussian lobe of standard deviation ``width`` centered
    at angle ``2*pi*c/nc`` on a circle of ``radius`` (normalized units),
    with a slowly varying phase that differs between coils.
    """
    if nc < 1:
        raise ValidationError("need at least one channel")
    if nc == 1:
        return SenseMaps(np.ones((nx, ny, 1), dtype=np.complex128))
    u, v = _coords(nx, ny)
    raw = np.empty((nx, ny, nc), dtype=np.complex128)
    for c in range(nc):
        th = 2 * np.pi * c / nc
        cu, cv = radius * np.cos(th), radius * np.sin(th)
        mag = np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * width ** 2))
        phase = th + 0.6 * (u * np.sin(th) - v * np.cos(th))
        raw[:, :, c] = mag * np.exp(1j * phase)
    return normalize_maps(raw)


@dataclass(frozen=True)
class PhaseErrorModel:
    """Smooth image-domain phase applied to one readout polarity.

    ``constant``: ``[phi0]``. ``linear_1d``: ``[offset, slope]`` with the
    slope in radians per pixel along the readout axis, measured from the
    grid center. ``polynomial_2d``: six coefficients of
    ``c0 + c1 u + c2 v + c3 u^2 + c4 u v + c5 v^2`` on normalized
    coordinates ``u, v`` in [-1, 1].
    """

    kind: str = "none"
    coefficients: tuple = ()

    def __post_init__(self):
        n = {"none": 0, "constant": 1, "linear_1d": 2, "polynomial_2d": 6}
        if self.kind not in n:
            raise ValidationError(f"unknown phase model {self.kind!r}")
        coef = tuple(float(c) for c in self.coefficients)
        if len(coef) != n[self.kind]:
            raise ValidationError(f"{self.kind} needs {n[self.kind]} coefficients")
        if not np.all(np.isfinite(coef)):
            raise ValidationError("phase coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)

    def phase(self, nx, ny):
        c = self.coefficients
        if self.kind == "none":
            return np.zeros((nx, ny))
        if self.kind == "constant":
            return np.full((nx, ny), c[0])
        if self.kind == "linear_1d":
            x = np.arange(nx) - nx // 2
            return np.broadcast_to((c[0] + c[1] * x)[:, np.newaxis], (nx, ny)).copy()
        u, v = _coords(nx, ny)
        return c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v

    def scaled(self, factor):
        return PhaseErrorModel(self.kind, tuple(factor * c for c in self.coefficients))


def apply_phase_error(img, model):
    """Multiply an image-domain grid by ``exp(i * phi(x, y))``."""
    if img.domain != IMAGE:
        raise ValidationError("phase errors are applied in the image domain")
    if model.kind == "none":
        return img
    ph = np.exp(1j * model.phase(img.nx, img.ny))
    return img.with_data(img.data * ph[:, :, np.newaxis, np.newaxis])


@dataclass(frozen=True)
class SimScenario:
    """Everything needed to reproduce one synthetic acquisition.

    ``phase_plus`` / ``phase_minus`` may be a single model or a list with
    one model per shot. ``noise_sigma`` is the standard deviation of the
    circular complex Gaussian noise per k-space sample (``E|n|^2 = sigma^2``);
    the same noise level is applied to the calibration lines. ``coil_width``
    is the lobe width passed to :func:`make_sensitivities`; broad lobes give
    poorly conditioned parallel imaging.
    """

    nx: int = 64
    ny: int = 64
    nc: int = 8
    ns: int = 1
    acceleration: int = 1
    phantom: str = "shepp_logan"
    fov_fraction: float = 1.0
    phase_plus: object = PhaseErrorModel()
    phase_minus: object = PhaseErrorModel()
    acs_phase: PhaseErrorModel = PhaseErrorModel()
    noise_sigma: float = 0.0
    acs_lines: int = 24
    coil_width: float = 0.6
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        if self.acs_lines > self.ny or self.acs_lines < 1:
            raise ValidationError("acs_lines must lie in [1, ny]")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.coil_width <= 0:
            raise ValidationError("coil_width must be positive")

    def phase_models(self, polarity):
        m = self.phase_plus if polarity == "positive" else self.phase_minus
        if isinstance(m, PhaseErrorModel):
            return [m] * self.ns
        if len(m) != self.ns:
            raise ValidationError("need one phase model per shot")
        return list(m)


@dataclass(frozen=True)
class SimulatedEPI:
    """Output of :func:`simulate_epi`.

    ``d_plus`` / ``d_minus`` hold one :class:`MeasuredData` per shot.
    ``truth_plus`` / ``truth_minus`` are the ideal per-channel images
    ``(nx, ny, nc, ns)`` each polarity would produce if fully sampled.
    """

    d_plus: list
    d_minus: list
    acs: ComplexGrid
    truth: ComplexGrid
    truth_plus: ComplexGrid
    truth_minus: ComplexGrid
    maps: SenseMaps
    support: np.ndarray = field(repr=False)
    scenario: SimScenario = None


def _noise(rng, shape, sigma):
    if sigma == 0:
        return np.zeros(shape, dtype=np.complex128)
    return (sigma / np.sqrt(2)) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_epi(scn, phantom=None, maps=None):
    """Simulate interleaved EPI k-space with polarity-dependent phase."""
    rng = np.random.default_rng(scn.seed)
    if phantom is None:
        phantom = make_phantom(scn.nx, scn.ny, scn.phantom, scn.fov_fraction)
    if maps is None:
        maps = make_sensitivities(scn.nx, scn.ny, scn.nc, width=scn.coil_width)
    if maps.nc != scn.nc:
        raise ValidationError("maps channel count differs from the scenario")
    rho = phantom.data[:, :, 0, 0]
    coil_imgs = maps.maps * rho[:, :, np.newaxis]
    plus_pat, minus_pat = epi_patterns(scn.ny, scn.acceleration, scn.ns)

    def polarity(pol, patterns):
        imgs = np.empty((scn.nx, scn.ny, scn.nc, scn.ns), dtype=np.complex128)
        data = []
        for s, (model, pat) in enumerate(zip(scn.phase_models(pol), patterns)):
            img = apply_phase_error(ComplexGrid(coil_imgs, IMAGE), model).data[..., 0]
            imgs[..., s] = img
            k = ComplexGrid(fft2c(img), KSPACE)
            d = apply_sampling(k, pat)
            data.append(MeasuredData(pat, d.samples + _noise(rng, d.samples.shape, scn.noise_sigma)))
        return data, ComplexGrid(imgs, IMAGE)

    d_plus, truth_plus = polarity("positive", plus_pat)
    d_minus, truth_minus = polarity("negative", minus_pat)
    acs_img = apply_phase_error(ComplexGrid(coil_imgs, IMAGE), scn.acs_phase).data[..., 0]
    lo = scn.ny // 2 - scn.acs_lines // 2
    acs_k = fft2c(acs_img)[:, lo:lo + scn.acs_lines]
    acs_k = acs_k + _noise(rng, acs_k.shape, scn.noise_sigma)
    return SimulatedEPI(
        d_plus,
        d_minus,
        ComplexGrid(acs_k, KSPACE) if scn.acs_lines % 2 == 0 else _odd_acs(acs_k),
        phantom,
        truth_plus,
        truth_minus,
        maps,
        np.abs(rho) > 0,
        scn,
    )


def _odd_acs(acs_k):
    # ComplexGrid requires an even line count; drop the last calibration line
    return ComplexGrid(acs_k[:, :-1], KSPACE)


def interleave(d_plus, d_minus):
    """Conventional reconstruction input: all measured lines on one grid."""
    nx = d_plus[0].nx
    ny = d_plus[0].pattern.ny
    nc = d_plus[0].samples.shape[2]
    k = np.zeros((nx, ny, nc), dtype=np.complex128)
    for d in list(d_plus) + list(d_minus):
        k[:, list(d.pattern.kept_lines)] += d.samples[..., 0]
    return k
