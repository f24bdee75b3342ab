"""Coil sensitivity maps and SENSE encoding operators."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kspace import fft2c, ifft2c


@dataclass(frozen=True)
class SenseMaps:
    """Sensitivity profiles of shape ``(nx, ny, nc)``.

    Profiles are normalized so that ``sum_c |map_c|**2 == 1`` on
    ``support`` and vanish outside it. A single-channel binary support mask
    is a valid instance and acts as a pure support constraint.
    """

    maps: np.ndarray = field(repr=False)
    support: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[..., np.newaxis]
        if maps.ndim != 3:
            raise ValidationError("maps must have shape (nx, ny, nc)")
        sos = np.sum(np.abs(maps) ** 2, axis=2)
        support = sos > 0 if self.support is None else np.asarray(self.support, dtype=bool)
        if support.shape != maps.shape[:2]:
            raise ValidationError("support mask shape does not match maps")
        if not support.any():
            raise ValidationError("sensitivity support is empty")
        if np.max(np.abs(sos[support] - 1.0)) > 1e-10:
            raise ValidationError("maps are not sum-of-squares normalized on their support")
        if np.any(sos[~support] > 0):
            raise ValidationError("maps must vanish outside their support")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "support", support)

    @property
    def nc(self):
        return self.maps.shape[2]

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.astype(np.complex128)[..., np.newaxis], mask)


def normalize_maps(raw, support=None):
    """Sum-of-squares normalize raw profiles, zeroing them off ``support``."""
    raw = np.asarray(raw, dtype=np.complex128)
    sos = np.sqrt(np.sum(np.abs(raw) ** 2, axis=2))
    if support is None:
        support = sos > 0
    out = np.zeros_like(raw)
    out[support] = raw[support] / sos[support][:, np.newaxis]
    return SenseMaps(out, support)


def encode(rho, maps):
    """Full Nyquist SENSE encoding: ``rho (nx, ny, ...)`` to channel k-space.

    ``rho`` may carry trailing batch axes; the output inserts the channel
    axis right after the two spatial axes.
    """
    m = maps.maps.reshape(maps.maps.shape + (1,) * (rho.ndim - 2))
    return fft2c(m * rho[:, :, np.newaxis])


def encode_adjoint(k, maps):
    m = maps.maps.reshape(maps.maps.shape + (1,) * (k.ndim - 3))
    return np.sum(np.conj(m) * ifft2c(k), axis=2)


def encode_sampled(rho, maps, line_mask):
    """SENSE encoding followed by line sampling, returned zero-filled."""
    k = encode(rho, maps)
    return k * _line_weights(line_mask, k.ndim)


def encode_sampled_adjoint(k, maps, line_mask):
    return encode_adjoint(k * _line_weights(line_mask, k.ndim), maps)


def _line_weights(line_mask, ndim):
    w = np.asarray(line_mask, dtype=float)
    if w.ndim == 1:
        return w.reshape((1, -1) + (1,) * (ndim - 2))
    # (ny, batch): one pattern per trailing batch entry
    return w.reshape((1, w.shape[0], 1) + w.shape[1:])


def estimate_maps_from_acs(acs, ny, threshold=0.05, window=True):
    """Low-resolution sensitivity estimate from central calibration lines.

    The calibration block is zero-padded to ``ny`` phase-encode lines
    (optionally Hann-tapered along phase encoding), transformed to the image
    domain and divided by its root-sum-of-squares. Pixels whose RSS falls
    below ``threshold`` times its maximum are masked out.
    """
    acs = np.asarray(acs)
    if acs.ndim == 4:
        acs = acs[..., 0]
    nx, nacs, nc = acs.shape
    start = ny // 2 - nacs // 2
    if start < 0:
        raise ValidationError("calibration block is wider than the grid")
    k = np.zeros((nx, ny, nc), dtype=np.complex128)
    block = acs
    if window:
        block = acs * np.hanning(nacs + 2)[1:-1][np.newaxis, :, np.newaxis]
    k[:, start:start + nacs] = block
    img = ifft2c(k)
    rss = np.sqrt(np.sum(np.abs(img) ** 2, axis=2))
    support = rss > threshold * rss.max()
    return normalize_maps(img, support)
