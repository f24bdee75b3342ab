"""Cartesian grids, EPI line sampling, centered FFTs and error metrics.

Axis convention used throughout the package: a grid array has shape
``(nx, ny, nc, ns)`` where ``x`` is the readout direction, ``y`` the
phase-encode direction, ``c`` the receive channel and ``s`` the shot.
Phase-encode line 0 is the most negative spatial frequency and index ``i``
maps to frequency ``i - ny // 2``. A line is "even" when its index is
divisible by two.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

KSPACE = "kspace"
IMAGE = "image"
POSITIVE = "positive"
NEGATIVE = "negative"


def _as_4d(data):
    data = np.asarray(data)
    if data.ndim < 2 or data.ndim > 4:
        raise ValidationError(f"grid data must have 2 to 4 axes, got {data.ndim}")
    while data.ndim < 4:
        data = data[..., np.newaxis]
    return data


@dataclass(frozen=True)
class ComplexGrid:
    """Complex samples on a Cartesian grid.

    Parameters
    ----------
    data : array_like
        Complex array of shape ``(nx, ny)``, ``(nx, ny, nc)`` or
        ``(nx, ny, nc, ns)``. Missing trailing axes are added with size 1.
    domain : {'kspace', 'image'}
        Whether the samples live in k-space or in the image domain.
    """

    data: np.ndarray
    domain: str = KSPACE

    def __post_init__(self):
        data = _as_4d(self.data).astype(np.complex128, copy=False)
        nx, ny = data.shape[:2]
        if nx < 2 or ny < 2:
            raise ValidationError(f"grid must be at least 2x2, got {nx}x{ny}")
        if ny % 2:
            raise ValidationError(f"phase-encode count must be even, got {ny}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("grid contains non-finite values")
        if self.domain not in (KSPACE, IMAGE):
            raise ValidationError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "data", data)

    @property
    def nx(self):
        return self.data.shape[0]

    @property
    def ny(self):
        return self.data.shape[1]

    @property
    def nc(self):
        return self.data.shape[2]

    @property
    def ns(self):
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, domain=None):
        return ComplexGrid(data, self.domain if domain is None else domain)


@dataclass(frozen=True)
class SamplingPattern:
    """Set of phase-encode lines measured under one readout polarity.

    Use :func:`epi_pattern` to build the standard interleaved patterns.
    """

    ny: int
    kept_lines: tuple
    polarity: str = POSITIVE
    acceleration: int = 1

    def __post_init__(self):
        lines = tuple(int(i) for i in self.kept_lines)
        if not lines:
            raise ValidationError("sampling pattern keeps no lines")
        if any(b <= a for a, b in zip(lines, lines[1:])):
            raise ValidationError("kept lines must be strictly increasing")
        if lines[0] < 0 or lines[-1] >= self.ny:
            raise ValidationError(f"kept lines must lie in [0, {self.ny})")
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValidationError(f"unknown polarity {self.polarity!r}")
        if self.acceleration < 1:
            raise ValidationError("acceleration must be >= 1")
        object.__setattr__(self, "kept_lines", lines)

    @property
    def mask(self):
        """Boolean vector of length ``ny``; True on measured lines."""
        m = np.zeros(self.ny, dtype=bool)
        m[list(self.kept_lines)] = True
        return m

    @property
    def unmeasured_lines(self):
        return tuple(np.flatnonzero(~self.mask))


def epi_pattern(ny, polarity=POSITIVE, acceleration=1, shots=1, shot=0, offset=0):
    """Lines acquired by one readout polarity of an interleaved EPI train.

    With ``shots`` interleaves and acceleration ``R`` the positive lobe of
    shot ``s`` measures ``offset + s*R + 2*shots*R*j`` and the negative lobe
    measures the same lines shifted by ``shots*R``. For a single-shot
    unaccelerated train this gives even lines for the positive polarity and
    odd lines for the negative one.
    """
    R = int(acceleration)
    if R < 1 or shots < 1 or not 0 <= shot < shots:
        raise ValidationError("invalid acceleration/shot specification")
    step = 2 * shots * R
    if not 0 <= offset < step:
        raise ValidationError(f"offset must lie in [0, {step})")
    start = offset + shot * R + (0 if polarity == POSITIVE else shots * R)
    start %= step
    return SamplingPattern(ny, tuple(range(start, ny, step)), polarity, R)


def epi_patterns(ny, acceleration=1, shots=1, offset=0):
    """Return ``(plus, minus)`` lists of patterns, one entry per shot."""
    plus = [epi_pattern(ny, POSITIVE, acceleration, shots, s, offset) for s in range(shots)]
    minus = [epi_pattern(ny, NEGATIVE, acceleration, shots, s, offset) for s in range(shots)]
    return plus, minus


@dataclass(frozen=True)
class MeasuredData:
    """Samples on the kept lines of a pattern, shape ``(nx, nkept, nc, ns)``."""

    pattern: SamplingPattern
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = _as_4d(self.samples).astype(np.complex128, copy=False)
        if s.shape[1] != len(self.pattern.kept_lines):
            raise ValidationError(
                f"samples hold {s.shape[1]} lines, pattern keeps {len(self.pattern.kept_lines)}"
            )
        object.__setattr__(self, "samples", s)

    @property
    def nx(self):
        return self.samples.shape[0]


def apply_sampling(k, p):
    """Extract the measured lines of ``k``; the operator A in ``d = A k``."""
    if k.domain != KSPACE:
        raise ValidationError("sampling applies to k-space grids")
    if k.ny != p.ny:
        raise ValidationError(f"pattern expects ny={p.ny}, grid has ny={k.ny}")
    return MeasuredData(p, k.data[:, list(p.kept_lines)].copy())


def zero_fill(d):
    """Place measured lines on a full grid with zeros elsewhere (A^H d)."""
    nx, _, nc, ns = d.samples.shape
    out = np.zeros((nx, d.pattern.ny, nc, ns), dtype=np.complex128)
    out[:, list(d.pattern.kept_lines)] = d.samples
    return ComplexGrid(out, KSPACE)


def sign_flip_unmeasured(k, p):
    """Negate every line not kept by ``p``; measured lines are untouched."""
    if k.domain != KSPACE:
        raise ValidationError("sign flip applies to k-space grids")
    if k.ny != p.ny:
        raise ValidationError(f"pattern expects ny={p.ny}, grid has ny={k.ny}")
    signs = np.where(p.mask, 1.0, -1.0)
    return k.with_data(k.data * signs[np.newaxis, :, np.newaxis, np.newaxis])


def fft2c(x):
    """Unitary centered 2-D DFT over the first two axes of an array."""
    x = np.fft.ifftshift(x, axes=(0, 1))
    x = np.fft.fft2(x, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(x, axes=(0, 1))


def ifft2c(x):
    """Inverse of :func:`fft2c`."""
    x = np.fft.ifftshift(x, axes=(0, 1))
    x = np.fft.ifft2(x, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(x, axes=(0, 1))


def fft2_centered(g):
    if g.domain != IMAGE:
        raise ValidationError("forward transform expects an image-domain grid")
    return ComplexGrid(fft2c(g.data), KSPACE)


def ifft2_centered(g):
    if g.domain != KSPACE:
        raise ValidationError("inverse transform expects a k-space grid")
    return ComplexGrid(ifft2c(g.data), IMAGE)


def _values(x):
    return x.data if isinstance(x, ComplexGrid) else np.asarray(x)


def nrmse(est, ref, align_phase=False):
    """Normalized root-mean-squared error ``||est - ref|| / ||ref||``.

    The difference is taken on complex values. With ``align_phase`` the
    estimate is first rotated by the global phase that minimizes the error.
    """
    est = _values(est).astype(np.complex128)
    ref = _values(ref).astype(np.complex128)
    if est.shape != ref.shape:
        raise ValidationError(f"shape mismatch {est.shape} vs {ref.shape}")
    den = np.linalg.norm(ref)
    if den == 0:
        raise ValidationError("reference is identically zero")
    if align_phase:
        inner = np.vdot(est, ref)
        if inner != 0:
            est = est * (inner / abs(inner))
    return float(np.linalg.norm(est - ref) / den)
