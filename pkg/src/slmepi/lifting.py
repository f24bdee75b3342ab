"""Structured low-rank liftings of k-space (LORAKS C- and S-matrices).

A lifting maps every local k-space neighborhood to one row of a matrix.
Only neighborhoods lying completely inside the grid are used, so each
column block keeps an exact convolutional structure.

The C-matrix row for center ``c`` holds ``k[c - o]`` for every offset ``o``.
The S-matrix is real-valued: for center ``c`` let ``p = k[c - o]`` and
``q = k[-(c - o)]`` (the point mirrored through the k-space origin). With
``h = a + ib`` a filter, the relation ``s * h - conj(s(-k)) * conj(h) = 0``
splits into a real row ``[Re p - Re q, Im q - Im p]`` and an imaginary row
``[Im p + Im q, Re p + Re q]`` acting on ``[a; b]``. All real rows come
first, then all imaginary rows. Each block therefore has ``2 * noff``
columns, the first ``noff`` of which vanish for conjugate-symmetric data.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .kspace import KSPACE, ComplexGrid

C_MATRIX = "C"
S_MATRIX = "S"


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Support of the local k-space neighborhoods (annihilating filters)."""

    radius: int = 2
    shape: str = "square"

    def __post_init__(self):
        if int(self.radius) < 1:
            raise ValidationError("neighborhood radius must be >= 1")
        if self.shape not in ("square", "disc"):
            raise ValidationError(f"unknown neighborhood shape {self.shape!r}")

    @property
    def offsets(self):
        """Array of ``(dx, dy)`` offsets, shape ``(noff, 2)``."""
        return _offsets(int(self.radius), self.shape)

    @property
    def size(self):
        return len(self.offsets)

    def valid_centers(self, nx, ny, kind=C_MATRIX):
        """Centers whose neighborhood (and mirror, for S) lies in-grid."""
        return _centers(nx, ny, int(self.radius), kind)


@lru_cache(maxsize=None)
def _offsets(radius, shape):
    d = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(d, d, indexing="ij")
    off = np.stack([dx.ravel(), dy.ravel()], axis=1)
    if shape == "disc":
        off = off[(off ** 2).sum(axis=1) <= radius ** 2]
    off.setflags(write=False)
    return off


def _mirror_range(n, radius):
    # index i has frequency i - n//2, so its mirror is 2*(n//2) - i
    h2 = 2 * (n // 2)
    lo = max(radius, h2 - n + 1 + radius)
    hi = min(n - 1 - radius, h2 - radius)
    return lo, hi


@lru_cache(maxsize=None)
def _centers(nx, ny, radius, kind):
    if kind == C_MATRIX:
        xr = (radius, nx - 1 - radius)
        yr = (radius, ny - 1 - radius)
    elif kind == S_MATRIX:
        xr = _mirror_range(nx, radius)
        yr = _mirror_range(ny, radius)
    else:
        raise ValidationError(f"unknown matrix kind {kind!r}")
    if xr[1] < xr[0] or yr[1] < yr[0]:
        raise ValidationError(
            f"{nx}x{ny} grid is too small for a radius-{radius} {kind}-matrix neighborhood"
        )
    cx, cy = np.meshgrid(np.arange(xr[0], xr[1] + 1), np.arange(yr[0], yr[1] + 1), indexing="ij")
    c = np.stack([cx.ravel(), cy.ravel()], axis=1)
    c.setflags(write=False)
    return c


class Lifting:
    """Array-level lifting operator for a fixed grid size and neighborhood.

    ``forward`` takes an array of shape ``(nx, ny, nb)`` holding ``nb``
    k-space grids and returns the block-concatenated lifted matrix.
    ``adjoint`` is its exact adjoint; for the S-matrix the adjoint is taken
    with respect to the real inner product ``Re <x, y>``.
    """

    def __init__(self, kind, nx, ny, neighborhood):
        if kind not in (C_MATRIX, S_MATRIX):
            raise ValidationError(f"unknown matrix kind {kind!r}")
        self.kind = kind
        self.nx, self.ny = int(nx), int(ny)
        self.neighborhood = neighborhood
        off = neighborhood.offsets
        cen = neighborhood.valid_centers(self.nx, self.ny, kind)
        self.noff = len(off)
        self.ncenters = len(cen)
        px = cen[:, 0:1] - off[None, :, 0]
        py = cen[:, 1:2] - off[None, :, 1]
        self._p = px * self.ny + py
        if kind == S_MATRIX:
            qx = 2 * (self.nx // 2) - px
            qy = 2 * (self.ny // 2) - py
            self._q = qx * self.ny + qy
        counts = np.bincount(self._p.ravel(), minlength=self.nx * self.ny).astype(float)
        if kind == S_MATRIX:
            counts = 2.0 * (counts + np.bincount(self._q.ravel(), minlength=self.nx * self.ny))
        self.weights = counts.reshape(self.nx, self.ny)

    @property
    def rows(self):
        return self.ncenters if self.kind == C_MATRIX else 2 * self.ncenters

    @property
    def block_cols(self):
        return self.noff if self.kind == C_MATRIX else 2 * self.noff

    def _check(self, k):
        k = np.asarray(k)
        if k.ndim == 2:
            k = k[..., np.newaxis]
        if k.shape[:2] != (self.nx, self.ny):
            raise ValidationError(f"expected a {self.nx}x{self.ny} grid, got {k.shape[:2]}")
        return k.reshape(self.nx * self.ny, -1)

    def forward(self, k):
        flat = self._check(k)
        nb = flat.shape[1]
        P = flat[self._p]  # (centers, noff, nb)
        if self.kind == C_MATRIX:
            return P.transpose(0, 2, 1).reshape(self.ncenters, nb * self.noff)
        Q = flat[self._q]
        top = np.concatenate([P.real - Q.real, Q.imag - P.imag], axis=1)
        bot = np.concatenate([P.imag + Q.imag, P.real + Q.real], axis=1)
        out = np.concatenate([top, bot], axis=0)  # (2*centers, 2*noff, nb)
        return out.transpose(0, 2, 1).reshape(self.rows, nb * self.block_cols)

    def _scatter(self, idx, vals, nb):
        # vals: (centers, noff, nb); accumulate into (nx*ny, nb)
        full = (idx[:, :, None] * nb + np.arange(nb)[None, None, :]).ravel()
        size = self.nx * self.ny * nb
        re = np.bincount(full, weights=vals.real.ravel(), minlength=size)
        im = np.bincount(full, weights=vals.imag.ravel(), minlength=size)
        return (re + 1j * im).reshape(self.nx * self.ny, nb)

    def adjoint(self, M):
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[0] != self.rows or M.shape[1] % self.block_cols:
            raise ValidationError(
                f"matrix of shape {M.shape} is inconsistent with a {self.rows}-row "
                f"{self.kind}-lifting of {self.block_cols}-column blocks"
            )
        nb = M.shape[1] // self.block_cols
        B = M.reshape(self.rows, nb, self.block_cols).transpose(0, 2, 1)
        if self.kind == C_MATRIX:
            out = self._scatter(self._p, B, nb)
        else:
            m, n = self.ncenters, self.noff
            T1, T2 = B[:m, :n].real, B[:m, n:].real
            B1, B2 = B[m:, :n].real, B[m:, n:].real
            out = self._scatter(self._p, (T1 + B2) + 1j * (B1 - T2), nb)
            out += self._scatter(self._q, (B2 - T1) + 1j * (T2 + B1), nb)
        return out.reshape(self.nx, self.ny, nb)

    def normal(self, k):
        """``adjoint(forward(k))``, which is a pointwise weighting."""
        k = np.asarray(k)
        w = self.weights if k.ndim == 2 else self.weights[..., np.newaxis]
        return w * k


@lru_cache(maxsize=64)
def get_lifting(kind, nx, ny, neighborhood):
    return Lifting(kind, nx, ny, neighborhood)


@dataclass(frozen=True)
class LiftedMatrix:
    """Dense lifted matrix with the bookkeeping needed to undo it.

    ``block_layout`` lists one ``(channel, polarity, shot)`` triple per
    column block, in column order.
    """

    entries: np.ndarray
    kind: str
    block_layout: tuple
    neighborhood: NeighborhoodSpec
    grid_shape: tuple

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]

    def singular_values(self):
        return np.linalg.svd(self.entries, compute_uv=False)


def _grid_blocks(k):
    if not isinstance(k, ComplexGrid):
        k = ComplexGrid(k)
    if k.domain != KSPACE:
        raise ValidationError("liftings operate on k-space grids")
    nx, ny, nc, ns = k.shape
    # block order: channel fastest, then shot
    blocks = k.data.transpose(0, 1, 3, 2).reshape(nx, ny, ns * nc)
    return k, blocks


def _lift(kind, k, n, polarity):
    if isinstance(k, (tuple, list)):
        if len(k) != 2:
            raise ValidationError("expected a (plus, minus) pair of grids")
        return concat_polarities(_lift(kind, k[0], n, "+"), _lift(kind, k[1], n, "-"))
    k, blocks = _grid_blocks(k)
    L = get_lifting(kind, k.nx, k.ny, n)
    layout = tuple((c, polarity, s) for s in range(k.ns) for c in range(k.nc))
    return LiftedMatrix(L.forward(blocks), kind, layout, n, (k.nx, k.ny))


def lift_c(k, n=NeighborhoodSpec()):
    """C-matrix of a k-space grid, or of a ``(plus, minus)`` pair of grids."""
    return _lift(C_MATRIX, k, n, None)


def lift_s(k, n=NeighborhoodSpec()):
    """S-matrix of a k-space grid, or of a ``(plus, minus)`` pair of grids."""
    return _lift(S_MATRIX, k, n, None)


def concat_polarities(m_plus, m_minus):
    """Column-wise concatenation ``[M+ M-]`` of two liftings."""
    if m_plus.kind != m_minus.kind:
        raise ValidationError("cannot concatenate C- and S-matrices")
    if m_plus.rows != m_minus.rows or m_plus.grid_shape != m_minus.grid_shape:
        raise ValidationError(f"row mismatch: {m_plus.rows} vs {m_minus.rows}")

    def tag(layout, pol):
        return tuple((c, p if p is not None else pol, s) for c, p, s in layout)

    return LiftedMatrix(
        np.concatenate([m_plus.entries, m_minus.entries], axis=1),
        m_plus.kind,
        tag(m_plus.block_layout, "+") + tag(m_minus.block_layout, "-"),
        m_plus.neighborhood,
        m_plus.grid_shape,
    )


def _adjoint(kind, M, n, grid_shape):
    if isinstance(M, LiftedMatrix):
        layout = M.block_layout
        n = M.neighborhood if n is None else n
        grid_shape = M.grid_shape if grid_shape is None else grid_shape
        entries = M.entries
    else:
        if n is None or grid_shape is None:
            raise ValidationError("raw matrices need a neighborhood and grid shape")
        entries = np.asarray(M)
        layout = None
    nx, ny = grid_shape[:2]
    L = get_lifting(kind, nx, ny, n)
    blocks = L.adjoint(entries)
    nb = blocks.shape[2]
    if layout is None:
        nc = grid_shape[2] if len(grid_shape) > 2 else nb
        ns = nb // nc
        if nc * ns != nb:
            raise ValidationError(f"{nb} column blocks do not match grid shape {grid_shape}")
        return ComplexGrid(blocks.reshape(nx, ny, ns, nc).transpose(0, 1, 3, 2), KSPACE)
    pols = sorted({p for _, p, _ in layout}, key=lambda p: (p is None, p != "+"))
    grids = []
    for pol in pols:
        sel = [i for i, b in enumerate(layout) if b[1] == pol]
        nc = max(layout[i][0] for i in sel) + 1
        ns = max(layout[i][2] for i in sel) + 1
        out = np.zeros((nx, ny, nc, ns), dtype=np.complex128)
        for i in sel:
            c, _, s = layout[i]
            out[:, :, c, s] = blocks[:, :, i]
        grids.append(ComplexGrid(out, KSPACE))
    return grids[0] if len(grids) == 1 else tuple(grids)


def adjoint_lift_c(M, n=None, grid_shape=None):
    """Exact adjoint of :func:`lift_c`.

    Returns one grid, or a ``(plus, minus)`` tuple when ``M`` carries a
    two-polarity block layout.
    """
    return _adjoint(C_MATRIX, M, n, grid_shape)


def adjoint_lift_s(M, n=None, grid_shape=None):
    """Exact adjoint of :func:`lift_s` under the real inner product."""
    return _adjoint(S_MATRIX, M, n, grid_shape)


def write_spectrum_csv(path, singular_values):
    """One singular value per line, descending."""
    sv = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    with open(path, "w") as fh:
        for s in sv:
            fh.write(f"{s:.17g}\n")
