"""Singular-value penalties and truncated SVD utilities."""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

NUCLEAR = "nuclear"
RANK_RESIDUAL = "rank_residual"


class RankEstimateWarning(UserWarning):
    """The spectrum showed no gap; the full length was returned."""


@dataclass(frozen=True)
class Regularizer:
    """Low-rank penalty J applied to a lifted matrix.

    ``kind='nuclear'`` is the sum of singular values. ``kind='rank_residual'``
    is the energy outside the best rank-``r`` approximation.
    """

    kind: str = RANK_RESIDUAL
    r: int = 0

    def __post_init__(self):
        if self.kind not in (NUCLEAR, RANK_RESIDUAL):
            raise ValidationError(f"unknown regularizer {self.kind!r}")
        if self.r < 0:
            raise ValidationError("rank parameter must be >= 0")

    def __call__(self, M):
        if self.kind == NUCLEAR:
            return nuclear_norm(M)
        return rank_residual(M, self.r)


def _entries(M):
    return getattr(M, "entries", M)


def singular_values(M):
    return np.linalg.svd(_entries(M), compute_uv=False)


def nuclear_norm(M):
    return float(np.sum(singular_values(M)))


def _check_rank(M, r):
    if not 0 <= r < min(M.shape):
        raise ValidationError(f"rank {r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")


def rank_residual(M, r):
    """``sum_{i>r} sigma_i**2``, the squared distance to the nearest rank-r matrix."""
    M = _entries(M)
    _check_rank(M, r)
    s = np.linalg.svd(M, compute_uv=False)
    return float(np.sum(s[r:] ** 2))


def rank_r_approx(M, r):
    """Best rank-``r`` approximation by SVD truncation (Eckart-Young).

    Returns an array, or a :class:`~slmepi.lifting.LiftedMatrix` with the
    same layout when one is given. Ties ``sigma_r == sigma_{r+1}`` keep the
    first ``r`` triplets in LAPACK order.
    """
    entries = _entries(M)
    _check_rank(entries, r)
    U, s, Vh = np.linalg.svd(entries, full_matrices=False)
    out = (U[:, :r] * s[:r]) @ Vh[:r]
    if entries is M:
        return out
    return replace(M, entries=out)


def gram_projection(G, r):
    """Fast path for tall matrices: rank-r truncation plus its residual.

    Uses the eigendecomposition of ``G^H G``. Returns ``(G_r, residual)``
    where ``residual = ||G||_F^2 - sum_{i<=r} sigma_i^2``.
    """
    rows, cols = G.shape
    if rows < cols:
        U, s, Vh = np.linalg.svd(G, full_matrices=False)
        return (U[:, :r] * s[:r]) @ Vh[:r], float(np.sum(s[r:] ** 2))
    H = G.conj().T @ G
    evals, evecs = np.linalg.eigh(H)
    V = evecs[:, ::-1][:, :r]
    Gr = (G @ V) @ V.conj().T
    total = float(np.real(np.trace(H)))
    kept = float(np.sum(np.clip(evals[::-1][:r], 0, None)))
    return Gr, max(total - kept, 0.0)


def svt(M, tau):
    """Singular-value soft thresholding, the prox of ``tau * ||.||_*``.

    Returns ``(thresholded, nuclear_norm_of_result)``.
    """
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vh[keep], float(np.sum(s))


def estimate_rank(singular_values, tau=0.05, window=None):
    """Pick the rank where the spectrum flattens out.

    Among candidates ``r`` inside ``window`` (1-based, inclusive) whose
    next singular value has dropped below ``tau * sigma_1``, return the one
    with the largest ratio ``sigma_r / sigma_{r+1}``. If no candidate
    exists, the full length is returned with a :class:`RankEstimateWarning`.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("spectrum must be a nonempty vector")
    if np.any(s < 0) or np.any(np.diff(s) > 1e-12 * s[0]):
        raise ValidationError("spectrum must be nonnegative and nonincreasing")
    if s[0] == 0:
        raise ValidationError("spectrum is identically zero")
    n = s.size
    if n == 1:
        return 1
    lo, hi = (1, n - 1) if window is None else window
    lo, hi = max(1, int(lo)), min(n - 1, int(hi))
    best, best_ratio = None, -np.inf
    for r in range(lo, hi + 1):
        num, den = s[r - 1], s[r]
        if den > tau * s[0] or num == 0:
            continue
        ratio = np.inf if den == 0 else num / den
        if ratio > best_ratio:
            best, best_ratio = r, ratio
    if best is None:
        warnings.warn("no spectral gap found; using full rank", RankEstimateWarning, stacklevel=2)
        return n
    return best
