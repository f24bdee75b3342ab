"""Non-uniqueness of unconstrained low-rank ghost correction.

For interleaved sampling (positive polarity on even lines, negative on odd
lines) negating every unmeasured line of both k-spaces leaves all singular
values of the concatenated lifting unchanged. Every feasible pair therefore
has a sign-flipped twin with the same cost, and the straight line between
them passes through the zero-filled pair at its midpoint. This module builds
such pairs, checks the invariance numerically and scans costs along the line.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kspace import KSPACE, ComplexGrid, apply_sampling, epi_patterns, sign_flip_unmeasured
from .lifting import C_MATRIX, NeighborhoodSpec, get_lifting
from .regularizers import NUCLEAR
from .sense import encode, encode_adjoint

PASS_TOL = 1e-9


@dataclass(frozen=True)
class FeasiblePair:
    """Full-grid k-space estimates for both polarities.

    The measured lines of each grid are the data; everything else is the
    free part of the estimate.
    """

    k_plus: ComplexGrid
    k_minus: ComplexGrid
    pattern_plus: object
    pattern_minus: object

    def __post_init__(self):
        for k, p in ((self.k_plus, self.pattern_plus), (self.k_minus, self.pattern_minus)):
            if k.domain != KSPACE:
                raise ValidationError("feasible pairs hold k-space grids")
            if k.ny != p.ny:
                raise ValidationError("pattern does not match the grid")
        if self.k_plus.shape != self.k_minus.shape:
            raise ValidationError("both polarities must share a grid shape")
        if np.any(self.pattern_plus.mask & self.pattern_minus.mask):
            raise ValidationError("polarity patterns overlap")

    @property
    def data(self):
        return (apply_sampling(self.k_plus, self.pattern_plus),
                apply_sampling(self.k_minus, self.pattern_minus))

    def zero_filled(self):
        def zf(k, p):
            return k.with_data(k.data * p.mask[np.newaxis, :, np.newaxis, np.newaxis])

        return FeasiblePair(zf(self.k_plus, self.pattern_plus), zf(self.k_minus, self.pattern_minus),
                            self.pattern_plus, self.pattern_minus)

    def is_zero_filled(self):
        return not (np.any(self.k_plus.data[:, ~self.pattern_plus.mask])
                    or np.any(self.k_minus.data[:, ~self.pattern_minus.mask]))


def random_feasible_pair(nx, ny, nc=1, rng=None, fill=True):
    """Random data on interleaved lines plus random values elsewhere.

    With ``fill=False`` the unmeasured lines are zero (the zero-filled pair).
    """
    rng = np.random.default_rng(rng)
    (pp,), (pm,) = epi_patterns(ny)

    def grid(pattern):
        a = rng.standard_normal((nx, ny, nc, 1)) + 1j * rng.standard_normal((nx, ny, nc, 1))
        if not fill:
            a[:, ~pattern.mask] = 0
        return ComplexGrid(a, KSPACE)

    return FeasiblePair(grid(pp), grid(pm), pp, pm)


def pair_from_kspace(k_plus, k_minus):
    """Pair built from fully known k-spaces, sampled on interleaved lines."""
    if not isinstance(k_plus, ComplexGrid):
        k_plus, k_minus = ComplexGrid(k_plus), ComplexGrid(k_minus)
    (pp,), (pm,) = epi_patterns(k_plus.ny)
    return FeasiblePair(k_plus, k_minus, pp, pm)


def make_flipped_pair(p):
    """Negate the unmeasured lines of both polarities."""
    return FeasiblePair(
        sign_flip_unmeasured(p.k_plus, p.pattern_plus),
        sign_flip_unmeasured(p.k_minus, p.pattern_minus),
        p.pattern_plus,
        p.pattern_minus,
    )


def _stack(kp, km):
    # (nx, ny, nb) with plus blocks first; channel fastest, then shot
    def blocks(a):
        nx, ny, nc, ns = a.shape
        return a.transpose(0, 1, 3, 2).reshape(nx, ny, nc * ns)

    return np.concatenate([blocks(kp), blocks(km)], axis=2)


def lifted_pair(kp, km, n, kind):
    """Concatenated lifting ``[L(k+) L(k-)]`` of raw arrays ``(nx, ny, nc, ns)``."""
    op = get_lifting(kind, kp.shape[0], kp.shape[1], n)
    return op.forward(_stack(kp, km))


@dataclass
class TheoremReport:
    sv_original: np.ndarray = field(repr=False)
    sv_flipped: np.ndarray = field(repr=False)
    max_rel_diff: float

    @property
    def passed(self):
        return self.max_rel_diff <= PASS_TOL


def verify_theorem1(p, n=NeighborhoodSpec(), matrix_kind=C_MATRIX):
    """Compare the spectra of a pair and its sign-flipped twin.

    ``max_rel_diff`` is ``max_i |sigma_i - sigma~_i| / sigma_1`` (zero for
    an all-zero lifting).
    """
    q = make_flipped_pair(p)
    s1 = np.linalg.svd(lifted_pair(p.k_plus.data, p.k_minus.data, n, matrix_kind), compute_uv=False)
    s2 = np.linalg.svd(lifted_pair(q.k_plus.data, q.k_minus.data, n, matrix_kind), compute_uv=False)
    scale = s1[0] if s1.size and s1[0] > 0 else 1.0
    diff = float(np.max(np.abs(s1 - s2)) / scale) if s1.size else 0.0
    return TheoremReport(s1, s2, diff)


def _check_same_data(p1, p2):
    if p1.pattern_plus != p2.pattern_plus or p1.pattern_minus != p2.pattern_minus:
        raise ValidationError("pairs use different sampling patterns")
    for a, b in zip(p1.data, p2.data):
        if not np.array_equal(a.samples, b.samples):
            raise ValidationError("pairs are not feasible for the same measured data")


def sense_penalty(maps):
    """Squared distance of both coil k-spaces from the range of full SENSE encoding.

    With sum-of-squares normalized maps ``E E^H`` is the orthogonal
    projector onto that range.
    """
    def cost(kp, km):
        total = 0.0
        for k in (kp, km):
            total += np.linalg.norm(k - encode(encode_adjoint(k, maps), maps)) ** 2
        return float(total)
    return cost


def nullspace_penalty(nullspace):
    """``sum_g ||C(k_g) N||_F^2`` over every polarity and shot grid."""
    def cost(kp, km):
        op = get_lifting(C_MATRIX, kp.shape[0], kp.shape[1], nullspace.neighborhood)
        total = 0.0
        for k in (kp, km):
            for s in range(k.shape[3]):
                total += np.linalg.norm(op.forward(k[..., s]) @ nullspace.N) ** 2
        return float(total)
    return cost


def landscape_scan(p1, p2, reg, n=NeighborhoodSpec(), kind=C_MATRIX, alphas=None,
                   penalty=None, lam=1.0):
    """Cost ``J(lift(alpha*k1 + (1-alpha)*k2))`` along the segment between two pairs.

    Returns a list of ``(alpha, cost)``. With ``p2 = make_flipped_pair(p1)``
    the midpoint is the zero-filled pair.

    ``penalty`` adds a constraint term: the cost becomes
    ``penalty(k+, k-) + lam * J``, as built by :func:`sense_penalty` or
    :func:`nullspace_penalty`.
    """
    _check_same_data(p1, p2)
    alphas = np.linspace(0.0, 1.0, 101) if alphas is None else np.asarray(alphas, dtype=float)
    if np.any((alphas < 0) | (alphas > 1)):
        raise ValidationError("alpha values must lie in [0, 1]")
    out = []
    for a in alphas:
        kp = a * p1.k_plus.data + (1 - a) * p2.k_plus.data
        km = a * p1.k_minus.data + (1 - a) * p2.k_minus.data
        cost = float(reg(lifted_pair(kp, km, n, kind)))
        if penalty is not None:
            cost = penalty(kp, km) + lam * cost
        out.append((float(a), cost))
    return out


@dataclass
class CorollaryReport:
    """Slice statements along the segment from a pair to its flipped twin.

    ``endpoint_rel_diff`` compares the two endpoint costs.
    ``slice_bounded`` (convex penalties only) says no slice point exceeds
    the endpoint cost. ``zero_filled_is_min`` says the midpoint is the
    smallest sampled cost. ``degenerate`` marks a zero-filled input, for
    which the segment collapses to a point.
    """

    kind: str
    costs: list
    endpoint_rel_diff: float
    zero_filled_is_min: bool
    slice_bounded: object
    degenerate: bool

    @property
    def passed(self):
        ok = self.endpoint_rel_diff <= PASS_TOL
        if self.slice_bounded is not None:
            ok = ok and self.slice_bounded
        return ok


def check_corollaries(p, reg, n=NeighborhoodSpec(), kind=C_MATRIX, alphas=None):
    q = make_flipped_pair(p)
    costs = landscape_scan(p, q, reg, n, kind, alphas)
    c = np.array([v for _, v in costs])
    a = np.array([al for al, _ in costs])
    ends = max(abs(c[0]), abs(c[-1]))
    rel = 0.0 if ends == 0 else float(abs(c[0] - c[-1]) / ends)
    mid = int(np.argmin(np.abs(a - 0.5)))
    zf_min = bool(c[mid] <= c.min() * (1 + PASS_TOL))
    bounded = None
    if reg.kind == NUCLEAR:
        bounded = bool(np.all(c <= c[0] * (1 + PASS_TOL)))
    return CorollaryReport(reg.kind, costs, rel, zf_min, bounded, p.is_zero_filled())


def theorem_suite(radii=(1, 2, 3), channels=(1, 2, 4), kinds=("C", "S"), size=16, trials=100,
                  seed=0):
    """Run :func:`verify_theorem1` over a grid of configurations.

    Returns a list of dicts with the configuration, the worst discrepancy
    and whether every trial passed.
    """
    rows = []
    rng = np.random.default_rng(seed)
    for radius in radii:
        n = NeighborhoodSpec(radius)
        for nc in channels:
            for kind in kinds:
                worst = 0.0
                for _ in range(trials):
                    p = random_feasible_pair(size, size, nc, rng)
                    worst = max(worst, verify_theorem1(p, n, kind).max_rel_diff)
                rows.append(dict(radius=radius, nc=nc, kind=kind, trials=trials,
                                 max_rel_diff=worst, passed=worst <= PASS_TOL))
    return rows

