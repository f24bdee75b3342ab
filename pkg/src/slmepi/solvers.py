"""Ghost-correcting reconstructions built on low-rank lifted matrices.

Three formulations share one majorize-minimize driver:

``unconstrained``
    Minimize ``J([L(k+) L(k-)])`` with the measured lines held fixed.
``sense`` / ``mussels_baseline``
    Minimize ``sum ||E_pm rho_pm - d_pm||^2 + lam * J(lifting)`` over one
    image per polarity and shot. ``sense`` lifts every coil k-space
    ``E rho``; ``mussels_baseline`` lifts only ``F rho`` with a C-matrix and
    the nuclear norm.
``ac_loraks``
    Minimize ``sum ||C(k_pm) N||_F^2 + lam * J(lifting)`` with the measured
    lines held fixed, where ``N`` spans the approximate nullspace of the
    calibration C-matrix.

For the rank-residual penalty every outer step replaces ``J`` by
``||G - G_r||_F^2`` with ``G_r`` the rank-r truncation at the current
iterate. The nuclear norm is handled by minimizing the smoothed objective
``data + lam * min_Z (||Z||_* + ||G - Z||_F^2 / (2 tau))``, alternating an
exact singular-value thresholding step in ``Z`` with a least-squares step.
Both schemes decrease their recorded cost monotonically when the
least-squares subproblems are solved exactly.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .kspace import KSPACE, IMAGE, ComplexGrid, fft2c, ifft2c
from .lifting import C_MATRIX, S_MATRIX, NeighborhoodSpec, get_lifting
from .regularizers import NUCLEAR, RANK_RESIDUAL, Regularizer, estimate_rank, gram_projection, svt
from .sense import SenseMaps

log = logging.getLogger(__name__)

MODES = ("unconstrained", "sense", "ac_loraks", "mussels_baseline")


@dataclass
class ReconConfig:
    """Solver settings.

    ``lam`` weights the low-rank penalty. ``nuclear_tau`` is the smoothing
    threshold of the nuclear-norm scheme, relative to the largest singular
    value of the initial lifted matrix. ``mussels_baseline`` always uses
    the C-matrix with the nuclear norm.
    """

    mode: str = "ac_loraks"
    matrix_kind: str = S_MATRIX
    regularizer: Regularizer = field(default_factory=lambda: Regularizer(RANK_RESIDUAL, 40))
    lam: float = 1e-3
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    outer_iters: int = 50
    cg_iters: int = 30
    cg_tol: float = 1e-8
    tol: float = 1e-6
    init: str = "zero_filled"
    initial: object = None
    nuclear_tau: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.mode == "mussels_baseline":
            self.matrix_kind = C_MATRIX
            self.regularizer = Regularizer(NUCLEAR)
        if self.matrix_kind not in (C_MATRIX, S_MATRIX):
            raise ValidationError(f"unknown matrix kind {self.matrix_kind!r}")
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        if self.outer_iters < 1 or self.cg_iters < 1:
            raise ValidationError("iteration counts must be >= 1")
        if self.init not in ("zero_filled", "provided"):
            raise ValidationError(f"unknown init {self.init!r}")
        if self.init == "provided" and self.initial is None:
            raise ValidationError("init='provided' needs an initial estimate")
        if self.nuclear_tau <= 0:
            raise ValidationError("nuclear_tau must be positive")


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal basis ``N`` (columns) of the calibration nullspace."""

    N: np.ndarray = field(repr=False)
    source_rank: int
    neighborhood: NeighborhoodSpec
    nc: int

    @property
    def nullity(self):
        return self.N.shape[1]

    @property
    def empty(self):
        return self.nullity == 0


@dataclass
class ReconResult:
    """Reconstructed k-space per polarity, shape ``(nx, ny, nc, ns)``.

    SENSE-type modes also return the images ``(nx, ny, 1, ns)``.
    ``cost_trace[0]`` is the cost of the initial estimate.
    """

    kspace_plus: ComplexGrid
    kspace_minus: ComplexGrid
    cost_trace: list
    converged: bool
    images_plus: Optional[ComplexGrid] = None
    images_minus: Optional[ComplexGrid] = None

    @property
    def iterations(self):
        return len(self.cost_trace) - 1

    def coil_images(self):
        """Per-polarity channel images ``(nx, ny, nc, ns)``."""
        return ifft2c(self.kspace_plus.data), ifft2c(self.kspace_minus.data)


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool


def cg_least_squares(apply_normal_op, rhs, x0=None, iters=30, tol=1e-8):
    """Conjugate gradients for ``A x = rhs`` with ``A`` Hermitian PSD.

    Stops once ``||A x - rhs|| <= tol * ||rhs||`` or after ``iters`` steps.
    """
    rhs = np.asarray(rhs)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=rhs.dtype)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0 and x0 is None:
        return CGResult(x, 0, 0.0, True)
    r = rhs - apply_normal_op(x) if x0 is not None else rhs.copy()
    p = r.copy()
    rs = np.vdot(r, r).real
    thresh = tol * bnorm
    it = 0
    while it < iters and np.sqrt(rs) > thresh:
        Ap = apply_normal_op(p)
        pAp = np.vdot(p, Ap).real
        if not np.isfinite(pAp):
            raise NumericalError(f"normal operator produced non-finite values at CG step {it}")
        if pAp <= 0:
            break
        alpha = rs / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    res = float(np.sqrt(rs))
    return CGResult(x, it, res, res <= thresh)


# --------------------------------------------------------------------------
# problem definitions: each knows its lifting, data cost and surrogate solve


def _as_list(d):
    return list(d) if isinstance(d, (list, tuple)) else [d]


def _check_data(d_plus, d_minus):
    d_plus, d_minus = _as_list(d_plus), _as_list(d_minus)
    if len(d_plus) != len(d_minus) or not d_plus:
        raise ValidationError("need the same number of shots for both polarities")
    ref = d_plus[0].samples.shape
    for dp, dm in zip(d_plus, d_minus):
        for d in (dp, dm):
            if d.samples.shape[0] != ref[0] or d.samples.shape[2:] != ref[2:]:
                raise ValidationError("inconsistent measured data shapes")
            if d.samples.shape[3] != 1:
                raise ValidationError("pass multi-shot data as one MeasuredData per shot")
        if set(dp.pattern.kept_lines) & set(dm.pattern.kept_lines):
            raise ValidationError("positive and negative patterns overlap")
    return d_plus, d_minus


class _KspaceProblem:
    """State ``X`` of shape ``(nx, ny, ngrids * nc)``, grids ordered (polarity, shot)."""

    def __init__(self, d_plus, d_minus, cfg):
        self.cfg = cfg
        self.ns = len(d_plus)
        self.nx, _, self.nc, _ = d_plus[0].samples.shape
        self.ny = d_plus[0].pattern.ny
        self.ngrids = 2 * self.ns
        nb = self.ngrids * self.nc
        self.zf = np.zeros((self.nx, self.ny, nb), dtype=np.complex128)
        self.measured = np.zeros((self.nx, self.ny, nb), dtype=bool)
        for g, d in enumerate(d_plus + d_minus):
            sl = slice(g * self.nc, (g + 1) * self.nc)
            lines = list(d.pattern.kept_lines)
            self.zf[:, lines, sl] = d.samples[..., 0]
            self.measured[:, lines, sl] = True
        self.lift_op = get_lifting(cfg.matrix_kind, self.nx, self.ny, cfg.neighborhood)

    def initial(self):
        if self.cfg.init == "provided":
            x = _initial_kspace(self.cfg.initial, self.zf.shape)
            return np.where(self.measured, self.zf, x)
        return self.zf.copy()

    def lift(self, x):
        return self.lift_op.forward(x)

    def data_cost(self, x):
        return 0.0

    def solve(self, x, target, weight):
        # ||L(x) - T||^2 has a diagonal normal operator, so the minimizer
        # over unmeasured entries is a pointwise division
        if target is None:
            return x
        back = self.lift_op.adjoint(target)
        w = self.lift_op.weights[..., np.newaxis]
        fill = np.divide(back, w, out=x.copy(), where=np.broadcast_to(w > 0, back.shape))
        return np.where(self.measured, self.zf, fill)

    def result(self, x, trace, converged):
        def grids(lo):
            a = x[:, :, lo * self.nc:(lo + self.ns) * self.nc]
            a = a.reshape(self.nx, self.ny, self.ns, self.nc).transpose(0, 1, 3, 2)
            return ComplexGrid(a, KSPACE)

        return ReconResult(grids(0), grids(self.ns), trace, converged)


def _initial_kspace(initial, shape):
    if isinstance(initial, ReconResult):
        initial = (initial.kspace_plus, initial.kspace_minus)
    if isinstance(initial, (tuple, list)):
        parts = []
        for g in initial:
            a = g.data if isinstance(g, ComplexGrid) else np.asarray(g)
            a = a if a.ndim == 4 else a[..., np.newaxis]
            parts.append(a.transpose(0, 1, 3, 2).reshape(a.shape[0], a.shape[1], -1))
        initial = np.concatenate(parts, axis=2)
    initial = np.asarray(initial, dtype=np.complex128)
    if initial.shape != shape:
        raise ValidationError(f"initial estimate has shape {initial.shape}, expected {shape}")
    return initial


class _ACProblem(_KspaceProblem):
    """Adds the calibration-nullspace penalty, solved by CG."""

    def __init__(self, d_plus, d_minus, nullspace, cfg):
        super().__init__(d_plus, d_minus, cfg)
        c_op = get_lifting(C_MATRIX, self.nx, self.ny, nullspace.neighborhood)
        if nullspace.N.shape[0] != self.nc * c_op.noff or nullspace.nc != self.nc:
            raise ValidationError(
                f"nullspace has {nullspace.N.shape[0]} rows, expected {self.nc * c_op.noff}"
            )
        self.c_op = c_op
        self.N = nullspace.N
        # project with N N^H directly only when that is cheaper than two thin products
        self.P = self.N @ self.N.conj().T if 2 * self.N.shape[1] > self.N.shape[0] else None
        self.unmeasured = ~self.measured

    def _null_rows(self, x):
        G = self.c_op.forward(x)
        return G.reshape(G.shape[0] * self.ngrids, self.nc * self.c_op.noff)

    def data_cost(self, x):
        if self.N.shape[1] == 0:
            return 0.0
        return float(np.linalg.norm(self._null_rows(x) @ self.N) ** 2)

    def _nullspace_normal(self, x):
        if self.N.shape[1] == 0:
            return np.zeros_like(x)
        A = self._null_rows(x)
        Y = A @ self.P if self.P is not None else (A @ self.N) @ self.N.conj().T
        return self.c_op.adjoint(Y.reshape(self.c_op.ncenters, -1))

    def solve(self, x, target, weight):
        if target is None:
            weight = 0.0
        w = weight * self.lift_op.weights[..., np.newaxis]
        U = self.unmeasured

        def normal(u):
            return U * (self._nullspace_normal(u) + w * u)

        rhs = -self._nullspace_normal(self.zf) - w * self.zf
        if target is not None:
            rhs = rhs + weight * self.lift_op.adjoint(target)
        rhs = U * rhs
        if not np.any(rhs) and not np.any(U * x):
            return self.zf.copy()
        sol = cg_least_squares(normal, rhs, U * x, self.cfg.cg_iters, self.cfg.cg_tol)
        return np.where(self.measured, self.zf, sol.x)


class _SenseProblem:
    """State: one image per (polarity, shot), shape ``(nx, ny, ngrids)``."""

    def __init__(self, d_plus, d_minus, maps, cfg):
        self.cfg = cfg
        self.maps = maps.maps  # (nx, ny, nc)
        self.ns = len(d_plus)
        self.nx, _, self.nc, _ = d_plus[0].samples.shape
        self.ny = d_plus[0].pattern.ny
        if self.maps.shape != (self.nx, self.ny, self.nc):
            raise ValidationError(f"maps of shape {self.maps.shape} do not cover the data grid")
        self.ngrids = 2 * self.ns
        self.zf = np.zeros((self.nx, self.ny, self.nc, self.ngrids), dtype=np.complex128)
        self.lines = np.zeros((self.ny, self.ngrids))
        for g, d in enumerate(d_plus + d_minus):
            lines = list(d.pattern.kept_lines)
            self.zf[..., g][:, lines] = d.samples[..., 0]
            self.lines[lines, g] = 1.0
        self.mask = self.lines[np.newaxis, :, np.newaxis, :]
        self.coil_lifting = cfg.mode == "sense"
        self.lift_op = get_lifting(cfg.matrix_kind, self.nx, self.ny, cfg.neighborhood)
        self.adj_zf = self._adj(self.zf)

    def _enc(self, rho):
        return fft2c(self.maps[..., np.newaxis] * rho[:, :, np.newaxis, :])

    def _adj(self, k):
        return np.sum(np.conj(self.maps)[..., np.newaxis] * ifft2c(k), axis=2)

    def initial(self):
        if self.cfg.init == "provided":
            init = self.cfg.initial
            if isinstance(init, ReconResult):
                init = np.concatenate(
                    [init.images_plus.data[:, :, 0], init.images_minus.data[:, :, 0]], axis=2
                )
            init = np.asarray(init, dtype=np.complex128)
            if init.shape != (self.nx, self.ny, self.ngrids):
                raise ValidationError("initial images have the wrong shape")
            return init.copy()
        return self.adj_zf.copy()

    def _lifted_grids(self, rho):
        if self.coil_lifting:
            k = self._enc(rho)  # (nx, ny, nc, ngrids)
            return k.transpose(0, 1, 3, 2).reshape(self.nx, self.ny, -1)
        return fft2c(rho)

    def lift(self, rho):
        return self.lift_op.forward(self._lifted_grids(rho))

    def data_cost(self, rho):
        r = self.mask * self._enc(rho) - self.zf
        return float(np.vdot(r, r).real)

    def solve(self, rho, target, weight):
        w = self.lift_op.weights[:, :, np.newaxis, np.newaxis]
        if target is None:
            weight = 0.0
        if self.coil_lifting:
            kw = self.mask + weight * w

            def normal(x):
                return self._adj(kw * self._enc(x))

            rhs = self.adj_zf
            if target is not None:
                back = self.lift_op.adjoint(target)
                back = back.reshape(self.nx, self.ny, self.ngrids, self.nc).transpose(0, 1, 3, 2)
                rhs = rhs + weight * self._adj(back)
        else:
            w2 = w[:, :, 0]

            def normal(x):
                return self._adj(self.mask * self._enc(x)) + weight * ifft2c(w2 * fft2c(x))

            rhs = self.adj_zf
            if target is not None:
                rhs = rhs + weight * ifft2c(self.lift_op.adjoint(target))
        sol = cg_least_squares(normal, rhs, rho, self.cfg.cg_iters, self.cfg.cg_tol)
        return sol.x

    def result(self, rho, trace, converged):
        k = self._enc(rho)  # (nx, ny, nc, ngrids)

        def part(lo):
            sl = slice(lo, lo + self.ns)
            img = rho[:, :, np.newaxis, sl]
            return ComplexGrid(k[..., sl], KSPACE), ComplexGrid(img, IMAGE)

        kp, ip = part(0)
        km, im = part(self.ns)
        return ReconResult(kp, km, trace, converged, ip, im)


def mm_outer_loop(problem, cfg, x0=None):
    """Run the majorize-minimize iteration on ``problem``.

    ``problem`` provides ``initial()``, ``lift(x)``, ``data_cost(x)``,
    ``solve(x, target, weight)`` and ``result(x, trace, converged)``.
    Iteration stops after ``cfg.outer_iters`` steps or when the relative
    cost change drops to ``cfg.tol``.
    """
    reg = cfg.regularizer
    lam = cfg.lam
    x = problem.initial() if x0 is None else x0
    tau = None

    def evaluate(x):
        nonlocal tau
        data = problem.data_cost(x)
        if lam == 0:
            return data, None, 0.0
        G = problem.lift(x)
        if reg.kind == RANK_RESIDUAL:
            r = min(reg.r, min(G.shape))
            Gr, resid = gram_projection(G, r)
            return data + lam * resid, Gr, lam
        if tau is None:
            s1 = np.linalg.norm(G, 2)
            tau = cfg.nuclear_tau * s1 if s1 > 0 else 1.0
        Z, nn = svt(G, tau)
        env = nn + np.linalg.norm(G - Z) ** 2 / (2 * tau)
        return data + lam * env, Z, lam / (2 * tau)

    cost, target, weight = evaluate(x)
    trace = [float(cost)]
    converged = False
    for j in range(cfg.outer_iters):
        x = problem.solve(x, target, weight)
        cost, target, weight = evaluate(x)
        if not np.isfinite(cost):
            raise NumericalError(f"non-finite cost at outer iteration {j + 1}; trace={trace}")
        prev = trace[-1]
        trace.append(float(cost))
        log.debug("outer %d cost %.6e", j + 1, cost)
        if abs(prev - cost) <= cfg.tol * max(abs(prev), np.finfo(float).tiny):
            converged = True
            break
    return problem.result(x, trace, converged)


def _mode_check(cfg, allowed):
    if cfg.mode not in allowed:
        raise ValidationError(f"config mode {cfg.mode!r} not valid here; expected one of {allowed}")


def solve_unconstrained(d_plus, d_minus, cfg):
    """Low-rank completion of the unmeasured lines with exact data consistency."""
    _mode_check(cfg, ("unconstrained",))
    d_plus, d_minus = _check_data(d_plus, d_minus)
    return mm_outer_loop(_KspaceProblem(d_plus, d_minus, cfg), cfg)


def solve_sense_loraks(d_plus, d_minus, maps, cfg):
    """SENSE data terms per polarity/shot coupled by a low-rank penalty."""
    _mode_check(cfg, ("sense", "mussels_baseline"))
    if not isinstance(maps, SenseMaps):
        raise ValidationError("maps must be a normalized SenseMaps instance")
    d_plus, d_minus = _check_data(d_plus, d_minus)
    return mm_outer_loop(_SenseProblem(d_plus, d_minus, maps, cfg), cfg)


def solve_ac_loraks(d_plus, d_minus, nullspace, cfg):
    """Calibration-nullspace penalties plus a low-rank coupling term."""
    _mode_check(cfg, ("ac_loraks",))
    d_plus, d_minus = _check_data(d_plus, d_minus)
    return mm_outer_loop(_ACProblem(d_plus, d_minus, nullspace, cfg), cfg)


def estimate_nullspace(acs, n=NeighborhoodSpec(), rank_hint=None, tau=0.05):
    """Approximate right nullspace of the multi-channel calibration C-matrix.

    The rank is ``rank_hint`` when given, otherwise it is estimated from
    the singular values with :func:`~slmepi.regularizers.estimate_rank`.
    """
    if not isinstance(acs, ComplexGrid):
        acs = ComplexGrid(acs)
    if acs.ns != 1:
        raise ValidationError("calibration data must be single-shot")
    op = get_lifting(C_MATRIX, acs.nx, acs.ny, n)
    G = op.forward(acs.data[..., 0])
    _, s, Vh = np.linalg.svd(G, full_matrices=True)
    cols = G.shape[1]
    if rank_hint is None:
        rank = estimate_rank(s, tau=tau)
    else:
        rank = int(rank_hint)
        if not 0 <= rank <= cols:
            raise ValidationError(f"rank_hint must lie in [0, {cols}]")
    N = Vh[rank:].conj().T
    return NullspaceBasis(N, rank, n, acs.nc)


def reconstruct(d_plus, d_minus, cfg, maps=None, nullspace=None):
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "unconstrained":
        return solve_unconstrained(d_plus, d_minus, cfg)
    if cfg.mode in ("sense", "mussels_baseline"):
        if maps is None:
            raise ValidationError(f"mode {cfg.mode!r} needs sensitivity maps")
        return solve_sense_loraks(d_plus, d_minus, maps, cfg)
    if nullspace is None:
        raise ValidationError("ac_loraks needs a nullspace basis")
    return solve_ac_loraks(d_plus, d_minus, nullspace, cfg)


def with_overrides(cfg, **kw):
    return replace(cfg, **kw)
