"""Coil combination, ghost metrics and the simulated experiment matrix."""

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .kspace import IMAGE, ComplexGrid, ifft2c, nrmse
from .lifting import C_MATRIX, S_MATRIX, NeighborhoodSpec
from .regularizers import NUCLEAR, RANK_RESIDUAL, Regularizer
from .sense import SenseMaps, estimate_maps_from_acs
from .simulation import PhaseErrorModel, SimScenario, interleave, simulate_epi
from .solvers import ReconConfig, estimate_nullspace, reconstruct

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "scenario", "method", "R", "nrmse", "nrmse_pca", "ghost_ratio", "iterations", "converged", "error",
)
ZERO_FILL = "zero_fill"


def _channel_matrix(images):
    a = images.data if isinstance(images, ComplexGrid) else np.asarray(images)
    while a.ndim < 4:
        a = a[..., np.newaxis]
    return a


def coil_combine_pca(images):
    """Project channels onto the first principal component.

    The component is the dominant eigenvector of the (uncentered) channel
    covariance over all pixels and shots, with its phase fixed so that its
    largest entry is real and positive. The projection keeps the energy of
    that component. Returns a single-channel grid.
    """
    a = _channel_matrix(images)
    nx, ny, nc, ns = a.shape
    if nc < 2:
        raise ValidationError("PCA combination needs at least two channels")
    X = a.transpose(0, 1, 3, 2).reshape(-1, nc)
    cov = X.conj().T @ X
    if not np.any(cov):
        raise ValidationError("channel covariance is identically zero")
    _, vecs = np.linalg.eigh(cov)
    v = vecs[:, -1]
    j = int(np.argmax(np.abs(v)))
    v = v * (np.abs(v[j]) / v[j])
    out = (X @ v).reshape(nx, ny, ns)[:, :, np.newaxis, :]
    return ComplexGrid(out, IMAGE)


def ghost_mask(mask):
    """Half-FOV copy of ``mask`` along phase encoding, with the mask removed."""
    mask = np.asarray(mask, dtype=bool)
    return np.roll(mask, mask.shape[1] // 2, axis=1) & ~mask


def ghost_ratio(img, support_mask):
    """Energy in the half-FOV ghost region over energy inside the object."""
    mask = np.asarray(support_mask, dtype=bool)
    if not mask.any():
        raise ValidationError("support mask is empty")
    ghost = ghost_mask(mask)
    if not ghost.any():
        raise ValidationError("ghost region is empty; the object fills the field of view")
    a = _channel_matrix(img)
    e = np.sum(np.abs(a) ** 2, axis=(2, 3))
    inside = e[mask].sum()
    if inside == 0:
        raise ValidationError("image has no energy inside the support")
    return float(e[ghost].sum() / inside)


@dataclass(frozen=True)
class MethodSpec:
    """A named reconstruction recipe for the experiment matrix.

    ``lam`` and ``r`` may be scalars or dicts keyed by acceleration.
    ``method='zero_fill'`` is the conventional reconstruction of the
    interleaved lines, with no correction.
    """

    name: str
    mode: str = ZERO_FILL
    matrix_kind: str = S_MATRIX
    regularizer: str = RANK_RESIDUAL
    lam: object = 1e-3
    r: object = 40
    outer_iters: int = 15
    cg_iters: int = 15

    def config(self, R, neighborhood=NeighborhoodSpec()):
        def pick(v, what):
            if not isinstance(v, dict):
                return v
            if R not in v:
                raise ValidationError(f"method {self.name!r} has no {what} for R={R}")
            return v[R]

        lam, r = pick(self.lam, "lam"), pick(self.r, "r")
        reg = Regularizer(self.regularizer, r if self.regularizer == RANK_RESIDUAL else 0)
        return ReconConfig(mode=self.mode, matrix_kind=self.matrix_kind, regularizer=reg, lam=lam,
                           neighborhood=neighborhood, outer_iters=self.outer_iters,
                           cg_iters=self.cg_iters)


@dataclass
class ReportRow:
    scenario: str
    method: str
    R: int
    nrmse: float = float("nan")
    nrmse_pca: float = float("nan")
    ghost_ratio: float = float("nan")
    iterations: int = 0
    converged: bool = False
    error: str = ""
    wall_time: float = 0.0
    cost_trace: list = field(default_factory=list, repr=False)
    images: tuple = field(default=None, repr=False)

    def cells(self):
        def fmt(v):
            return f"{v:.6g}"

        return [self.scenario, self.method, str(self.R), fmt(self.nrmse), fmt(self.nrmse_pca),
                fmt(self.ghost_ratio), str(self.iterations), str(int(self.converged)), self.error]


@dataclass
class ExperimentReport:
    """Rows sorted by (scenario, R, method).

    ``wall_time`` is kept per row but left out of the CSV so that reruns
    produce identical files.
    """

    rows: list = field(default_factory=list)

    def sort(self):
        self.rows.sort(key=lambda r: (r.scenario, r.R, r.method))
        return self

    def get(self, scenario, method, R):
        for row in self.rows:
            if (row.scenario, row.method, row.R) == (scenario, method, R):
                return row
        raise KeyError((scenario, method, R))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows:
            w.writerow(row.cells())
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())

    def write_timings(self, path):
        lines = ["scenario,method,R,wall_time"]
        lines += [f"{r.scenario},{r.method},{r.R},{r.wall_time:.3f}" for r in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")


def write_pgm(path, values, lo=None, hi=None):
    """8-bit binary portable graymap of a real 2-D array.

    Values are mapped linearly from ``[lo, hi]`` (default: data range) to
    ``[0, 255]``; the first array axis runs down the image.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValidationError("graymaps need a 2-D array")
    lo = float(np.min(v)) if lo is None else lo
    hi = float(np.max(v)) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.rint((v - lo) * scale), 0, 255).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + px.tobytes())


def dump_images(out_dir, stem, img):
    """Magnitude and phase graymaps of a single-channel image."""
    a = _channel_matrix(img)[:, :, 0, 0]
    out_dir = Path(out_dir)
    write_pgm(out_dir / f"{stem}_mag.pgm", np.abs(a), lo=0.0)
    write_pgm(out_dir / f"{stem}_phase.pgm", np.angle(a), lo=-np.pi, hi=np.pi)


def _stack_polarities(p, m):
    # treat the two polarity images as extra channels
    return np.concatenate([p, m], axis=2)


def _combined(p, m):
    return coil_combine_pca(_stack_polarities(p, m))


def _score(row, img_p, img_m, sim):
    tp, tm = sim.truth_plus.data, sim.truth_minus.data
    ref = _stack_polarities(tp, tm)
    est = _stack_polarities(img_p, img_m)
    row.nrmse = nrmse(est, ref)
    if ref.shape[2] >= 2:
        row.nrmse_pca = nrmse(np.abs(_combined(img_p, img_m).data), np.abs(_combined(tp, tm).data))
    row.ghost_ratio = ghost_ratio(est, sim.support)


def scenario_inputs(sim, maps_from="acs", neighborhood=NeighborhoodSpec(), rank_hint=None):
    """Sensitivity maps and nullspace basis shared by all methods of one scenario."""
    scn = sim.scenario
    if maps_from == "exact":
        maps = sim.maps
    elif maps_from == "acs":
        maps = (estimate_maps_from_acs(sim.acs.data, scn.ny) if scn.nc > 1
                else SenseMaps.from_mask(np.ones((scn.nx, scn.ny), dtype=bool)))
    else:
        raise ValidationError(f"unknown maps source {maps_from!r}")
    nullspace = estimate_nullspace(sim.acs, neighborhood, rank_hint)
    return maps, nullspace


def run_method(method, sim, R, maps, nullspace, neighborhood=NeighborhoodSpec()):
    """Run one method on one simulated acquisition and score it."""
    row = ReportRow(sim.scenario.name, method.name, R)
    t0 = time.perf_counter()
    try:
        if method.mode == ZERO_FILL:
            img = ifft2c(interleave(sim.d_plus, sim.d_minus))[..., np.newaxis]
            img_p = img_m = np.repeat(img, sim.scenario.ns, axis=3)
            row.converged = True
        else:
            cfg = method.config(R, neighborhood)
            res = reconstruct(sim.d_plus, sim.d_minus, cfg, maps=maps, nullspace=nullspace)
            img_p, img_m = res.coil_images()
            row.iterations = res.iterations
            row.converged = res.converged
            row.cost_trace = res.cost_trace
        _score(row, img_p, img_m, sim)
        row.images = (img_p, img_m)
    except (ValidationError, NumericalError, np.linalg.LinAlgError) as exc:
        log.warning("%s/%s/R=%d failed: %s", row.scenario, row.method, R, exc)
        row.error = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
    row.wall_time = time.perf_counter() - t0
    return row


def run_experiment_matrix(scenarios, methods, accelerations, maps_from="acs",
                          neighborhood=NeighborhoodSpec(), rank_hint=None, image_dir=None):
    """Simulate every (scenario, R) and run every method on it.

    Each scenario's own ``acceleration`` is replaced by the values in
    ``accelerations``. Failures become rows with an ``error`` entry.
    """
    report = ExperimentReport()
    if not methods:
        return report
    for scn in scenarios:
        for R in accelerations:
            sim = simulate_epi(replace(scn, acceleration=int(R)))
            maps, nullspace = scenario_inputs(sim, maps_from, neighborhood, rank_hint)
            for m in methods:
                row = run_method(m, sim, int(R), maps, nullspace, neighborhood)
                if image_dir is not None and not row.error:
                    img = row.images[0][..., :1]
                    if sim.scenario.nc > 1 or img.shape[2] > 1:
                        img = _combined(*row.images).data
                    dump_images(image_dir, f"{scn.name}_R{R}_{m.name}", img)
                report.rows.append(row)
    return report.sort()


# ---------------------------------------------------------------------------
# standard suites

STANDARD_PHASE = PhaseErrorModel("polynomial_2d", (0.3, 0.8, 0.4, 0.2, 0.1, 0.2))


def standard_scenario(name="phantom8", noise_sigma=0.0005, seed=0):
    """64x64, 8-channel Shepp-Logan with opposite 2-D polynomial phase per polarity.

    Broad coil profiles (width 1.5) keep the ACS-estimated maps accurate
    enough that the map-based methods are limited by their model rather
    than by calibration error.
    """
    return SimScenario(nx=64, ny=64, nc=8, ns=1, phantom="shepp_logan",
                       phase_plus=STANDARD_PHASE, phase_minus=STANDARD_PHASE.scaled(-1),
                       noise_sigma=noise_sigma, acs_lines=24, coil_width=1.5, seed=seed, name=name)


def standard_methods():
    """Zero-fill plus the three corrected reconstructions.

    ``lam`` and ``r`` are the best values found by a manual sweep for each
    method and acceleration on :func:`standard_scenario`.
    """
    return [
        MethodSpec(ZERO_FILL),
        MethodSpec("ac_loraks", "ac_loraks", S_MATRIX, RANK_RESIDUAL,
                   lam={1: 1e-2, 2: 3e-4, 3: 3e-4}, r={1: 80, 2: 40, 3: 40}),
        MethodSpec("sense_loraks", "sense", S_MATRIX, RANK_RESIDUAL,
                   lam={1: 1e-3, 2: 1e-5, 3: 1e-5}, r={1: 80, 2: 60, 3: 40}),
        MethodSpec("mussels_baseline", "mussels_baseline", C_MATRIX, NUCLEAR,
                   lam={1: 1e-3, 2: 1e-5, 3: 3e-6}),
    ]


# One coil gives a flat calibration spectrum without a clear gap, so the
# single-channel suite fixes the calibration rank: about half of the 25
# neighborhood columns, matching an object that fills half the FOV.
SINGLE_CHANNEL_NULLSPACE_RANK = 12


def single_channel_methods():
    return [
        MethodSpec(ZERO_FILL),
        MethodSpec("ac_loraks", "ac_loraks", S_MATRIX, RANK_RESIDUAL, lam=1e-2, r=40),
    ]


def single_channel_scenarios(noise_sigma=0.0, seed=0):
    """Loose-FOV discs (object within half the FOV) and tight-FOV Shepp-Logan, one coil."""
    common = dict(nx=64, ny=64, nc=1, ns=1, phase_plus=STANDARD_PHASE,
                  phase_minus=STANDARD_PHASE.scaled(-1), noise_sigma=noise_sigma, acs_lines=24,
                  seed=seed)
    return [
        SimScenario(phantom="discs", name="loose_fov_1ch", **common),
        SimScenario(phantom="shepp_logan", name="tight_fov_1ch", **common),
    ]
