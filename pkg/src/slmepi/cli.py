"""Command-line front end.

Subcommands: simulate, reconstruct, evaluate, verify-theorem, landscape,
spectrum. Settings come from built-in defaults, then an optional JSON config
file (``--config``), then command-line flags. Every run writes its outputs
and a ``manifest.json`` into ``--out-dir``.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cxg import read_cxg, read_grid, read_measured, write_cxg, write_measured
from .errors import NumericalError, ValidationError
from .evaluation import (
    SINGLE_CHANNEL_NULLSPACE_RANK,
    STANDARD_PHASE,
    run_experiment_matrix,
    single_channel_methods,
    single_channel_scenarios,
    standard_methods,
    standard_scenario,
)
from .kspace import IMAGE, KSPACE, ComplexGrid, fft2c
from .lifting import NeighborhoodSpec, get_lifting, write_spectrum_csv
from .regularizers import NUCLEAR, RANK_RESIDUAL, Regularizer, estimate_rank
from .sense import SenseMaps
from .simulation import PhaseErrorModel, SimScenario, simulate_epi
from .solvers import NullspaceBasis, ReconConfig, estimate_nullspace, reconstruct
from .theory import (
    landscape_scan,
    lifted_pair,
    make_flipped_pair,
    nullspace_penalty,
    pair_from_kspace,
    random_feasible_pair,
    sense_penalty,
    theorem_suite,
)

log = logging.getLogger("slmepi")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


# defaults per subcommand; keys double as config-file keys
DEFAULTS = {
    "simulate": dict(nx=64, ny=64, nc=8, ns=1, acceleration=1, phantom="shepp_logan",
                     fov_fraction=1.0, noise_sigma=0.0, acs_lines=24, coil_width=0.6,
                     phase_kind="polynomial_2d", phase_coefs="0.3,0.8,0.4,0.2,0.1,0.2",
                     phase_minus_coefs=None, acs_phase_kind="none", acs_phase_coefs="",
                     name="scenario"),
    "reconstruct": dict(d_plus="d_plus.cxg", d_minus="d_minus.cxg", mode="ac_loraks",
                        matrix_kind="S", regularizer=RANK_RESIDUAL, rank=40, lam=1e-3, radius=2,
                        shape="square", outer_iters=50, cg_iters=30, cg_tol=1e-8, tol=1e-6,
                        nuclear_tau=0.01, maps=None, acs=None, nullspace=None,
                        nullspace_rank=None, output="recon"),
    "evaluate": dict(suite="standard", accelerations="1,2,3", noise_sigma=0.0005, maps_from="acs",
                     images=False, methods=None),
    "verify-theorem": dict(size=16, channels="2", radius="1,2,3", kinds="C,S", trials=100),
    "landscape": dict(source="random", size=16, channels=2, regularizer=NUCLEAR, rank=None,
                      kind="C", radius=2, alphas=101, pairs=1, constraint="none", lam=1e-3),
    "spectrum": dict(input=None, input_minus=None, kind="C", radius=2, shape="square", tau=0.05),
}


def _add_common(p):
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    p.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS,
                   help="output directory (default .)")
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def _opt(p, name, **kw):
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def build_parser():
    parser = _Parser(prog="slmepi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slmepi {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate interleaved EPI data")
    for flag, typ in (("--nx", int), ("--ny", int), ("--nc", int), ("--ns", int),
                      ("--acceleration", int), ("--fov-fraction", float),
                      ("--noise-sigma", float), ("--acs-lines", int), ("--coil-width", float)):
        _opt(p, flag, type=typ, dest=flag[2:].replace("-", "_"))
    _opt(p, "--phantom", choices=("shepp_logan", "discs"))
    _opt(p, "--phase-kind", dest="phase_kind",
         choices=("none", "constant", "linear_1d", "polynomial_2d"))
    _opt(p, "--phase-coefs", dest="phase_coefs", help="comma-separated coefficients (positive polarity)")
    _opt(p, "--phase-minus-coefs", dest="phase_minus_coefs",
         help="negative-polarity coefficients (default: negated positive ones)")
    _opt(p, "--acs-phase-kind", dest="acs_phase_kind",
         choices=("none", "constant", "linear_1d", "polynomial_2d"))
    _opt(p, "--acs-phase-coefs", dest="acs_phase_coefs")
    _opt(p, "--name")
    _add_common(p)

    p = sub.add_parser("reconstruct", help="ghost-corrected reconstruction of CXG data")
    _opt(p, "--d-plus", dest="d_plus")
    _opt(p, "--d-minus", dest="d_minus")
    _opt(p, "--mode", choices=("unconstrained", "sense", "ac_loraks", "mussels_baseline"))
    _opt(p, "--matrix-kind", dest="matrix_kind", choices=("C", "S"))
    _opt(p, "--regularizer", choices=(RANK_RESIDUAL, NUCLEAR))
    _opt(p, "--rank", type=int)
    _opt(p, "--lam", type=float)
    _opt(p, "--radius", type=int)
    _opt(p, "--shape", choices=("square", "disc"))
    _opt(p, "--outer-iters", dest="outer_iters", type=int)
    _opt(p, "--cg-iters", dest="cg_iters", type=int)
    _opt(p, "--cg-tol", dest="cg_tol", type=float)
    _opt(p, "--tol", type=float)
    _opt(p, "--nuclear-tau", dest="nuclear_tau", type=float)
    _opt(p, "--maps", help="sensitivity maps CXG (sense modes)")
    _opt(p, "--acs", help="calibration k-space CXG (ac_loraks)")
    _opt(p, "--nullspace", help="precomputed nullspace CXG (ac_loraks)")
    _opt(p, "--nullspace-rank", dest="nullspace_rank", type=int)
    _opt(p, "--output", help="output file stem")
    _add_common(p)

    p = sub.add_parser("evaluate", help="run the simulated experiment matrix")
    _opt(p, "--suite", choices=("standard", "single-channel"))
    _opt(p, "--accelerations")
    _opt(p, "--noise-sigma", dest="noise_sigma", type=float)
    _opt(p, "--maps-from", dest="maps_from", choices=("acs", "exact"))
    _opt(p, "--methods", help="comma-separated subset of method names")
    p.add_argument("--images", action="store_true", default=argparse.SUPPRESS,
                   help="dump magnitude/phase graymaps")
    _add_common(p)

    p = sub.add_parser("verify-theorem", help="sign-flip invariance of lifted spectra")
    _opt(p, "--size", type=int)
    _opt(p, "--channels")
    _opt(p, "--radius")
    _opt(p, "--kinds")
    _opt(p, "--trials", type=int)
    _add_common(p)

    p = sub.add_parser("landscape", help="cost along the segment between a pair and its flip")
    _opt(p, "--source", choices=("random", "phantom"))
    _opt(p, "--size", type=int)
    _opt(p, "--channels", type=int)
    _opt(p, "--regularizer", choices=(RANK_RESIDUAL, NUCLEAR))
    _opt(p, "--rank", type=int, help="rank for rank_residual (default: estimated)")
    _opt(p, "--kind", choices=("C", "S"))
    _opt(p, "--radius", type=int)
    _opt(p, "--alphas", type=int)
    _opt(p, "--pairs", type=int)
    _opt(p, "--constraint", choices=("none", "sense", "ac_loraks"),
         help="add a SENSE or calibration-nullspace term (phantom source only)")
    _opt(p, "--lam", type=float, help="regularizer weight when a constraint is added")
    _add_common(p)

    p = sub.add_parser("spectrum", help="singular values of a lifted matrix")
    _opt(p, "--input", help="k-space CXG (default: simulated phantom)")
    _opt(p, "--input-minus", dest="input_minus", help="second polarity to concatenate")
    _opt(p, "--kind", choices=("C", "S"))
    _opt(p, "--radius", type=int)
    _opt(p, "--shape", choices=("square", "disc"))
    _opt(p, "--tau", type=float)
    _add_common(p)
    return parser


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{p}: config must be a JSON object")
    return cfg


def effective_settings(command, flags):
    """Merge defaults, config file and flags (later wins)."""
    settings = dict(DEFAULTS[command], seed=0, out_dir=".")
    cfg = _load_config(flags.get("config"))
    section = cfg.get(command, cfg)
    unknown = set(section) - set(settings)
    if unknown:
        raise ValidationError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    settings.update(section)
    settings.update({k: v for k, v in flags.items() if k not in ("command", "config", "verbose")})
    return settings


class _Run:
    """Collects input and output files for the manifest."""

    def __init__(self, settings, argv):
        self.settings = settings
        self.argv = argv
        self.out_dir = Path(settings["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs = [], []
        self.t0 = time.perf_counter()

    def out(self, name):
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def inp(self, path):
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"input file not found: {p}")
        self.inputs.append(p)
        return p

    def write_manifest(self):
        cfg_text = json.dumps(self.settings, sort_keys=True, default=str)
        files = {}
        for p in self.outputs:
            files[p.name] = _sha256(p)
            data = p.with_suffix(".cxd")
            if p.suffix == ".cxg" and data.is_file():
                files[data.name] = _sha256(data)
        manifest = {
            "command": ["slmepi"] + list(self.argv),
            "config": json.loads(cfg_text),
            "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
            "seed": self.settings["seed"],
            "version": __version__,
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": dict(sorted(files.items())),
            "wall_time": round(time.perf_counter() - self.t0, 3),
        }
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=".manifest", suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
        os.replace(tmp, self.out_dir / "manifest.json")


def _phase(kind, coefs):
    coefs = _floats(coefs) if isinstance(coefs, str) else list(coefs or [])
    return PhaseErrorModel(kind, tuple(coefs))


def cmd_simulate(s, run):
    plus = _phase(s["phase_kind"], s["phase_coefs"])
    minus = plus.scaled(-1) if s["phase_minus_coefs"] is None else _phase(s["phase_kind"], s["phase_minus_coefs"])
    scn = SimScenario(nx=s["nx"], ny=s["ny"], nc=s["nc"], ns=s["ns"], acceleration=s["acceleration"],
                      phantom=s["phantom"], fov_fraction=s["fov_fraction"], phase_plus=plus,
                      phase_minus=minus, acs_phase=_phase(s["acs_phase_kind"], s["acs_phase_coefs"]),
                      noise_sigma=s["noise_sigma"], acs_lines=s["acs_lines"], coil_width=s["coil_width"],
                      seed=s["seed"], name=s["name"])
    sim = simulate_epi(scn)
    write_measured(run.out("d_plus.cxg"), sim.d_plus)
    write_measured(run.out("d_minus.cxg"), sim.d_minus)
    write_cxg(run.out("acs.cxg"), sim.acs)
    write_cxg(run.out("truth.cxg"), sim.truth)
    write_cxg(run.out("truth_plus.cxg"), sim.truth_plus)
    write_cxg(run.out("truth_minus.cxg"), sim.truth_minus)
    write_cxg(run.out("maps.cxg"), sim.maps.maps, IMAGE)
    log.info("simulated %s: %dx%d, %d channels, R=%d", scn.name, scn.nx, scn.ny, scn.nc,
             scn.acceleration)


def _read_maps(path):
    a, _ = read_cxg(path)
    return SenseMaps(a[..., 0])


def _read_nullspace(path, n):
    a, header = read_cxg(path)
    return NullspaceBasis(a[:, :, 0, 0], int(header.get("source_rank", 0)), n,
                          int(header.get("nc", 1)))


def cmd_reconstruct(s, run):
    d_plus = read_measured(run.inp(s["d_plus"]))
    d_minus = read_measured(run.inp(s["d_minus"]))
    n = NeighborhoodSpec(s["radius"], s["shape"])
    reg = Regularizer(s["regularizer"], s["rank"] if s["regularizer"] == RANK_RESIDUAL else 0)
    cfg = ReconConfig(mode=s["mode"], matrix_kind=s["matrix_kind"], regularizer=reg, lam=s["lam"],
                      neighborhood=n, outer_iters=s["outer_iters"], cg_iters=s["cg_iters"],
                      cg_tol=s["cg_tol"], tol=s["tol"], nuclear_tau=s["nuclear_tau"])
    maps = nullspace = None
    if cfg.mode in ("sense", "mussels_baseline"):
        if s["maps"] is None:
            raise ValidationError(f"mode {cfg.mode} needs --maps")
        maps = _read_maps(run.inp(s["maps"]))
    if cfg.mode == "ac_loraks":
        if s["nullspace"] is not None:
            nullspace = _read_nullspace(run.inp(s["nullspace"]), n)
        elif s["acs"] is not None:
            acs = read_grid(run.inp(s["acs"]))
            nullspace = estimate_nullspace(acs, n, s["nullspace_rank"])
        else:
            raise ValidationError("mode ac_loraks needs --acs or --nullspace")
    res = reconstruct(d_plus, d_minus, cfg, maps=maps, nullspace=nullspace)
    stem = s["output"]
    write_cxg(run.out(f"{stem}_plus.cxg"), res.kspace_plus)
    write_cxg(run.out(f"{stem}_minus.cxg"), res.kspace_minus)
    if res.images_plus is not None:
        write_cxg(run.out(f"{stem}_images_plus.cxg"), res.images_plus)
        write_cxg(run.out(f"{stem}_images_minus.cxg"), res.images_minus)
    lines = ["iteration,cost"] + [f"{i},{c:.17g}" for i, c in enumerate(res.cost_trace)]
    run.out(f"{stem}_cost.csv").write_text("\n".join(lines) + "\n")
    log.info("%s: %d iterations, final cost %.6g, converged=%s", cfg.mode, res.iterations,
             res.cost_trace[-1], res.converged)


def cmd_evaluate(s, run):
    Rs = _ints(s["accelerations"])
    if s["suite"] == "standard":
        scenarios = [standard_scenario(noise_sigma=s["noise_sigma"], seed=s["seed"])]
        methods = standard_methods()
        rank_hint = None
    else:
        scenarios = single_channel_scenarios(seed=s["seed"])
        methods = single_channel_methods()
        rank_hint = SINGLE_CHANNEL_NULLSPACE_RANK
    if s["methods"]:
        wanted = s["methods"].split(",") if isinstance(s["methods"], str) else list(s["methods"])
        known = {m.name for m in methods}
        if set(wanted) - known:
            raise ValidationError(f"unknown methods: {sorted(set(wanted) - known)}; known: {sorted(known)}")
        methods = [m for m in methods if m.name in wanted]
    image_dir = run.out_dir if s["images"] else None
    report = run_experiment_matrix(scenarios, methods, Rs, maps_from=s["maps_from"],
                                   rank_hint=rank_hint, image_dir=image_dir)
    report.write_csv(run.out("report.csv"))
    report.write_timings(run.out_dir / "timings.csv")
    if image_dir is not None:
        run.outputs.extend(sorted(run.out_dir.glob("*.pgm")))
    for row in report.rows:
        log.info("%s R=%d %-16s nrmse=%.4g ghost=%.3g %s", row.scenario, row.R, row.method,
                 row.nrmse, row.ghost_ratio, row.error)


def cmd_verify_theorem(s, run):
    rows = theorem_suite(radii=_ints(s["radius"]), channels=_ints(s["channels"]),
                         kinds=[k.strip() for k in str(s["kinds"]).split(",")], size=s["size"],
                         trials=s["trials"], seed=s["seed"])
    lines = ["radius,nc,kind,trials,max_rel_diff,passed"]
    lines += [f"{r['radius']},{r['nc']},{r['kind']},{r['trials']},{r['max_rel_diff']:.6g},{int(r['passed'])}"
              for r in rows]
    run.out("theorem.csv").write_text("\n".join(lines) + "\n")
    ok = all(r["passed"] for r in rows)
    summary = {"passed": ok, "configurations": len(rows),
               "worst_max_rel_diff": float(f"{max(r['max_rel_diff'] for r in rows):.6g}")}
    run.out("theorem_report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"theorem-1 sign-flip invariance: {'PASS' if ok else 'FAIL'} "
          f"({len(rows)} configurations, worst {summary['worst_max_rel_diff']:.3g})", file=sys.stderr)
    return 0 if ok else 2


def phantom_pair(size=64, nc=8, seed=0, with_sim=False):
    """Ghost-free pair: each polarity's fully sampled coil k-space.

    The polarities carry opposite 2-D polynomial phase errors, so the pair
    is not trivially rank-deficient from duplicated columns.
    """
    sim = simulate_epi(SimScenario(nx=size, ny=size, nc=nc, phase_plus=STANDARD_PHASE,
                                   phase_minus=STANDARD_PHASE.scaled(-1), acs_lines=min(24, size),
                                   seed=seed))
    p = pair_from_kspace(ComplexGrid(fft2c(sim.truth_plus.data), KSPACE),
                         ComplexGrid(fft2c(sim.truth_minus.data), KSPACE))
    return (p, sim) if with_sim else p


def lifted_rank_estimate(pair, n, kind, tau=0.05):
    s = np.linalg.svd(lifted_pair(pair.k_plus.data, pair.k_minus.data, n, kind), compute_uv=False)
    return estimate_rank(s, tau=tau)


def cmd_landscape(s, run):
    n = NeighborhoodSpec(s["radius"])
    rng = np.random.default_rng(s["seed"])
    alphas = np.linspace(0.0, 1.0, s["alphas"])
    if s["constraint"] != "none" and s["source"] != "phantom":
        raise ValidationError("--constraint needs --source phantom")
    lines = ["pair,alpha,cost"]
    for i in range(s["pairs"]):
        penalty = None
        if s["source"] == "random":
            p = random_feasible_pair(s["size"], s["size"], s["channels"], rng)
        else:
            p, sim = phantom_pair(s["size"], s["channels"], s["seed"] + i, with_sim=True)
            if s["constraint"] == "sense":
                penalty = sense_penalty(sim.maps)
            elif s["constraint"] == "ac_loraks":
                penalty = nullspace_penalty(estimate_nullspace(sim.acs, n))
        r = s["rank"]
        if s["regularizer"] == RANK_RESIDUAL and r is None:
            r = lifted_rank_estimate(p, n, s["kind"])
        reg = Regularizer(s["regularizer"], r or 0)
        scan = landscape_scan(p, make_flipped_pair(p), reg, n, s["kind"], alphas,
                              penalty=penalty, lam=s["lam"])
        lines += [f"{i},{a:.6g},{c:.17g}" for a, c in scan]
    run.out("landscape.csv").write_text("\n".join(lines) + "\n")


def cmd_spectrum(s, run):
    n = NeighborhoodSpec(s["radius"], s["shape"])
    if s["input"] is None:
        p = phantom_pair(seed=s["seed"])
        blocks = np.concatenate([p.k_plus.data[..., 0], p.k_minus.data[..., 0]], axis=2)
    else:
        grids = [read_grid(run.inp(s["input"]))]
        if s["input_minus"] is not None:
            grids.append(read_grid(run.inp(s["input_minus"])))
        for g in grids:
            if g.domain != KSPACE:
                raise ValidationError("spectrum expects k-space grids")
        blocks = np.concatenate([g.data.transpose(0, 1, 3, 2).reshape(g.nx, g.ny, -1) for g in grids],
                                axis=2)
    op = get_lifting(s["kind"], blocks.shape[0], blocks.shape[1], n)
    sv = np.linalg.svd(op.forward(blocks), compute_uv=False)
    write_spectrum_csv(run.out("spectrum.csv"), sv)
    try:
        r = estimate_rank(sv, tau=s["tau"])
    except ValidationError:
        r = 0
    run.out("rank.json").write_text(json.dumps({"estimated_rank": int(r), "columns": int(sv.size)}) + "\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "verify-theorem": cmd_verify_theorem,
    "landscape": cmd_landscape,
    "spectrum": cmd_spectrum,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    flags = vars(ns)
    logging.basicConfig(level=logging.INFO if flags.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        settings = effective_settings(ns.command, flags)
        run = _Run(settings, argv)
        code = COMMANDS[ns.command](settings, run) or 0
        run.write_manifest()
    except ValidationError as exc:
        print(f"slmepi {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"slmepi {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
