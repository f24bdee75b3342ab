import json

import pytest

from slmepi.cli import DEFAULTS, effective_settings, main
from slmepi.cxg import read_cxg


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--nx", "32", "--ny", "32", "--nc", "4", "--noise-sigma", "0.001",
                 "--out-dir", str(d)]) == 0
    return d


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["simulate", "--bogus", "1"]) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert main(["nonsense"]) == 1


def test_simulate_outputs_and_manifest(simulated):
    names = set(_files(simulated))
    for stem in ("d_plus", "d_minus", "acs", "truth", "truth_plus", "truth_minus", "maps"):
        assert f"{stem}.cxg" in names and f"{stem}.cxd" in names
    m = json.loads((simulated / "manifest.json").read_text())
    assert m["command"][:2] == ["slmepi", "simulate"] and m["seed"] == 0
    assert m["config"]["nc"] == 4 and len(m["config_sha256"]) == 64
    assert "d_plus.cxd" in m["outputs"] and m["version"]
    assert not any(p.name.startswith(".manifest") for p in simulated.iterdir())


def test_simulate_is_byte_identical(simulated, tmp_path):
    assert main(["simulate", "--nx", "32", "--ny", "32", "--nc", "4", "--noise-sigma", "0.001",
                 "--out-dir", str(tmp_path)]) == 0
    a, b = _files(simulated), _files(tmp_path)
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b
    ma = json.loads((simulated / "manifest.json").read_text())
    mb = json.loads((tmp_path / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_seed_changes_noise(simulated, tmp_path):
    main(["simulate", "--nx", "32", "--ny", "32", "--nc", "4", "--noise-sigma", "0.001", "--seed", "3",
          "--out-dir", str(tmp_path)])
    assert (tmp_path / "d_plus.cxd").read_bytes() != (simulated / "d_plus.cxd").read_bytes()


@pytest.mark.parametrize("mode,extra", [
    ("ac_loraks", ["--acs", "acs.cxg"]),
    ("sense", ["--maps", "maps.cxg"]),
    ("mussels_baseline", ["--maps", "maps.cxg"]),
    ("unconstrained", []),
])
def test_reconstruct_modes(mode, extra, simulated, tmp_path):
    extra = [str(simulated / e) if e.endswith(".cxg") else e for e in extra]
    argv = ["reconstruct", "--d-plus", str(simulated / "d_plus.cxg"), "--d-minus",
            str(simulated / "d_minus.cxg"), "--mode", mode, "--outer-iters", "2", "--cg-iters", "3",
            "--rank", "20", "--out-dir", str(tmp_path), "--output", "r"] + extra
    assert main(argv) == 0
    k, header = read_cxg(tmp_path / "r_plus.cxg")
    assert k.shape == (32, 32, 4, 1) and header["domain"] == "kspace"
    cost = (tmp_path / "r_cost.csv").read_text().splitlines()
    assert cost[0] == "iteration,cost" and len(cost) >= 3
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert str(simulated / "d_plus.cxg") in m["inputs"]
    assert (tmp_path / "r_images_plus.cxg").exists() == (mode in ("sense", "mussels_baseline"))


def test_reconstruct_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.cxg"
    assert main(["reconstruct", "--d-plus", str(missing), "--d-minus", str(missing),
                 "--out-dir", str(tmp_path)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_reconstruct_needs_maps_for_sense(simulated, tmp_path, capsys):
    assert main(["reconstruct", "--d-plus", str(simulated / "d_plus.cxg"), "--d-minus",
                 str(simulated / "d_minus.cxg"), "--mode", "sense", "--out-dir", str(tmp_path)]) == 1
    assert "--maps" in capsys.readouterr().err


def test_verify_theorem_passes(tmp_path, capsys):
    assert main(["verify-theorem", "--size", "16", "--channels", "2", "--trials", "100",
                 "--radius", "2", "--out-dir", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().err
    rep = json.loads((tmp_path / "theorem_report.json").read_text())
    assert rep["passed"] and rep["configurations"] == 2
    rows = (tmp_path / "theorem.csv").read_text().splitlines()
    assert rows[0] == "radius,nc,kind,trials,max_rel_diff,passed" and len(rows) == 3


def test_landscape_csv(tmp_path):
    assert main(["landscape", "--size", "16", "--alphas", "11", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "landscape.csv").read_text().splitlines()
    assert rows[0] == "pair,alpha,cost" and len(rows) == 12
    costs = [float(r.split(",")[2]) for r in rows[1:]]
    assert max(costs) <= costs[0] * (1 + 1e-9)


def test_constrained_landscape(tmp_path):
    args = ["landscape", "--source", "phantom", "--size", "32", "--channels", "4", "--radius", "1",
            "--regularizer", "rank_residual", "--rank", "20", "--alphas", "3", "--out-dir", str(tmp_path)]
    assert main(args + ["--constraint", "sense"]) == 0
    costs = [float(r.split(",")[2]) for r in (tmp_path / "landscape.csv").read_text().splitlines()[1:]]
    assert costs[2] < costs[1] < costs[0]
    assert main(["landscape", "--constraint", "sense", "--out-dir", str(tmp_path)]) == 1


def test_spectrum_from_file_and_default(simulated, tmp_path):
    assert main(["spectrum", "--input", str(simulated / "acs.cxg"), "--radius", "1",
                 "--out-dir", str(tmp_path)]) == 0
    rank = json.loads((tmp_path / "rank.json").read_text())
    assert rank["columns"] == 4 * 9 and 1 <= rank["estimated_rank"] <= 36
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert len(lines) == 36
    assert main(["spectrum", "--input", str(simulated / "truth.cxg"), "--out-dir", str(tmp_path)]) == 1
    assert main(["spectrum", "--kind", "S", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "rank.json").read_text())["columns"] == 2 * 2 * 8 * 25


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"simulate": {"nc": 2, "nx": 48}}))
    s = effective_settings("simulate", {"config": str(cfg), "nx": 32})
    assert s["nc"] == 2 and s["nx"] == 32 and s["ny"] == DEFAULTS["simulate"]["ny"]
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 1


def test_numerical_failure_exit_code(monkeypatch, tmp_path):
    import slmepi.cli as cli
    from slmepi.errors import NumericalError

    def boom(s, run):
        raise NumericalError("diverged")

    monkeypatch.setitem(cli.COMMANDS, "landscape", boom)
    assert main(["landscape", "--out-dir", str(tmp_path)]) == 2


def test_evaluate_small(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"evaluate": {"accelerations": "2", "methods": ["zero_fill"]}}))
    assert main(["evaluate", "--config", str(cfg), "--out-dir", str(tmp_path), "--images"]) == 0
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert rows[0].startswith("scenario,method,R,nrmse") and len(rows) == 2
    assert (tmp_path / "timings.csv").exists()
    assert any(p.suffix == ".pgm" for p in tmp_path.iterdir())
    assert main(["evaluate", "--methods", "magic", "--out-dir", str(tmp_path)]) == 1
