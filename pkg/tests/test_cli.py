import json
import math

import numpy as np
import pytest

from gdyn import io
from gdyn.cli import main, parse_grid, parse_source_arg
from gdyn.errors import ValidationError


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["-q", *args, "--out", str(out)])
    return code, out


def test_simulate_coulomb_snapshot_count(tmp_path):
    code, out = run(tmp_path, "simulate", "--scheme", "coulomb", "--n", "100", "--dt", "1e-3",
                    "--steps", "3000", "--seed", "7", "--snapshot-every", "100")
    assert code == 0
    snaps = io.read_snapshots_csv(out / "snapshots_traj0000.csv")
    # thirty snapshots after the initial condition
    assert [s[0] for s in snaps[1:]] == list(range(100, 3001, 100))
    assert snaps[0][0] == 0
    assert io.verify_manifest(out / "manifest.json") == []


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--scheme", "dyson", "--n", "4", "--init-scale", "1", "--steps", "50",
            "--snapshot-every", "10", "--dt", "1e-3", "--dump-matrices", "--trajectories", "2"]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, "--threads", "2", name="b")
    for f in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "manifest.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    dumps = sorted((a / "matrices").iterdir())
    assert len(dumps) == 2 * 6
    x = io.read_matrix(dumps[-1])
    lam = io.read_snapshots_csv(a / "snapshots_traj0001.csv")[-1][2]
    assert np.allclose(np.sort_complex(np.linalg.eigvals(x)), np.sort_complex(lam), atol=1e-10)


def test_simulate_degenerate_dyson_start(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", "--scheme", "dyson", "--n", "3", "--steps", "5")
    assert code == 2
    assert "DegenerateSpectrum" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["simulate", "--dt", "abc"],
    ["simulate", "--dt", "-1"],
    ["simulate", "--scheme", "heun"],
    ["frobnicate"],
    ["verify", "nonsense"],
    ["compare-fig1", "--n", "3"],
    ["exact", "--grid", "1:2"],
])
def test_invalid_input_exit_code(tmp_path, args):
    code, _ = run(tmp_path, *args)
    assert code == 1


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[simulate]\nscheme = ou\nn = 3\nsteps = 20\nsnapshot_every = 5\nseed = 11\n")
    code, out = run(tmp_path, "--config", str(cfg), "simulate", "--steps", "10")
    assert code == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["config"]["scheme"] == "ou" and doc["config"]["steps"] == 10 and doc["seed"] == 11
    assert len(io.read_snapshots_csv(out / "snapshots_traj0000.csv")) == 3


def test_config_file_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[simulate]\nbogus = 1\n")
    assert run(tmp_path, "--config", str(cfg), "simulate")[0] == 1
    cfg.write_text("[simulate]\nn = many\n")
    assert run(tmp_path, "--config", str(cfg), "simulate")[0] == 1
    assert "config field 'n'" in capsys.readouterr().err


def test_exact_ginibre_center(tmp_path):
    code, out = run(tmp_path, "exact", "--quantity", "correlator", "--n", "5", "--tau", "0.5",
                    "--grid=-0.4:0.4:5,-0.4:0.4:5", "--gnuplot")
    assert code == 0
    g = io.read_field_grid(out / "correlator")
    assert g.values[2, 2] == pytest.approx(1 / (math.pi * 0.5), rel=1e-12)
    assert (out / "correlator.gp").exists()


def test_exact_cross_check(tmp_path, capsys):
    code, out = run(tmp_path, "exact", "--n", "4", "--source", "0.3,-0.2j,0.1+0.1j,-0.4",
                    "--method", "beta", "--grid=-0.5:0.5:3,-0.5:0.5:3", "--cross-check")
    assert code == 0
    meta = json.loads((out / "correlator.json").read_text())["meta"]
    assert meta["cross_check"]["max_abs_discrepancy"] < 1e-6
    assert meta["method"] == "beta"


def test_exact_spiric_connected_support(tmp_path):
    code, out = run(tmp_path, "exact", "--n", "4", "--tau", "0.27", "--source", "spiric:0.5",
                    "--grid=-1.05:1.05:8,-0.6:0.6:5")
    assert code == 0
    meta = json.loads((out / "correlator.json").read_text())["meta"]
    assert meta["support_components"] == 1


def test_exact_density_and_missing_points(tmp_path):
    code, out = run(tmp_path, "exact", "--quantity", "density", "--n", "2", "--source", "0.5,-0.5",
                    "--grid=-0.5:0.5:3,0:0:1")
    assert code == 0
    g = io.read_field_grid(out / "density")
    assert np.isnan(g.values[0, 0]) and np.isnan(g.values[2, 0]) and np.isfinite(g.values[1, 0])
    assert len(json.loads((out / "density.json").read_text())["meta"]["missing"]) == 2


@pytest.mark.parametrize("law", ["macro", "bulk", "edge", "collision", "spiric"])
def test_asymptotic_laws(tmp_path, law):
    code, out = run(tmp_path, "asymptotic", "--law", law, "--grid=-1:1:5,-1:1:5", "--n", "4")
    assert code == 0
    g = io.read_field_grid(out / law)
    assert np.all(np.isfinite(g.values))


def test_asymptotic_bulk_center(tmp_path):
    _, out = run(tmp_path, "asymptotic", "--law", "bulk", "--tau", "2", "--grid=0:0:1,0:0:1")
    assert io.read_field_grid(out / "bulk").values[0, 0] == pytest.approx(1 / (2 * math.pi))


def test_verify_identities(tmp_path):
    code, out = run(tmp_path, "verify", "identities", "--seed", "1", "--points", "100")
    assert code == 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "name,n,value,bound,tolerance,passed"
    assert all(r.endswith(",1") for r in rows[1:])


def test_verify_ecp_scalar(tmp_path):
    code, out = run(tmp_path, "verify", "ecp", "--n", "1", "--trajectories", "2000")
    assert code == 0
    assert "ecp_heat_exact" in (out / "report.txt").read_text()


def test_verify_hierarchy(tmp_path):
    code, _ = run(tmp_path, "verify", "hierarchy", "--n", "4")
    assert code == 0


def test_compare_fig1_smoke(tmp_path):
    import time

    t0 = time.perf_counter()
    code, out = run(tmp_path, "compare-fig1", "--n", "2", "--steps", "200", "--snapshots", "5")
    assert time.perf_counter() - t0 < 1.0
    assert code == 0
    for label in ("coulomb", "ou"):
        lines = (out / f"fig1_{label}_histogram.csv").read_text().splitlines()
        assert lines[0] == "bin_lo,bin_hi,density,semicircle"
        assert (out / f"fig1_{label}_trajectories.csv").exists()


def test_compare_fig1_seeds_differ(tmp_path):
    _, a = run(tmp_path, "compare-fig1", "--n", "2", "--steps", "200", "--snapshots", "5", "--seed", "1", name="a")
    _, b = run(tmp_path, "compare-fig1", "--n", "2", "--steps", "200", "--snapshots", "5", "--seed", "2", name="b")
    assert (a / "fig1_ou_trajectories.csv").read_text() != (b / "fig1_ou_trajectories.csv").read_text()


def test_source_and_grid_parsing(tmp_path):
    assert parse_source_arg("ginibre", 3).counts == (3,)
    assert parse_source_arg("spiric:0.5", 4).values == (0.5, -0.5)
    f = tmp_path / "src.txt"
    f.write_text("0.1\n0.2j\n")
    assert parse_source_arg(f"@{f}", 2).n == 2
    with pytest.raises(ValidationError):
        parse_source_arg("0.1,0.2", 3)
    g = parse_grid("-1:1:3,0:2:5")
    assert (g.nx, g.ny) == (3, 5)
    assert np.allclose(g.axes()[1], np.linspace(0, 2, 5))


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "gdyn" in capsys.readouterr().out
