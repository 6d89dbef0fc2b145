import csv
import json

import numpy as np
import pytest

from nhimld.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from nhimld.config import ConfigError, config_from_dict, load_recipe, parse_config, recipe_names
from nhimld.gridio import read_grid


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


SMALL_LD = {
    "command": "ld_map",
    "energy": {"excess": 0.125},
    "slices": [{"surface": "uxpx", "k": 0.0, "resolution": 12}],
    "ld": {"tau": 5.0},
}


class TestConfig:
    def test_recipes_load(self):
        names = recipe_names()
        for n in ("fig2a", "fig2f", "fig3", "fig4", "fig5_family", "fig5_manifolds"):
            assert n in names
        for n in names:
            load_recipe(n)

    def test_recipe_contents(self):
        fam = load_recipe("fig5_family")
        assert [e.excess for e in fam.energies] == pytest.approx([0.125 + 0.25 * k for k in range(10)])
        f4 = load_recipe("fig4")
        assert f4.energy.total == 24.0 and f4.ld.mode == "variable_time"
        assert f4.ld.saddle_region == ((9.0, 2.5, 1.0), (12.0, 7.5, 4.0))
        assert [s.surface for s in f4.slices] == ["x", "y", "z"]
        f2 = load_recipe("fig2f")
        assert f2.ld.tau == 50.0 and f2.energy.excess == 0.125
        f3 = load_recipe("fig3")
        assert [s.k for s in f3.slices] == [-7.0, -7.1, -7.2] and f3.energy.total == 15.25
        m = load_recipe("fig5_manifolds")
        assert m.energy.excess == 2.25 and m.manifold.stability == "both" and m.manifold.branch == "both"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="ld.taux"):
            config_from_dict({**SMALL_LD, "ld": {"taux": 1.0}})
        with pytest.raises(ConfigError, match="colour"):
            config_from_dict({**SMALL_LD, "colour": "red"})

    def test_json_position(self):
        with pytest.raises(ConfigError, match="line 2, column"):
            parse_config('{"command": "ld_map",\n "energy": }')

    @pytest.mark.parametrize("patch", [
        {"energy": {"total": 1.0, "excess": 1.0}},
        {"energy": None},
        {"slices": []},
        {"ld": {"p_exponent": 2.0}},
        {"model": {"kind": "barbanis2dof", "saddle": "left"}},
        {"slices": [{"surface": "uxpx", "resolution": 1}]},
        {"slices": [{"surface": "uxpx", "ranges": [[1.0, 0.0], [0.0, 1.0]]}]},
        {"command": "po_family"},
        {"command": "manifolds", "model": {"kind": "barbanis3dof"}},
        {"workers": 0},
    ])
    def test_invalid(self, patch):
        with pytest.raises(ConfigError):
            config_from_dict({**SMALL_LD, **patch})


class TestMain:
    def test_seed_only(self, tmp_path, capsys):
        assert main(["--config", write(tmp_path, SMALL_LD), "--seed-only"]) == EXIT_OK
        echo = json.loads(capsys.readouterr().out)
        assert echo["ld"]["tau"] == 5.0 and echo["ld"]["p_exponent"] == 0.5
        assert not (tmp_path / "out").exists()

    def test_config_errors(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
        assert main(["--recipe", "nope"]) == EXIT_CONFIG
        assert main(["--config", write(tmp_path, {**SMALL_LD, "bogus": 1})]) == EXIT_CONFIG
        assert main(["--recipe", "fig2a", "--workers", "0", "--seed-only"]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_wrong_surface_for_model(self, tmp_path):
        cfg = {**SMALL_LD, "model": {"kind": "barbanis3dof"}, "energy": {"total": 24.0}}
        assert main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_empty_slice(self, tmp_path, capsys):
        cfg = {**SMALL_LD, "energy": {"total": 10.0}, "slices": [{"surface": "uxpx", "k": -7.1}]}
        assert main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err

    def test_numerical_failure(self, tmp_path):
        cfg = {"command": "po_family", "energies": [{"excess": 0.5}], "continuation": {"max_iter": 0}}
        assert main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL

    def test_ld_map(self, tmp_path):
        out = tmp_path / "ld"
        assert main(["--config", write(tmp_path, SMALL_LD), "--out", str(out), "--workers", "2"]) == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "ld_map" and man["wall_time_s"] > 0
        assert set(man["outputs"]) == {"uxpx_k+0.000.ldg", "uxpx_k+0.000.ldg.json", "uxpx_k+0.000.ppm"}
        st = man["results"]["slices"]["uxpx_k+0.000"]["statistics"]
        assert st["nodes"] == 144 and len(st["total_quantiles"]) == 7
        grid = read_grid(out / "uxpx_k+0.000.ldg")
        assert grid.shape == (12, 12) and grid.config.tau == 5.0

    def test_manifest_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["--config", write(tmp_path, SMALL_LD), "--out", str(a)]) == EXIT_OK
        echo = json.loads((a / "manifest.json").read_text())["config"]
        echo["output_dir"] = str(b)
        assert main(["--config", write(tmp_path, echo, "echo.json")]) == EXIT_OK
        name = "uxpx_k+0.000.ldg"
        assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_po_family(self, tmp_path):
        cfg = {"command": "po_family", "energies": [{"excess": 0.125}, {"excess": 0.375}]}
        out = tmp_path / "po"
        assert main(["--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rows = list(csv.DictReader(open(out / "orbits.csv")))
        assert len(rows) == 2 and float(rows[0]["delta_e"]) == pytest.approx(0.125, abs=1e-10)
        assert float(rows[1]["periodicity_residual"]) < 1e-8
        orbit = np.loadtxt(out / "orbit_01.csv", delimiter=",", skiprows=1)
        assert orbit.shape == (1001, 5)

    def test_manifolds(self, tmp_path):
        cfg = {"command": "manifolds", "energy": {"excess": 0.25}, "manifold": {"n_fibers": 4, "time": 5.0}}
        out = tmp_path / "mf"
        assert main(["--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rows = list(csv.DictReader(open(out / "fibers.csv")))
        assert {(r["stability"], r["branch"]) for r in rows} == {("stable", "+"), ("stable", "-"),
                                                                ("unstable", "+"), ("unstable", "-")}
        assert len({r["fiber_id"] for r in rows}) == 16

    def test_psection(self, tmp_path):
        cfg = {"command": "psection", "energy": {"excess": -0.125}, "section": {"resolution": 4, "max_crossings": 3}}
        out = tmp_path / "ps"
        assert main(["--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rows = list(csv.reader(open(out / "crossings.csv")))
        assert rows[0] == ["seed_id", "n", "t", "x", "p_x"]
        man = json.loads((out / "manifest.json").read_text())
        assert man["results"]["crossings"] == 3 * man["results"]["seeds"] == len(rows) - 1

    def test_validate(self, tmp_path):
        cfg = {"command": "validate_nhim", "energy": {"total": 15.25}, "ld": {"mode": "variable_time", "tau": 10.0},
               "slices": [{"surface": "uxpx", "k": -7.1, "resolution": 15}], "image": False}
        out = tmp_path / "v"
        assert main(["--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "validate.json").read_text())
        s = rep["slices"][0]
        assert s["k"] == -7.1 and len(s["oracle"]) == 1
        assert {"ld", "stay_time"} <= set(s) and s["ld"]["distance_cells"] >= 0
        assert not (out / "uxpx_k-7.100.ppm").exists()
