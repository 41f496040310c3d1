import json
import math
import re

import numpy as np
import pytest
import yaml

from wavobstacle import build_scenario, preset, run_evolution
from wavobstacle.cli import main
from wavobstacle.errors import ConfigError, UnknownPresetError
from wavobstacle.scenario_io import (
    PRESET_NAMES,
    config_from_dict,
    dumps_json,
    exact_solution,
    load_config,
    parse_config,
    profile_function,
    serialize_config,
    write_outputs,
)
from wavobstacle.verification import detect_stabilization


def fig1_dict():
    return preset("paper-fig1").to_dict()


class TestPresets:
    def test_fig1_values(self):
        cfg = preset("paper-fig1")
        sc = build_scenario(cfg)
        assert sc.grid.n_cells == 200 and sc.grid.b == 2 * math.pi
        assert sc.tau == pytest.approx(0.01)
        assert sc.u0.bc_left == sc.u0.bc_right == 1.2
        np.testing.assert_allclose(sc.u0.interior_values, np.sin(sc.grid.interior_nodes) + 1.2)
        assert np.all(sc.v0.interior_values == -2.0)
        assert np.all(sc.lower.full[1:-1] == 0.0)

    def test_listing(self):
        assert {"paper-fig1", "free-sine", "fractional-free"} <= set(PRESET_NAMES)

    def test_unknown(self):
        with pytest.raises(UnknownPresetError, match="nope"):
            preset("nope")

    def test_presets_are_copies(self):
        a = preset("paper-fig1")
        a.solver["grad_tol"] = 1.0
        assert preset("paper-fig1").solver.get("grad_tol") != 1.0

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_round_trip(self, name):
        cfg = preset(name)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_exact_solution(self):
        f = exact_solution(preset("free-sine"))
        x = np.linspace(0, math.pi, 7)
        np.testing.assert_allclose(f(0.7, x), np.sin(x) * math.cos(0.7))
        assert exact_solution(preset("paper-fig1")) is None


class TestValidation:
    def test_fractional_nonzero_bc(self):
        d = preset("fractional-free").to_dict()
        d["bc"] = {"left": 1.0, "right": 0.0}
        with pytest.raises(ConfigError, match="zero exterior"):
            config_from_dict(d)

    @pytest.mark.parametrize(
        "path,value,field",
        [
            (("n_cells",), 0, "n_cells"),
            (("n_steps",), 2.5, "n_steps"),
            (("s",), 1.5, "s"),
            (("s",), 0.0, "s"),
            (("T",), -1.0, "T"),
            (("domain",), {"a": 1.0, "b": 0.0}, "domain"),
            (("u0", "kind"), "expression", "u0.kind"),
            (("v0",), {"kind": "constant", "value": "fast"}, "v0"),
            (("solver", "grad_tol"), 0.0, "solver.grad_tol"),
            (("bc",), {"left": 0.0}, "bc"),
        ],
    )
    def test_field_errors(self, path, value, field):
        d = fig1_dict()
        node = d
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
        with pytest.raises(ConfigError, match=re.escape(field)):
            config_from_dict(d)

    def test_missing_key(self):
        d = fig1_dict()
        del d["u0"]
        with pytest.raises(ConfigError, match="u0"):
            config_from_dict(d)

    def test_unknown_key(self):
        d = fig1_dict()
        d["colour"] = "red"
        with pytest.raises(ConfigError, match="colour"):
            config_from_dict(d)

    def test_obstacle_above_boundary(self):
        d = fig1_dict()
        d["obstacle"]["lower"] = {"kind": "constant", "value": 5.0}
        with pytest.raises(ConfigError):
            config_from_dict(d)

    def test_bad_yaml(self):
        with pytest.raises(ConfigError):
            parse_config("n_cells: [1, 2")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.yaml")

    def test_table_profile(self):
        f = profile_function({"kind": "table", "x": [0.0, 1.0], "y": [0.0, 2.0]})
        np.testing.assert_allclose(f(np.array([0.25, 0.5])), [0.5, 1.0])

    def test_table_must_increase(self):
        d = fig1_dict()
        d["u0"] = {"kind": "table", "x": [1.0, 0.0], "y": [0.0, 1.0]}
        with pytest.raises(ConfigError, match="u0.x"):
            config_from_dict(d)


@pytest.fixture(scope="module")
def fig1_files(fig1_record, tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1")
    rep = detect_stabilization(fig1_record, 0.02)
    write_outputs(fig1_record, rep, out, preset("paper-fig1"), stride=10)
    return out


class TestOutputs:
    def test_files_and_headers(self, fig1_files):
        heads = {
            "energy.csv": "t,E,kinetic,seminorm_sq",
            "snapshots.csv": "t,x,u,v",
            "contacts.csv": "t,j_min,j_max",
        }
        for name, head in heads.items():
            assert (fig1_files / name).read_text().splitlines()[0] == head
        assert json.loads((fig1_files / "impacts.json").read_text())["impacts"]
        meta = json.loads((fig1_files / "run_meta.json").read_text())
        assert meta["config"]["name"] == "paper-fig1" and meta["stride"] == 10

    def test_energy_rows(self, fig1_files, fig1_record):
        rows = (fig1_files / "energy.csv").read_text().splitlines()[1:]
        assert len(rows) == fig1_record.n_steps + 1
        vals = np.array([[float(v) for v in r.split(",")] for r in rows])
        # 17 significant digits round-trip exactly
        np.testing.assert_array_equal(vals[:, 1], fig1_record.energies)
        assert np.all(np.diff(vals[:, 0]) > 0)

    def test_snapshot_order(self, fig1_files, fig1_record):
        rows = (fig1_files / "snapshots.csv").read_text().splitlines()[1:]
        assert len(rows) == 101 * 201
        t = np.array([float(r.split(",")[0]) for r in rows])
        x = np.array([float(r.split(",")[1]) for r in rows[:201]])
        assert np.all(np.diff(t) >= 0)
        np.testing.assert_array_equal(x, fig1_record.grid.nodes)

    def test_contacts_nonempty(self, fig1_files):
        assert len((fig1_files / "contacts.csv").read_text().splitlines()) > 2

    def test_json_precision(self):
        assert json.loads(dumps_json({"a": 0.1 + 0.2}))["a"] == 0.1 + 0.2

    def test_rest_state_energies(self, tmp_path):
        d = preset("free-sine").to_dict()
        d["u0"] = {"kind": "constant", "value": 0.0}
        cfg = config_from_dict(d)
        rec = run_evolution(build_scenario(cfg))
        write_outputs(rec, detect_stabilization(rec, 0.02), tmp_path, cfg)
        rows = (tmp_path / "energy.csv").read_text().splitlines()[1:]
        assert all(float(r.split(",")[1]) == 0.0 for r in rows)

    def test_deterministic(self, tmp_path):
        cfg = preset("free-sine")
        texts = []
        for k in range(2):
            rec = run_evolution(build_scenario(cfg))
            write_outputs(rec, detect_stabilization(rec, 0.02), tmp_path / str(k), cfg)
            texts.append({p.name: p.read_bytes() for p in (tmp_path / str(k)).iterdir()})
        assert texts[0] == texts[1]

    def test_unwritable(self, tmp_path, fig1_record):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            write_outputs(fig1_record, detect_stabilization(fig1_record, 0.02), blocker / "sub")


class TestCli:
    def test_run_preset(self, tmp_path):
        assert main(["run", "--preset", "free-sine", "--out", str(tmp_path)]) == 0
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"energy.csv", "snapshots.csv", "contacts.csv", "impacts.json", "run_meta.json"}

    def test_run_config_file(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(serialize_config(preset("free-sine")))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--stride", "5"]) == 0
        assert (tmp_path / "o" / "energy.csv").exists()

    def test_verify(self, capsys):
        assert main(["verify", "--preset", "free-sine"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_unknown_preset(self, capsys):
        assert main(["run", "--preset", "nope"]) == 2
        assert "nope" in capsys.readouterr().err

    def test_usage(self):
        assert main([]) == 2
        assert main(["run"]) == 2
        assert main(["run", "--preset", "free-sine", "--config", "x.yaml"]) == 2

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("name: x\n")
        assert main(["verify", "--config", str(cfg)]) == 2

    def test_presets(self, capsys):
        assert main(["presets"]) == 0
        assert "paper-fig1" in capsys.readouterr().out
        assert main(["presets", "paper-fig1"]) == 0
        assert yaml.safe_load(capsys.readouterr().out)["n_cells"] == 200

    def test_convergence(self, capsys):
        d = preset("free-sine").to_dict()
        assert main(["convergence", "--preset", "free-sine", "--levels", "2"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "# reference: exact" and len(out) == 4
        assert d["n_cells"] == int(out[2].split(",")[0])
