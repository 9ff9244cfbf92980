"""Command line tests: config parsing, subcommands, exit codes, artifacts."""

import csv

import pytest

from morphopt import cli, driver
from morphopt.cli import ConfigError, load_config, main
from morphopt.driver import HISTORY_HEADER
from morphopt.fem import SolveError

BASE = {
    "problem": {"kind": "model"},
    "mesh": {"n_theta": "8", "n_r": "2", "refinements": "0"},
    "spline": {"degree": "2", "cells": "4"},
    "optimizer": {"max_iterations": "2"},
    "output": {"write_vtk": "false"},
}


def write_ini(path, **overrides):
    sections = {k: dict(v) for k, v in BASE.items()}
    for section, keys in overrides.items():
        sections.setdefault(section, {}).update(keys)
    lines = []
    for section, keys in sections.items():
        lines.append("[%s]" % section)
        lines.extend("%s = %s" % kv for kv in keys.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return str(path)


@pytest.fixture()
def ini(tmp_path):
    return write_ini(tmp_path / "run.ini")


# ---------------------------------------------------------------------------
# config parsing

def test_missing_config_names_path(tmp_path, capsys):
    path = tmp_path / "absent.ini"
    assert main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err
    assert str(path) in err


@pytest.mark.parametrize("overrides", [
    {"solver": {"tol": "1"}},
    {"optimizer": {"stepgrid": "0,1"}},
    {"problem": {"kind": "heat"}},
    {"problem": {"young": "15"}},  # elasticity key on a model run
    {"mesh": {"n_theta": "many"}},
    {"fem": {"degree": "3"}},
    {"spline": {"degree": "4"}},
    {"spline": {"cells": "2"}},
    {"spline": {"level": "3"}},  # cells given too
    {"optimizer": {"det_threshold": "1.5"}},
    {"optimizer": {"step_grid": "0.0, 0.5, 1.5"}},
    {"optimizer": {"max_iterations": "-1"}},
    {"mesh": {"source": "msh"}},  # no path
])
def test_bad_configs_exit_2(tmp_path, capsys, overrides):
    path = write_ini(tmp_path / "bad.ini", **overrides)
    assert main(["run", "--config", path]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_value_message_names_the_key(tmp_path):
    path = write_ini(tmp_path / "bad.ini", mesh={"n_theta": "many"})
    with pytest.raises(ConfigError, match="mesh.n_theta"):
        load_config(path)


def test_spline_level_sets_power_of_two_cells(tmp_path):
    sections = {k: dict(v) for k, v in BASE.items()}
    sections["spline"] = {"degree": "2", "level": "3"}
    lines = []
    for section, keys in sections.items():
        lines.append("[%s]" % section)
        lines.extend("%s = %s" % kv for kv in keys.items())
    path = tmp_path / "level.ini"
    path.write_text("\n".join(lines))
    assert load_config(str(path)).spline_cells == 8


def test_config_parses_comments_and_problem_params(tmp_path):
    path = write_ini(tmp_path / "run.ini",
                     problem={"kind": "model",
                              "guess_radius": "0.45  # tighter start",
                              "guess_center": "0.1, 0.0"})
    config = load_config(path)
    assert config.problem_params["guess_radius"] == 0.45
    assert config.problem_params["guess_center"] == (0.1, 0.0)
    assert config.max_iterations == 2


def test_omitted_sections_fall_back_to_defaults(tmp_path, caplog):
    path = tmp_path / "min.ini"
    path.write_text("[problem]\nkind = model\n")
    with caplog.at_level("INFO", logger="morphopt"):
        config = load_config(str(path))
    assert config.kind == "model"
    assert config.max_iterations == driver.default_config(
        "model").max_iterations
    assert any("defaults" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# run

def test_run_writes_artifacts_and_summary(tmp_path, ini, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--out-dir", str(out)]) == 0
    text = capsys.readouterr().out
    assert "stop=" in text and "artifacts in %s" % out in text
    with open(out / "history.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(HISTORY_HEADER)
    assert 1 <= len(rows) - 1 <= 3  # budget 2: at most 3 iterates
    assert (out / "final_state.txt").exists()
    assert not (out / "final.vtk").exists()  # write_vtk off


def test_run_budget_override(tmp_path, ini, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--out-dir", str(out),
                 "--budget", "0"]) == 0
    assert "stop=budget" in capsys.readouterr().out
    with open(out / "history.csv", newline="") as fh:
        assert len(list(csv.reader(fh))) == 2


def test_run_creates_default_out_dir(tmp_path, ini, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--config", ini]) == 0
    assert (tmp_path / "morphopt-out" / "history.csv").exists()


def test_invalid_seed_string_exits_2(ini):
    with pytest.raises(SystemExit) as ex:
        main(["run", "--config", ini, "--seed", "two"])
    assert ex.value.code == 2


def test_solver_failure_exits_3(ini, monkeypatch, capsys):
    def explode(config, setup=None):
        raise SolveError("iteration diverged")

    monkeypatch.setattr(driver, "optimize", explode)
    assert main(["run", "--config", ini]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_malformed_mesh_file_exits_2(tmp_path, capsys):
    msh = tmp_path / "broken.msh"
    msh.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
                   "$Nodes\nnot-a-count\n$EndNodes\n")
    path = write_ini(tmp_path / "run.ini",
                     mesh={"source": "msh", "path": str(msh)})
    assert main(["run", "--config", path]) == 2
    assert "line 5" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# check-gradient

def test_check_gradient_prints_order(ini, capsys):
    assert main(["check-gradient", "--config", ini, "--seed", "5"]) == 0
    first = capsys.readouterr().out
    assert first.startswith("order=")
    assert float(first.split("=")[1]) > 1.9
    assert main(["check-gradient", "--config", ini, "--seed", "5"]) == 0
    assert capsys.readouterr().out == first


@pytest.mark.parametrize("steps", ["0.1", "0.1,-0.2", "0.1,0"])
def test_check_gradient_rejects_bad_steps(ini, capsys, steps):
    assert main(["check-gradient", "--config", ini, "--steps", steps]) == 2
    assert "step sizes" in capsys.readouterr().err


def test_check_gradient_accepts_custom_steps(ini, capsys):
    assert main(["check-gradient", "--config", ini, "--seed", "1",
                 "--steps", "1e-1,1e-2,1e-3"]) == 0
    assert capsys.readouterr().out.startswith("order=")


# ---------------------------------------------------------------------------
# study

def test_study_writes_rates_csv(tmp_path, ini, capsys):
    out = tmp_path / "study"
    rc = main(["study", "--config", write_ini(tmp_path / "s.ini",
                                              optimizer={"j_ref": "0.0"}),
               "--axis", "grid", "--levels", "2,3,4", "--budget", "1",
               "--out-dir", str(out)])
    assert rc == 0
    assert "rate=" in capsys.readouterr().out
    with open(out / "rates.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["level", "h", "Jerr", "fitted_rate"]
    assert len(rows) == 4
    assert all(len(r) == 4 for r in rows)
    assert len({r[3] for r in rows[1:]}) == 1  # rate repeated per row


def test_study_needs_three_levels(ini, capsys):
    assert main(["study", "--config", ini, "--levels", "1"]) == 2
    assert "3 levels" in capsys.readouterr().err


def test_study_rejects_unparsable_levels(ini, capsys):
    assert main(["study", "--config", ini, "--levels", "a,b,c"]) == 2
    assert "bad levels" in capsys.readouterr().err


def test_study_rejects_unknown_axis(ini):
    with pytest.raises(SystemExit) as ex:
        main(["study", "--config", ini, "--axis", "time",
              "--levels", "1,2,3"])
    assert ex.value.code == 2
