"""Driver tests: configs, mesh building, the descent loop, artifacts."""

import csv
import dataclasses
import math
import os

import numpy as np
import pytest

from morphopt import driver
from morphopt.driver import (HISTORY_HEADER, build_mesh, build_setup,
                             convergence_study, default_config,
                             gradient_check, load_state, optimize, save_state)
from morphopt.mesh import write_msh


def tiny_config(**kw):
    # desk-scale model run: 32 cells, 3 iterations, small spline grid
    small = dict(n_theta=8, n_r=2, refinements=0, spline_cells=4,
                 max_iterations=3, write_vtk=False)
    small.update(kw)
    return dataclasses.replace(default_config("model"), **small)


# ---------------------------------------------------------------------------
# configs and meshes

def test_default_config_rejects_unknown_kind():
    with pytest.raises(ValueError):
        default_config("heat")


def test_default_meshes_carry_required_tags():
    expected = {
        "bernoulli": {"inner", "outer"},
        "model": {"inner", "outer"},
        "stokes": {"obstacle", "inflow", "outflow", "wall"},
        "elasticity": {"clamp", "load", "free"},
    }
    for kind, tags in expected.items():
        mesh = build_mesh(default_config(kind))
        assert set(mesh.tags) == tags
        for tag in tags:
            assert len(mesh.edges_of_tag(tag)) > 0


def test_build_mesh_rejects_unknown_source():
    with pytest.raises(ValueError):
        build_mesh(dataclasses.replace(tiny_config(), mesh_source="rock"))


def test_msh_source_matches_generated_mesh(tmp_path):
    # same base annulus via file or generator, refined once with snapping
    cfg = tiny_config(refinements=1)
    base = build_mesh(tiny_config(refinements=0))
    path = tmp_path / "annulus.msh"
    path.write_text(write_msh(base))
    from_file = build_mesh(dataclasses.replace(cfg, mesh_source="msh",
                                               msh_path=str(path)))
    generated = build_mesh(cfg)
    assert from_file.num_nodes == generated.num_nodes
    assert np.allclose(from_file.nodes, generated.nodes, atol=1e-12)
    assert np.array_equal(from_file.cells, generated.cells)
    assert set(from_file.tags) == set(generated.tags)


# ---------------------------------------------------------------------------
# descent loop termination

def test_budget_zero_records_only_initial_iterate():
    res = optimize(tiny_config(max_iterations=0))
    assert res.stop_reason == "budget"
    assert len(res.history) == 1
    rec = res.history[0]
    assert rec.iter == 0
    assert rec.step == 0.0
    assert rec.min_det == 1.0
    assert math.isnan(rec.Jerr)  # no reference value configured
    assert rec.grad_norm > 0.0


def test_gradient_tolerance_stops_immediately():
    res = optimize(tiny_config(grad_tol=1e9))
    assert res.stop_reason == "gradient"
    assert len(res.history) == 1


def test_stagnation_stops_after_two_zero_steps():
    # an unreachable determinant threshold makes every candidate inadmissible
    res = optimize(tiny_config(det_threshold=1e9, max_iterations=10))
    assert res.stop_reason == "stagnation"
    assert len(res.history) == 2
    assert [r.step for r in res.history] == [0.0, 0.0]
    assert res.history[0].J == res.history[1].J


def test_history_iterates_and_monotone_objective():
    res = optimize(tiny_config())
    assert res.stop_reason in ("budget", "stagnation", "gradient")
    assert [r.iter for r in res.history] == list(range(len(res.history)))
    assert len(res.history) <= tiny_config().max_iterations + 1
    js = [r.J for r in res.history]
    assert all(b <= a for a, b in zip(js, js[1:]))
    steps = [r.step for r in res.history[1:]]
    assert all(s >= 0.0 for s in steps)
    assert all(r.min_det > 0.0 for r in res.history)


def test_optimize_is_deterministic():
    a = optimize(tiny_config())
    b = optimize(tiny_config())
    assert len(a.history) == len(b.history)
    for ra, rb in zip(a.history, b.history):
        assert dataclasses.astuple(ra)[:2] == dataclasses.astuple(rb)[:2]
        assert dataclasses.astuple(ra)[3:] == dataclasses.astuple(rb)[3:]
        assert math.isnan(ra.Jerr) and math.isnan(rb.Jerr)
    assert np.array_equal(a.deformation.f, b.deformation.f)


# ---------------------------------------------------------------------------
# artifacts

def test_history_csv_format_and_roundtrip(tmp_path):
    out = tmp_path / "run"
    cfg = tiny_config(max_iterations=2, out_dir=str(out), j_ref=0.0,
                      write_vtk=True)
    res = optimize(cfg)
    with open(out / "history.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(HISTORY_HEADER)
    assert len(rows) - 1 == len(res.history) <= 3
    for row, rec in zip(rows[1:], res.history):
        assert int(row[0]) == rec.iter
        values = tuple(float(c) for c in row[1:])
        assert values == (rec.J, rec.Jerr, rec.grad_norm, rec.step,
                          rec.min_det)
    saved = load_state(out / "final_state.txt")
    assert np.array_equal(saved, res.deformation.f)
    for name in ("initial.vtk", "final.vtk"):
        assert (out / name).read_text().startswith("# vtk DataFile")


def test_partial_history_persisted_on_error(tmp_path):
    out = tmp_path / "crash"
    cfg = tiny_config(out_dir=str(out))
    setup = build_setup(cfg)
    orig = setup.problem.assemble_dJ
    calls = []

    def boom(state):
        calls.append(None)
        if len(calls) >= 2:
            raise RuntimeError("injected")
        return orig(state)

    setup.problem.assemble_dJ = boom
    with pytest.raises(RuntimeError, match="injected"):
        optimize(cfg, setup=setup)
    with open(out / "history.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(HISTORY_HEADER)
    assert len(rows) == 2  # the iterate recorded before the failure
    assert os.path.exists(out / "final_state.txt")


def test_state_file_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    f = rng.standard_normal(40) * np.logspace(-12, 3, 40)
    path = tmp_path / "state.txt"
    save_state(path, f)
    assert np.array_equal(load_state(path), f)


# ---------------------------------------------------------------------------
# convergence study

def test_study_requires_three_levels_and_reference():
    with pytest.raises(ValueError, match="3 levels"):
        convergence_study(tiny_config(j_ref=1.0), levels=(1, 2))
    with pytest.raises(ValueError, match="j_ref"):
        convergence_study(tiny_config(), levels=(1, 2, 3))
    with pytest.raises(ValueError, match="axis"):
        convergence_study(tiny_config(j_ref=1.0), axis="time",
                          levels=(1, 2, 3))


def test_study_fits_rate_from_level_errors(monkeypatch, tmp_path):
    def fake(config, axis, level):
        h = 2.0 ** -level
        return level, h, 3.0 * h ** 2

    monkeypatch.setattr(driver, "_study_level", fake)
    out = tmp_path / "study"
    cfg = tiny_config(j_ref=0.0, out_dir=str(out))
    res = convergence_study(cfg, axis="mesh", levels=(3, 1, 2))
    assert res.rate == pytest.approx(2.0, abs=1e-10)
    assert res.warning is False
    assert [r[0] for r in res.rows] == [1, 2, 3]  # sorted by level
    with open(out / "rates.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["level", "h", "Jerr", "fitted_rate"]
    assert len(rows) == 4
    assert {float(r[3]) for r in rows[1:]} == {res.rate}


def test_study_warns_on_nonmonotone_errors(monkeypatch):
    errs = {1: 1e-2, 2: 4e-2, 3: 1e-3}

    def fake(config, axis, level):
        return level, 2.0 ** -level, errs[level]

    monkeypatch.setattr(driver, "_study_level", fake)
    res = convergence_study(tiny_config(j_ref=0.0), levels=(1, 2, 3))
    assert res.warning is True


def test_thread_cap_env_preserves_results(monkeypatch):
    def fake(config, axis, level):
        return level, 2.0 ** -level, 2.0 ** (-2 * level)

    monkeypatch.setattr(driver, "_study_level", fake)
    cfg = tiny_config(j_ref=0.0)
    monkeypatch.setenv("MORPHOPT_THREADS", "1")
    seq = convergence_study(cfg, levels=(1, 2, 3))
    monkeypatch.setenv("MORPHOPT_THREADS", "3")
    par = convergence_study(cfg, levels=(1, 2, 3))
    assert seq.rows == par.rows
    assert seq.rate == par.rate


# ---------------------------------------------------------------------------
# derivative check

def test_gradient_check_is_seed_deterministic():
    cfg = tiny_config()
    a = gradient_check(cfg, seed=7)
    b = gradient_check(cfg, seed=7)
    assert a.order == b.order
    assert a.pairing == b.pairing
    assert a.rows == b.rows
    c = gradient_check(cfg, seed=8)
    assert c.pairing != a.pairing


def test_gradient_check_order_near_two():
    res = gradient_check(tiny_config(), seed=0)
    assert res.order > 1.9


def test_gradient_check_detects_scaled_derivative():
    res = gradient_check(tiny_config(), seed=0, dj_scale=1.5,
                         steps=(1e-2, 1e-3, 1e-4))
    assert res.order < 1.3
