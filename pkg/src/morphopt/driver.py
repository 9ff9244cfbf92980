"""Run orchestration: configurations, descent loop, checks and studies."""

import csv
import dataclasses
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse.linalg as spla

from . import deform, descent, problems, splines
from .mesh import (Circle, generate_annulus, generate_rectangle, parse_msh,
                   uniform_refine, write_vtk)
from .problems import make_problem


@dataclasses.dataclass
class RunConfig:
    """Flat run description; INI sections map onto these fields."""

    kind: str = "bernoulli"
    problem_params: dict = dataclasses.field(default_factory=dict)

    # mesh
    mesh_source: str = "annulus"
    msh_path: str = ""
    msh_tags: dict = dataclasses.field(default_factory=dict)
    box: tuple = ((-1.0, -1.0), (1.0, 1.0))
    n_theta: int = 16
    n_r: int = 4
    grading: float = 1.0
    nx: int = 40
    ny: int = 20
    refinements: int = 2
    clamp_frac: float = 0.2
    load_frac: float = 0.2

    # fem
    degree: int = 2
    isoparametric: bool = True

    # spline
    spline_degree: int = 3
    spline_cells: int = 16
    spline_box: tuple = ((-0.9, -0.9), (0.9, 0.9))

    # optimizer
    max_iterations: int = 200
    step_grid: tuple = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
    det_threshold: float = 0.01
    grad_tol: float = 0.0
    j_ref: float = float("nan")
    seed: int = 0

    # output
    out_dir: str = ""
    write_vtk: bool = True


# For the penalized problems the useful steps span decades: the quadratic
# penalty turns J_p uphill beyond s ~ 1/mu while progress on J needs the
# largest step the penalty admits, so the default grid is geometric.
_GEOMETRIC_GRID = (0.0,) + tuple(np.round(np.logspace(-4.0, 0.0, 9), 12))

_DEFAULTS = {
    "bernoulli": dict(
        kind="bernoulli", box=((-1.0, -1.0), (1.0, 1.0)), n_theta=16, n_r=4,
        refinements=2, degree=2, isoparametric=True, spline_degree=3,
        spline_cells=16, spline_box=((-0.9, -0.9), (0.9, 0.9)),
        max_iterations=200, j_ref=problems.BernoulliProblem.J_ref),
    "model": dict(
        kind="model", box=((-1.0, -1.0), (1.0, 1.0)), n_theta=16, n_r=4,
        refinements=1, degree=1, isoparametric=True, spline_degree=2,
        spline_cells=8, spline_box=((-0.9, -0.9), (0.9, 0.9)),
        max_iterations=20,
        problem_params=dict(guess_center=(0.04, 0.05), guess_radius=0.5)),
    "stokes": dict(
        kind="stokes", box=((-6.0, -2.5), (6.0, 2.5)), n_theta=32, n_r=8,
        grading=1.6, refinements=1, degree=2, isoparametric=True,
        spline_degree=2, spline_cells=10,
        spline_box=((-2.0, -2.0), (2.0, 2.0)), max_iterations=100),
    "elasticity": dict(
        kind="elasticity", box=((0.0, 0.0), (2.0, 1.0)), nx=40, ny=20,
        mesh_source="rectangle", refinements=0, degree=1, isoparametric=True,
        spline_degree=2, spline_cells=12,
        spline_box=((0.25, -0.25), (1.75, 1.25)), max_iterations=100,
        step_grid=_GEOMETRIC_GRID,
        # softer penalties than the library default: steepest descent needs
        # the penalty stiffness within ~1e2 of the objective's to make
        # visible progress, and mu=50 still holds the drift under 0.3%
        problem_params=dict(mu0=50.0, mu1=50.0, mu2=50.0)),
}


def default_config(kind):
    """Desk-scale defaults per problem kind."""
    if kind not in _DEFAULTS:
        raise ValueError("unknown problem kind %r" % kind)
    return RunConfig(**_DEFAULTS[kind])


# ---------------------------------------------------------------------------
# setup

def _annulus_circle(config):
    p = dict(config.problem_params)
    if config.kind == "stokes":
        center = p.get("obstacle_center", (0.0, 0.0))
        radius = p.get("obstacle_radius", 0.5)
    else:
        center = p.get("guess_center", (0.04, 0.05))
        radius = p.get("guess_radius", 0.5)
    return Circle(center, radius)


def build_mesh(config):
    """Mesh from config, refined with boundary snapping where curved."""
    snap = None
    if config.mesh_source == "annulus":
        circle = _annulus_circle(config)
        if config.kind == "stokes":
            (ax, ay), (bx, by) = config.box

            def side(mid):
                if abs(mid[0] - ax) < 1e-12:
                    return "inflow"
                if abs(mid[0] - bx) < 1e-12:
                    return "outflow"
                return "wall"

            m = generate_annulus(circle.center, circle.radius, config.box,
                                 config.n_theta, config.n_r,
                                 inner_tag="obstacle", outer_tag=side,
                                 grading=config.grading)
            snap = {"obstacle": circle}
        else:
            m = generate_annulus(circle.center, circle.radius, config.box,
                                 config.n_theta, config.n_r,
                                 grading=config.grading)
            snap = {"inner": circle}
    elif config.mesh_source == "rectangle":
        (ax, ay), (bx, by) = config.box
        H = by - ay
        cf, lf = config.clamp_frac, config.load_frac

        def tagger(mid):
            if abs(mid[0] - ax) < 1e-12 and (mid[1] < ay + cf * H
                                             or mid[1] > by - cf * H):
                return "clamp"
            if (abs(mid[0] - bx) < 1e-12
                    and abs(mid[1] - 0.5 * (ay + by)) < 0.5 * lf * H):
                return "load"
            return "free"

        m = generate_rectangle(config.box, config.nx, config.ny,
                               tagger if config.kind == "elasticity" else None)
    elif config.mesh_source == "msh":
        with open(config.msh_path) as fh:
            m = parse_msh(fh, config.msh_tags or None)
        if config.kind in ("bernoulli", "model", "stokes"):
            circle = _annulus_circle(config)
            tag = "obstacle" if config.kind == "stokes" else "inner"
            snap = {tag: circle}
    else:
        raise ValueError("unknown mesh source %r" % config.mesh_source)
    for _ in range(config.refinements):
        m = uniform_refine(m, snap)
    return m


class Setup:
    """Everything a run needs, built once: mesh, problem, deformation,
    spline space, frozen interpolation matrix, frozen Gram and its factor."""

    __slots__ = ("mesh", "problem", "deformation", "spline_space", "interp",
                 "gram", "gram_factor", "config")


def build_setup(config):
    s = Setup()
    s.config = config
    s.mesh = build_mesh(config)
    params = dict(config.problem_params)
    if config.kind == "stokes":
        params.setdefault("channel_box", config.box)
    s.problem = make_problem(config.kind, s.mesh, fe_degree=config.degree,
                             isoparametric=config.isoparametric, **params)
    s.deformation = deform.init_deformation(s.problem.geo_space,
                                            s.problem.initial_geometry())
    grid = splines.SplineGrid(config.spline_box, config.spline_cells,
                              config.spline_degree)
    s.spline_space = splines.build_spline_space(grid)
    s.interp = deform.build_interpolation_matrix(s.spline_space,
                                                 s.deformation)
    s.gram = splines.gram_h1(s.spline_space)
    s.gram_factor = spla.factorized(s.gram.tocsc())
    return s


# ---------------------------------------------------------------------------
# artifacts

HISTORY_HEADER = ("iter", "J", "Jerr", "grad_norm", "step", "min_det")


@dataclasses.dataclass
class HistoryRecord:
    iter: int
    J: float
    Jerr: float
    grad_norm: float
    step: float
    min_det: float

    def row(self):
        return [str(self.iter)] + ["%.17g" % v for v in
                                   (self.J, self.Jerr, self.grad_norm,
                                    self.step, self.min_det)]


def _atomic_write(path, writer):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_history(path, history):
    def go(fh):
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for rec in history:
            w.writerow(rec.row())
    _atomic_write(path, go)


def save_state(path, f):
    """Final deformation coefficients, one real per line."""
    _atomic_write(path, lambda fh: fh.write(
        "".join("%.17g\n" % v for v in np.asarray(f, dtype=float))))


def load_state(path):
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])


def _write_vtk_fields(setup, state, path):
    mesh = setup.mesh
    V = mesh.num_nodes
    pts = state.deformation.f.reshape(-1, 2)[:V]
    data = {}
    pr = setup.problem
    if pr.kind == "stokes":
        data["u"] = state.u.reshape(-1, 2)[:V]
        data["p"] = state.p[:V]
    elif pr.kind == "elasticity":
        data["u"] = state.u.reshape(-1, 2)[:V]
    else:
        data["u"] = state.u[:V]
    write_vtk(path, mesh, points=pts, point_data=data)


# ---------------------------------------------------------------------------
# main loop

class OptimizeResult:
    __slots__ = ("history", "state", "deformation", "setup", "stop_reason")

    def __init__(self, history, state, deformation, setup, stop_reason):
        self.history = history
        self.state = state
        self.deformation = deformation
        self.setup = setup
        self.stop_reason = stop_reason


def optimize(config, setup=None):
    """Riesz-gradient descent with the truncated line search.

    History rows describe iterates: the step column is the accepted step
    that produced the iterate (0 for the initial one).  Stops at the
    iteration budget, after two consecutive zero steps, or when the
    projected gradient norm falls below grad_tol (when positive).  On error
    the partial history is persisted before the exception propagates.
    """
    setup = setup or build_setup(config)
    problem, interp = setup.problem, setup.interp
    deformation = setup.deformation
    history = []
    stop = "budget"
    try:
        state = problem.evaluate(deformation)
        step_in = 0.0
        zeros = 0
        k = 0
        while True:
            dj = problem.assemble_dJ(state)
            direction = descent.riesz_descent(setup.gram, interp, dj,
                                              factor=setup.gram_factor)
            jerr = abs(state.objective - config.j_ref)
            history.append(HistoryRecord(
                k, state.objective, jerr, direction.gradient_norm, step_in,
                deform.min_det(deformation)))
            if k >= config.max_iterations:
                stop = "budget"
                break
            if config.grad_tol > 0.0 \
                    and direction.gradient_norm < config.grad_tol:
                stop = "gradient"
                break
            ls = descent.line_search(problem, deformation, interp, direction,
                                     current=state, steps=config.step_grid,
                                     det_threshold=config.det_threshold)
            step_in = ls.step
            zeros = zeros + 1 if ls.step == 0.0 else 0
            if zeros >= 2:
                # the search is deterministic, so a second zero step from the
                # same point proves no grid step helps; recording it again
                # would duplicate the iterate
                stop = "stagnation"
                break
            state, deformation = ls.state, ls.deformation
            k += 1
    finally:
        if config.out_dir:
            os.makedirs(config.out_dir, exist_ok=True)
            write_history(os.path.join(config.out_dir, "history.csv"),
                          history)
            save_state(os.path.join(config.out_dir, "final_state.txt"),
                       deformation.f)
    if config.out_dir and config.write_vtk:
        _write_vtk_fields(setup, problem.evaluate(
            setup.deformation), os.path.join(config.out_dir, "initial.vtk"))
        _write_vtk_fields(setup, state,
                          os.path.join(config.out_dir, "final.vtk"))
    return OptimizeResult(history, state, deformation, setup, stop)


# ---------------------------------------------------------------------------
# gradient check

class GradientCheckResult:
    """Taylor remainder study of the assembled derivative.

    rows are (s, J(s), remainder); order is the fitted slope of
    log remainder against log s, infinite when every remainder drowns in
    arithmetic noise (reported exact).
    """

    __slots__ = ("order", "exact", "rows", "pairing", "J0")

    def __init__(self, order, exact, rows, pairing, J0):
        self.order = order
        self.exact = exact
        self.rows = rows
        self.pairing = pairing
        self.J0 = J0


def gradient_check(config, seed=None, steps=(1e-1, 1e-2, 1e-3, 1e-4),
                   dj_scale=1.0, setup=None):
    """Compare J along a random spline direction with its predicted slope.

    dj_scale multiplies the assembled derivative; 1.0 checks correctness
    (fitted order about 2), any other value is a deliberate fault that must
    drag the order to about 1.
    """
    setup = setup or build_setup(config)
    problem, interp = setup.problem, setup.interp
    deformation = setup.deformation
    rng = np.random.default_rng(config.seed if seed is None else seed)
    dt = rng.standard_normal(setup.spline_space.dim)
    dt /= math.sqrt(dt @ (setup.gram @ dt))
    smax = max(steps)
    for _ in range(60):
        if deform.min_det(deformation, interp, dt, smax) \
                > setup.config.det_threshold:
            break
        dt *= 0.5
    state = problem.evaluate(deformation)
    J0 = state.objective
    dj = problem.assemble_dJ(state)
    pairing = float(dj_scale) * float(dj @ (interp @ dt))
    rows = []
    for s in steps:
        st = problem.evaluate(deform.apply_update(deformation, interp, dt,
                                                  s))
        rows.append((float(s), st.objective,
                     abs(st.objective - J0 - s * pairing)))
    noise = 1e-13 * max(1.0, abs(J0))
    fit = [(s, r) for s, _, r in rows if r > noise]
    if len(fit) < 2:
        return GradientCheckResult(math.inf, True, rows, pairing, J0)
    ls = np.array(fit)
    slope = np.polyfit(np.log(ls[:, 0]), np.log(ls[:, 1]), 1)[0]
    return GradientCheckResult(float(slope), False, rows, pairing, J0)


# ---------------------------------------------------------------------------
# convergence study

class StudyResult:
    """Rows (level, h, Jerr) with the shared fitted rate and a monotonicity
    warning flag."""

    __slots__ = ("rows", "rate", "warning")

    def __init__(self, rows, rate, warning):
        self.rows = rows
        self.rate = rate
        self.warning = warning


def _mesh_width(mesh):
    p = mesh.nodes
    e = np.concatenate([p[mesh.cells[:, i]] - p[mesh.cells[:, j]]
                        for i, j in ((0, 1), (1, 2), (2, 0))])
    return float(np.max(np.hypot(e[:, 0], e[:, 1])))


def _study_level(config, axis, level):
    if axis == "mesh":
        cfg = dataclasses.replace(config, refinements=level, out_dir="")
    elif axis == "grid":
        cfg = dataclasses.replace(config, spline_cells=2 ** level,
                                  out_dir="")
    else:
        raise ValueError("axis must be 'mesh' or 'grid'")
    setup = build_setup(cfg)
    if axis == "mesh":
        h = _mesh_width(setup.mesh)
    else:
        (ax, _), (bx, _) = cfg.spline_box
        h = (bx - ax) / cfg.spline_cells
    result = optimize(cfg, setup=setup)
    return level, h, result.history[-1].Jerr


def convergence_study(config, axis="mesh", levels=(1, 2, 3)):
    """Optimize per level and fit the saturated-error rate.

    Levels are mesh refinement counts (axis 'mesh') or spline grid
    exponents, cells = 2^level (axis 'grid').  Levels run in parallel;
    MORPHOPT_THREADS caps the workers.  Requires at least 3 levels and a
    configured j_ref.
    """
    levels = sorted(levels)
    if len(levels) < 3:
        raise ValueError("need at least 3 levels, got %d" % len(levels))
    if not np.isfinite(config.j_ref):
        raise ValueError("convergence study needs a configured j_ref")
    env = os.environ.get("MORPHOPT_THREADS")
    workers = int(env) if env else min(len(levels), os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda l: _study_level(config, axis, l),
                                 levels))
    else:
        rows = [_study_level(config, axis, l) for l in levels]
    rows.sort()
    hs = np.array([r[1] for r in rows])
    errs = np.array([max(r[2], 1e-300) for r in rows])
    rate = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    warning = bool(np.any(np.diff(errs) >= 0.0))
    result = StudyResult(rows, rate, warning)
    if config.out_dir:
        write_rates(os.path.join(config.out_dir, "rates.csv"), result)
    return result


def write_rates(path, result):
    def go(fh):
        w = csv.writer(fh)
        w.writerow(("level", "h", "Jerr", "fitted_rate"))
        for level, h, err in result.rows:
            w.writerow([str(level)] + ["%.17g" % v
                                       for v in (h, err, result.rate)])
    _atomic_write(path, go)
