"""Riesz-projected gradient directions and the truncated line search."""

import numpy as np
import scipy.sparse.linalg as spla

from . import deform
from .fem import InvertedElementError, SolveError


class DescentDirection:
    """Spline-space descent direction with its metric quantities.

    gradient_norm is the H^1 norm of the projected gradient and
    predicted_decrease the first-order decrease at unit step, both equal to
    dt' K dt by construction.
    """

    __slots__ = ("dt", "gradient_norm", "predicted_decrease")

    def __init__(self, dt, sq):
        self.dt = dt
        self.gradient_norm = float(np.sqrt(sq))
        self.predicted_decrease = float(sq)


def riesz_descent(gram, interp, dj_vec, factor=None, rtol=1e-10):
    """Solve K dt = -I_h' dJ for the H^1 steepest-descent direction.

    factor : optional prefactorized solver for the (frozen) Gram matrix,
    e.g. scipy.sparse.linalg.factorized(gram); the matrix itself is still
    used for the residual check and the metric products.
    """
    rhs = -(interp.T @ np.asarray(dj_vec, dtype=float))
    if factor is None:
        factor = spla.factorized(gram.tocsc())
    dt = factor(rhs)
    nrm = np.linalg.norm(rhs)
    res = np.linalg.norm(gram @ dt - rhs)
    if res > rtol * max(nrm, 1e-300):
        raise SolveError("Riesz projection residual %.3e above %.1e"
                         % (res / max(nrm, 1e-300), rtol))
    return DescentDirection(dt, dt @ rhs)


class LineSearchResult:
    """Outcome of one truncated line search.

    step and J are the selected point; state/deformation are its solved
    state (the current ones when step = 0).  report rows are
    (s, admissible, min_det, J-or-None) for every grid value.
    """

    __slots__ = ("step", "J", "state", "deformation", "report")

    def __init__(self, step, J, state, deformation, report):
        self.step = step
        self.J = J
        self.state = state
        self.deformation = deformation
        self.report = report


def line_search(problem, deformation, interp, direction, current=None,
                steps=None, det_threshold=0.01):
    """Minimize over a fixed step grid, truncated by the determinant guard.

    A step is admissible when the normalized geometry determinant stays at
    or above det_threshold at every quadrature point; s = 0 (keep the
    current iterate) is always admissible, so the selected objective never
    exceeds the current one.  Ties select the smallest step.  Solver
    failures at a candidate mark it inadmissible rather than aborting.
    """
    if steps is None:
        steps = np.linspace(0.0, 1.0, 11)
    if current is None:
        current = problem.evaluate(deformation)
    if current.J is None:
        problem.eval_J(current)
    best_s, best_J = 0.0, current.objective
    best_state, best_def = current, deformation
    report = [(0.0, True, deform.min_det(deformation), best_J)]
    for s in steps:
        s = float(s)
        if s <= 0.0:
            continue
        md = deform.min_det(deformation, interp, direction.dt, s)
        if md < det_threshold:
            report.append((s, False, md, None))
            continue
        cand = deform.apply_update(deformation, interp, direction.dt, s)
        try:
            st = problem.evaluate(cand)
        except (InvertedElementError, SolveError):
            report.append((s, False, md, None))
            continue
        Js = st.objective
        report.append((s, True, md, Js))
        if Js < best_J:
            best_s, best_J = s, Js
            best_state, best_def = st, cand
    return LineSearchResult(best_s, best_J, best_state, best_def, report)


def predicted_descent_line(J0, direction, steps):
    """First-order model J0 - s * predicted_decrease on the step grid."""
    return [(float(s), J0 - float(s) * direction.predicted_decrease)
            for s in steps]
