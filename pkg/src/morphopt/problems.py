"""State equations, objectives and their shape derivatives.

Four problem kinds share one interface: build spaces on a mesh, solve the
state on a deformed configuration, evaluate the objective, and assemble the
derivative of the objective with respect to the geometry coefficients.  The
derivative of functional J under a perturbation field V is a volume integral
of the form

    dJ(V) = integral( S1 : DV + S0 . V )

over the deformed configuration, and the assembled vector pairs it with
every geometry basis field.  All volume integrals of one problem use the
same quadrature rule as its state assembly; with that convention the
assembled derivative is exact for the discrete objective, because the
Dirichlet dofs of every problem sit where the spline fields vanish (or carry
constant data), so perturbed solutions stay in the discrete test space.
"""

import numpy as np

from . import fem
from .fem import (FeSpace, LinearSystem, apply_dirichlet, assemble_laplace,
                  assemble_mass, assemble_elasticity, assemble_divergence,
                  assemble_load, assemble_boundary_load, assemble_stokes,
                  cell_batch, field_values, basis_values, physical_gradients,
                  quadrature_rule, solve)
from .mesh import Circle


class StateSolution:
    """Solution bundle: fields, objective value and penalty terms.

    Always carries the deformation it was solved on.  For penalized problems
    Jp = J + mu0/2 A^2 + sum_i mui/2 Bi^2 with A the area drift and Bi the
    first-moment drifts relative to the initial configuration.
    """

    def __init__(self, deformation, u, p=None, lam=0.0):
        self.deformation = deformation
        self.u = u
        self.p = p
        self.lam = lam
        self.J = None
        self.Jp = None
        self.A = 0.0
        self.B1 = 0.0
        self.B2 = 0.0

    @property
    def objective(self):
        return self.J if self.Jp is None else self.Jp


def _moments(batch):
    w = batch.rule.weights
    area = float(np.einsum("q,cq->", w, batch.det))
    m1 = np.einsum("q,cq,cqr->r", w, batch.det, batch.pts)
    return area, m1


class _Problem:
    """Shared machinery; subclasses fill in spaces, solves and derivatives."""

    kind = None
    penalized = False

    def __init__(self, mesh, fe_degree, isoparametric):
        self.mesh = mesh
        self.fe_degree = int(fe_degree)
        self.isoparametric = bool(isoparametric)
        geo_degree = self.fe_degree if self.isoparametric else 1
        self.geo_space = FeSpace(mesh, geo_degree, 2)
        self.rule = quadrature_rule(2 * self.fe_degree + 2)
        self._ref = None

    def initial_geometry(self):
        """Boundary tag -> curve map used to curve the initial deformation."""
        return {}

    def evaluate(self, deformation):
        state = self.solve_state(deformation)
        self.eval_J(state)
        return state

    def eval_J(self, state):
        raise NotImplementedError

    def solve_state(self, deformation):
        raise NotImplementedError

    def solve_adjoint(self, state):
        raise NotImplementedError(
            "%s assembles its shape derivative in eliminated form; no "
            "separate adjoint solve is needed" % self.kind)

    def assemble_dJ(self, state):
        raise NotImplementedError

    # penalty helpers -------------------------------------------------------

    def _ensure_reference(self, deformation):
        """Penalty reference: moments of the initial (curved) configuration."""
        if self._ref is None:
            base = deformation.displaced(deformation.f0)
            batch = cell_batch(base, self.rule)
            self._ref = _moments(batch)
        return self._ref

    def _penalties(self, state, batch):
        area0, m0 = self._ensure_reference(state.deformation)
        area, m1 = _moments(batch)
        state.A = area - area0
        state.B1 = float(m1[0] - m0[0])
        state.B2 = float(m1[1] - m0[1])
        mu0, mu1, mu2 = self._mus()
        state.Jp = (state.J + 0.5 * mu0 * state.A ** 2
                    + 0.5 * mu1 * state.B1 ** 2 + 0.5 * mu2 * state.B2 ** 2)

    def _penalty_tensors(self, state, batch):
        """Contribution of the penalty terms to (S1, S0)."""
        if state.J is None:
            self.eval_J(state)
        mu0, mu1, mu2 = self._mus()
        C, nq = batch.det.shape
        x = batch.pts
        coef = (mu0 * state.A + mu1 * state.B1 * x[..., 0]
                + mu2 * state.B2 * x[..., 1])
        S1 = coef[..., None, None] * np.eye(2)
        S0 = np.empty((C, nq, 2))
        S0[..., 0] = mu1 * state.B1
        S0[..., 1] = mu2 * state.B2
        return S1, S0

    def _assemble_dj_tensors(self, deformation, batch, S1, S0=None):
        geo = self.geo_space
        pg = physical_gradients(geo, batch)
        w = batch.rule.weights
        local = np.einsum("q,cq,cqrs,cqis->cir", w, batch.det, S1, pg,
                          optimize=True)
        if S0 is not None:
            vals = basis_values(geo, batch.rule)
            local += np.einsum("q,cq,cqr,qi->cir", w, batch.det, S0, vals,
                               optimize=True)
        out = np.zeros(geo.num_dofs)
        idx = (2 * geo.cell_dofs[:, :, None]
               + np.arange(2)[None, None, :]).ravel()
        np.add.at(out, idx, local.ravel())
        return out


class ModelProblem(_Problem):
    """Reaction-diffusion state with unit load and tracking objective.

    State: grad u . grad v + u v = v for all v (no essential conditions), so
    u is identically 1 on any configuration and J = |Omega| / 2.  The
    adjoint solves the same operator against u, giving p identically 1.
    Useful as an end-to-end calibration problem with a known objective.
    """

    kind = "model"

    def __init__(self, mesh, fe_degree=1, isoparametric=True,
                 guess_center=(0.04, 0.05), guess_radius=0.5,
                 inner_tag="inner", **params):
        super().__init__(mesh, fe_degree, isoparametric)
        self.space = FeSpace(mesh, self.fe_degree, 1)
        self.guess_center = np.asarray(guess_center, dtype=float)
        self.guess_radius = float(guess_radius)
        self.inner_tag = inner_tag
        if params:
            raise ValueError("unknown model parameters %s" % sorted(params))

    def initial_geometry(self):
        if self.inner_tag in self.mesh.tags:
            return {self.inner_tag: Circle(self.guess_center,
                                           self.guess_radius)}
        return {}

    def solve_state(self, deformation):
        batch = cell_batch(deformation, self.rule)
        A = (assemble_laplace(self.space, deformation, batch=batch)
             + assemble_mass(self.space, deformation, batch=batch))
        b = assemble_load(self.space, deformation, 1.0, batch=batch)
        u = solve(LinearSystem(A, b))
        state = StateSolution(deformation, u)
        state.p = self.solve_adjoint(state)
        return state

    def solve_adjoint(self, state):
        deformation = state.deformation
        batch = cell_batch(deformation, self.rule)
        A = (assemble_laplace(self.space, deformation, batch=batch)
             + assemble_mass(self.space, deformation, batch=batch))
        M = assemble_mass(self.space, deformation, batch=batch)
        return solve(LinearSystem(A, M @ state.u))

    def eval_J(self, state):
        batch = cell_batch(state.deformation, self.rule)
        uv = field_values(self.space, state.u, batch)
        state.J = 0.5 * float(np.einsum("q,cq,cq->", batch.rule.weights,
                                        batch.det, uv ** 2))
        return state.J

    def assemble_dJ(self, state):
        batch = cell_batch(state.deformation, self.rule)
        uv, ug = field_values(self.space, state.u, batch, gradients=True)
        pv, pg = field_values(self.space, state.p, batch, gradients=True)
        # volume form of the derivative; the u^2 coefficient carries the
        # factor 1/2 that the tracking objective carries
        sym = (np.einsum("cqr,cqs->cqrs", ug, pg)
               + np.einsum("cqr,cqs->cqrs", pg, ug))
        coef = (pv + 0.5 * uv ** 2 - np.einsum("cqd,cqd->cq", ug, pg)
                - uv * pv)
        S1 = sym + coef[..., None, None] * np.eye(2)
        return self._assemble_dj_tensors(state.deformation, batch, S1)


class BernoulliProblem(_Problem):
    """Exterior free-boundary benchmark on a square with a hole.

    The state is harmonic with constant data on the moving hole and the
    logarithmic data ln(R) - ln|x| on the fixed outer square, so the hole
    relaxing to the circle of radius R centered at the origin makes the flux
    constraint |grad u| = g hold with g = -d u/dn there.  The objective
    integral(|grad u|^2 + g^2) is minimized exactly at that circle.
    """

    kind = "bernoulli"
    J_ref = 28.306941614057237

    def __init__(self, mesh, fe_degree=2, isoparametric=True, g=2.5,
                 target_radius=0.4, inner_value=0.0, inner_tag="inner",
                 outer_tag="outer", guess_center=(0.04, 0.05),
                 guess_radius=0.5, **params):
        super().__init__(mesh, fe_degree, isoparametric)
        self.space = FeSpace(mesh, self.fe_degree, 1)
        self.g = float(g)
        self.target_radius = float(target_radius)
        self.inner_value = float(inner_value)
        self.inner_tag = inner_tag
        self.outer_tag = outer_tag
        self.guess_center = np.asarray(guess_center, dtype=float)
        self.guess_radius = float(guess_radius)
        if params:
            raise ValueError("unknown bernoulli parameters %s"
                             % sorted(params))

    def initial_geometry(self):
        return {self.inner_tag: Circle(self.guess_center, self.guess_radius)}

    def outer_data(self, pts):
        r = np.hypot(pts[..., 0], pts[..., 1])
        return np.log(self.target_radius) - np.log(r)

    def solve_state(self, deformation):
        batch = cell_batch(deformation, self.rule)
        A = assemble_laplace(self.space, deformation, batch=batch)
        sys = LinearSystem(A, np.zeros(self.space.num_dofs))
        apply_dirichlet(sys, self.space, deformation, self.inner_tag,
                        self.inner_value)
        apply_dirichlet(sys, self.space, deformation, self.outer_tag,
                        self.outer_data)
        u = solve(sys)
        return StateSolution(deformation, u)

    def solve_adjoint(self, state):
        # the state is discretely harmonic and perturbations stay in the
        # homogeneous test space, so the adjoint vanishes identically
        return np.zeros(self.space.num_dofs)

    def eval_J(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.space, state.u, batch, gradients=True)
        dens = np.einsum("cqd,cqd->cq", ug, ug) + self.g ** 2
        state.J = float(np.einsum("q,cq,cq->", batch.rule.weights, batch.det,
                                  dens))
        return state.J

    def assemble_dJ(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.space, state.u, batch, gradients=True)
        dens = np.einsum("cqd,cqd->cq", ug, ug) + self.g ** 2
        S1 = (dens[..., None, None] * np.eye(2)
              - 2.0 * np.einsum("cqr,cqs->cqrs", ug, ug))
        return self._assemble_dj_tensors(state.deformation, batch, S1)


class StokesProblem(_Problem):
    """Dissipation of creeping channel flow around a moving obstacle.

    Taylor-Hood velocity/pressure pair with a parabolic inflow, no-slip
    walls and obstacle, natural outflow, and the pressure mean pinned by an
    appended constraint row.  The objective is the penalized dissipation;
    area and first-moment drifts of the configuration are penalized
    quadratically.
    """

    kind = "stokes"
    penalized = True

    def __init__(self, mesh, fe_degree=2, isoparametric=True,
                 obstacle_tag="obstacle", inflow_tag="inflow",
                 outflow_tag="outflow", wall_tag="wall",
                 obstacle_center=(0.0, 0.0), obstacle_radius=0.5,
                 channel_box=((-6.0, -2.5), (6.0, 2.5)),
                 mu0=None, mu1=None, mu2=None, **params):
        if fe_degree != 2:
            raise ValueError("the velocity space is quadratic; fe_degree=2")
        super().__init__(mesh, fe_degree, isoparametric)
        self.vel_space = FeSpace(mesh, 2, 2)
        self.pre_space = FeSpace(mesh, 1, 1)
        self.obstacle_tag = obstacle_tag
        self.inflow_tag = inflow_tag
        self.outflow_tag = outflow_tag
        self.wall_tag = wall_tag
        self.obstacle_center = np.asarray(obstacle_center, dtype=float)
        self.obstacle_radius = float(obstacle_radius)
        self.channel_box = channel_box
        self._mu_in = (mu0, mu1, mu2)
        if params:
            raise ValueError("unknown stokes parameters %s" % sorted(params))

    def initial_geometry(self):
        return {self.obstacle_tag: Circle(self.obstacle_center,
                                          self.obstacle_radius)}

    def _mus(self):
        (ax, ay), (bx, by) = self.channel_box
        hole = (bx - ax) * (by - ay) - self._ref[0]
        default = 1e4 / abs(hole)
        return tuple(default if m is None else float(m) for m in self._mu_in)

    def inflow_profile(self, pts):
        (_, ay), (_, by) = self.channel_box
        h = by - ay
        y = pts[..., 1]
        out = np.zeros(pts.shape)
        out[..., 0] = 4.0 * (y - ay) * (by - y) / h ** 2
        return out

    def solve_state(self, deformation):
        sys = assemble_stokes(self.vel_space, self.pre_space, deformation,
                              rule=self.rule)
        apply_dirichlet(sys, self.vel_space, deformation, self.inflow_tag,
                        self.inflow_profile)
        apply_dirichlet(sys, self.vel_space, deformation, self.wall_tag,
                        (0.0, 0.0))
        apply_dirichlet(sys, self.vel_space, deformation, self.obstacle_tag,
                        (0.0, 0.0))
        x = solve(sys)
        nu = self.vel_space.num_dofs
        npre = self.pre_space.ndof_scalar
        u = x[:nu]
        pneg = x[nu:nu + npre]
        lam = float(x[-1])
        return StateSolution(deformation, u, p=-pneg, lam=lam)

    def divergence_residual(self, state):
        """Norm of the discrete divergence equations at the solution."""
        d = state.deformation
        B = assemble_divergence(self.vel_space, self.pre_space, d,
                                rule=self.rule)
        m = assemble_load(self.pre_space, d, 1.0, rule=self.rule)
        return float(np.linalg.norm(B @ state.u + m * state.lam))

    def eval_J(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.vel_space, state.u, batch, gradients=True)
        dens = np.einsum("cqrd,cqrd->cq", ug, ug)
        state.J = float(np.einsum("q,cq,cq->", batch.rule.weights, batch.det,
                                  dens))
        self._penalties(state, batch)
        return state.Jp

    def assemble_dJ(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.vel_space, state.u, batch, gradients=True)
        pv = field_values(self.pre_space, state.p, batch)
        gradsq = np.einsum("cqrd,cqrd->cq", ug, ug)
        divu = np.einsum("cqrr->cq", ug)
        S1 = (gradsq[..., None, None] * np.eye(2)
              - 2.0 * np.einsum("cqrd,cqrs->cqds", ug, ug))
        # pressure coupling: +2 p tr(Du DV) - 2 p div u div V, plus the
        # zero-mean multiplier's reaction -2 lam p div V, which belongs to
        # the exact derivative of the constrained discrete system
        S1 += 2.0 * pv[..., None, None] * np.swapaxes(ug, 2, 3)
        S1 -= (2.0 * pv * divu)[..., None, None] * np.eye(2)
        S1 -= (2.0 * state.lam * pv)[..., None, None] * np.eye(2)
        P1, P0 = self._penalty_tensors(state, batch)
        return self._assemble_dj_tensors(state.deformation, batch, S1 + P1,
                                         P0)


class ElasticityProblem(_Problem):
    """Compliance of a cantilever under an edge traction, plane stress.

    Clamped on two segments of the left edge, loaded on a mid segment of the
    right edge; the objective is the elastic energy (equal to the boundary
    work at the solution) plus area and first-moment drift penalties.
    """

    kind = "elasticity"
    penalized = True

    def __init__(self, mesh, fe_degree=1, isoparametric=True,
                 young=15.0, poisson=0.35, plane_stress=True,
                 load=(0.0, -1.0), clamp_tag="clamp", load_tag="load",
                 mu0=None, mu1=None, mu2=None, **params):
        super().__init__(mesh, fe_degree, isoparametric)
        self.space = FeSpace(mesh, self.fe_degree, 2)
        E, nu = float(young), float(poisson)
        self.shear = E / (2.0 * (1.0 + nu))
        if plane_stress:
            self.lame = E * nu / (1.0 - nu * nu)
        else:
            self.lame = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        self.load = np.asarray(load, dtype=float)
        self.clamp_tag = clamp_tag
        self.load_tag = load_tag
        self._mu_in = (mu0, mu1, mu2)
        if params:
            raise ValueError("unknown elasticity parameters %s"
                             % sorted(params))

    def _mus(self):
        default = 1e4 / abs(self._ref[0])
        return tuple(default if m is None else float(m) for m in self._mu_in)

    def solve_state(self, deformation):
        batch = cell_batch(deformation, self.rule)
        A = assemble_elasticity(self.space, deformation, self.lame,
                                self.shear, batch=batch)
        b = assemble_boundary_load(self.space, deformation, self.load_tag,
                                   self.load)
        sys = LinearSystem(A, b)
        apply_dirichlet(sys, self.space, deformation, self.clamp_tag,
                        (0.0, 0.0))
        u = solve(sys)
        return StateSolution(deformation, u)

    def boundary_work(self, state):
        """Load functional at the solution; equals J at the discrete state."""
        b = assemble_boundary_load(self.space, state.deformation,
                                   self.load_tag, self.load)
        return float(b @ state.u)

    def _stress(self, ug):
        sym = 0.5 * (ug + np.swapaxes(ug, 2, 3))
        tr = np.einsum("cqrr->cq", sym)
        sigma = 2.0 * self.shear * sym
        sigma += (self.lame * tr)[..., None, None] * np.eye(2)
        return sym, sigma

    def eval_J(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.space, state.u, batch, gradients=True)
        sym, sigma = self._stress(ug)
        dens = np.einsum("cqrd,cqrd->cq", sigma, sym)
        state.J = float(np.einsum("q,cq,cq->", batch.rule.weights, batch.det,
                                  dens))
        self._penalties(state, batch)
        return state.Jp

    def assemble_dJ(self, state):
        batch = cell_batch(state.deformation, self.rule)
        _, ug = field_values(self.space, state.u, batch, gradients=True)
        sym, sigma = self._stress(ug)
        dens = np.einsum("cqrd,cqrd->cq", sigma, sym)
        # J equals the fixed boundary work, so dJ = -a'(u, u): the energy
        # density enters with a minus sign, not the plus of the unconstrained
        # transport, and the stress term carries the factor 2
        S1 = (2.0 * np.einsum("cqrd,cqrs->cqds", ug, sigma)
              - dens[..., None, None] * np.eye(2))
        P1, P0 = self._penalty_tensors(state, batch)
        return self._assemble_dj_tensors(state.deformation, batch, S1 + P1,
                                         P0)


_KINDS = {"model": ModelProblem, "bernoulli": BernoulliProblem,
          "stokes": StokesProblem, "elasticity": ElasticityProblem}


def make_problem(kind, mesh, **params):
    """Instantiate a problem by kind name."""
    if kind not in _KINDS:
        raise ValueError("unknown problem kind %r (choose from %s)"
                         % (kind, sorted(_KINDS)))
    return _KINDS[kind](mesh, **params)
