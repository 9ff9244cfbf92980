"""Discrete deformations of the computational domain.

A deformation is a coefficient vector f of a vector Lagrangian geometry
space; the entries are deformed dof positions.  The initial deformation f0
places dofs at their mesh positions except on tagged curved boundaries,
where they are projected onto the analytic curve; higher-degree geometry
spaces curve the boundary cells this way.  Updates arrive in a B-spline
space and are transported by a frozen interpolation matrix evaluated once at
the initial dof positions.
"""

import numpy as np
import scipy.sparse as sp

from . import splines
from .fem import cell_batch, quadrature_rule
from .mesh import MeshError


class DeformationState:
    """Deformed geometry coefficients with their initial values.

    Treated as immutable: updates produce new instances sharing f0.
    """

    __slots__ = ("space", "f", "f0")

    def __init__(self, space, f, f0=None):
        self.space = space
        self.f = np.asarray(f, dtype=float)
        self.f0 = self.f.copy() if f0 is None else f0
        if self.f.shape != (space.num_dofs,):
            raise ValueError("coefficient vector has wrong length")

    def displaced(self, f):
        return DeformationState(self.space, f, self.f0)


def init_deformation(space, geometry=None):
    """Identity deformation with curved-boundary dofs projected.

    geometry maps boundary tags to curves (Circle or callable); dofs on
    those tags are projected onto the curve.  Mesh vertices produced by the
    generators already lie on the curve, so for degree-2 spaces only edge
    midpoint dofs actually move.
    """
    if space.components != 2:
        raise MeshError("geometry space must have 2 components")
    f0 = space.dof_coords.copy()
    if geometry:
        for tag, curve in geometry.items():
            dofs = space.boundary_scalar_dofs(tag)
            proj = curve.project if hasattr(curve, "project") else curve
            f0[dofs] = proj(f0[dofs])
    return DeformationState(space, f0.ravel())


def build_interpolation_matrix(spline_space, deformation):
    """Frozen spline-to-geometry interpolation matrix.

    Entry (2i + c, 2a + c) is the scalar spline basis a evaluated at the
    initial position of geometry dof i; components never mix.  Rows of dofs
    outside the spline box are identically zero, so those dofs never move.
    The matrix is evaluated at the initial configuration and must not be
    rebuilt as the domain deforms.
    """
    space = deformation.space
    pts = deformation.f0.reshape(-1, 2)
    rows, cols, val, _, _ = splines._tensor_triplets(spline_space, pts)
    n = space.ndof_scalar
    S = sp.coo_matrix((val, (rows, cols)),
                      shape=(n, spline_space.num_scalar)).tocsr()
    # clipped evaluations of dofs on or outside the box store exact zeros
    S.eliminate_zeros()
    return sp.kron(S, sp.identity(2), format="csr")


def apply_update(state, interp, dt, s=1.0):
    """New deformation f + s * I_h dt; pure algebra, no admissibility check."""
    w = interp @ np.asarray(dt, dtype=float)
    return state.displaced(state.f + float(s) * w)


def min_det(state, interp=None, dt=None, s=0.0, exactness=None):
    """Smallest normalized geometry determinant over all quadrature points.

    The determinant of the candidate map is divided by the determinant of
    the underlying affine cell map, so the identity deformation reports 1
    and any reflection reports a negative value.  Uses the assembly
    quadrature rule of the geometry degree.
    """
    space = state.space
    if dt is not None and s != 0.0:
        cand = state.displaced(state.f + float(s) * (interp @ dt))
    else:
        cand = state
    rule = quadrature_rule(exactness or 2 * space.degree + 2)
    batch = cell_batch(cand, rule, check=False)
    base = _affine_dets(space.mesh)
    return float(np.min(batch.det / base[:, None]))


def _affine_dets(mesh):
    p = mesh.nodes
    e1 = p[mesh.cells[:, 1]] - p[mesh.cells[:, 0]]
    e2 = p[mesh.cells[:, 2]] - p[mesh.cells[:, 0]]
    return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
