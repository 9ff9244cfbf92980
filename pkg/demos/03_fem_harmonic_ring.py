"""Isoparametric Lagrangian elements on a ring with a known solution.

The harmonic function u = log(0.4/|x|) is imposed on both boundaries of
a box-with-hole domain and solved for in the interior.  Refining the
mesh while snapping the hole onto the true circle shows the expected L2
convergence orders: 2 for linear elements and 3 for quadratic
isoparametric ones.
"""

import numpy as np

from morphopt.deform import init_deformation
from morphopt.fem import (FeSpace, LinearSystem, apply_dirichlet,
                          assemble_laplace, cell_batch, field_values,
                          quadrature_rule, solve)
from morphopt.mesh import Circle, generate_annulus, uniform_refine

circle = Circle((0.0, 0.0), 0.4)


def exact(points):
    return np.log(circle.radius / np.hypot(points[..., 0], points[..., 1]))


def l2_error(degree, refinements):
    mesh = generate_annulus(circle.center, circle.radius,
                            ((-1.0, -1.0), (1.0, 1.0)), 16, 4)
    for _ in range(refinements):
        mesh = uniform_refine(mesh, {"inner": circle})
    space = FeSpace(mesh, degree, components=1)
    geometry = init_deformation(FeSpace(mesh, degree, components=2),
                                {"inner": circle})
    system = LinearSystem(assemble_laplace(space, geometry),
                          np.zeros(space.ndof_scalar))
    for tag in ("inner", "outer"):
        apply_dirichlet(system, space, geometry, tag, exact)
    u = solve(system)
    batch = cell_batch(geometry, quadrature_rule(6))
    diff = field_values(space, u, batch) - exact(batch.pts)
    return float(np.sqrt(np.einsum("q,cq,cq->", batch.rule.weights,
                                   batch.det, diff ** 2)))

for degree in (1, 2):
    errors = [l2_error(degree, k) for k in (0, 1, 2)]
    rates = np.log2(np.array(errors[:-1]) / errors[1:])
    print("P%d elements: L2 errors %s" % (degree,
          " ".join("%.3e" % e for e in errors)))
    print("             observed orders %s"
          % " ".join("%.2f" % r for r in rates))
