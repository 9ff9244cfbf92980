"""Moving the mesh through spline coefficient updates.

The geometry of a run is a coefficient vector of a vector-valued finite
element space.  A sparse interpolation matrix, assembled once at the
initial configuration, maps spline control coefficients to updates of
those geometry coefficients.  The normalized minimum cell Jacobian
tells when a candidate update would fold the mesh.
"""

import numpy as np

from morphopt.deform import (apply_update, build_interpolation_matrix,
                             init_deformation, min_det)
from morphopt.fem import FeSpace
from morphopt.mesh import Circle, generate_annulus, uniform_refine
from morphopt.splines import SplineGrid, build_spline_space

circle = Circle((0.0, 0.0), 0.5)
mesh = uniform_refine(generate_annulus(circle.center, circle.radius,
                                       ((-1.0, -1.0), (1.0, 1.0)), 16, 4),
                      {"inner": circle})
geometry = init_deformation(FeSpace(mesh, 2, components=2),
                            {"inner": circle})
space = build_spline_space(SplineGrid(((-0.9, -0.9), (0.9, 0.9)), 8, 2))
interp = build_interpolation_matrix(space, geometry)
print("interpolation matrix: %s, %d nonzeros (frozen at the initial "
      "coordinates)" % (interp.shape, interp.nnz))

# Setting every x coefficient to 1 yields a truncated rightward
# translation: exactly unit speed deep inside the box (partition of
# unity), decaying to zero at the box boundary.
dt = np.zeros(space.dim)
dt[0::2] = 1.0

# Larger multiples of the same field squeeze the cells between the hole
# and the right box edge until the minimum Jacobian goes negative.
print("   s   min_det(candidate)")
for s in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
    print("%5.2f  %+.4f" % (s, min_det(geometry, interp, dt, s)))

# Accepting a moderate step really moves the hole: the inner boundary
# shifts right while the outer boundary stays pinned.
moved = apply_update(geometry, interp, dt, 0.2)
inner = geometry.space.boundary_scalar_dofs("inner")
outer = geometry.space.boundary_scalar_dofs("outer")
shift = (moved.f - geometry.f).reshape(-1, 2)
print("inner shift %.4f .. %.4f, max outer shift %.1e"
      % (shift[inner, 0].min(), shift[inner, 0].max(),
         np.abs(shift[outer]).max()))
