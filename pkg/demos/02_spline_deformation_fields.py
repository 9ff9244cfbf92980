"""Tensor-product B-spline deformation fields on a hold-all box.

Deformations of the geometry are drawn from a vector-valued spline space
over a box.  The basis functions vanish on and outside the box boundary,
so every spline field fixes the far geometry in place, and their H1
inner product is available as a sparse Gram matrix.
"""

import numpy as np
from scipy.sparse.linalg import eigsh

from morphopt.splines import (SplineGrid, build_spline_space, eval_field,
                              gram_h1)

grid = SplineGrid(((-0.9, -0.9), (0.9, 0.9)), n=8, degree=3)
space = build_spline_space(grid)
print("cubic splines on 8x8 cells: %d scalar basis functions, dim %d"
      % (space.num_scalar, space.dim))

# Interior partition of unity: summing all scalar basis functions gives 1
# at any point further than degree*h from the box boundary.
rng = np.random.default_rng(0)
pts = rng.uniform(-0.2, 0.2, size=(5, 2))
ones = np.tile([1.0, 0.0], space.num_scalar)
vals = eval_field(space, ones, pts)
print("partition of unity at 5 interior points: max defect %.2e"
      % np.abs(vals[:, 0] - 1.0).max())

# The same field evaluated on the box edge is identically zero.
edge = np.column_stack([np.full(7, 0.9), np.linspace(-0.9, 0.9, 7)])
print("max |field| on the box edge: %.2e"
      % np.abs(eval_field(space, ones, edge)).max())

# The H1(D) Gram matrix is sparse and positive definite; it defines the
# inner product used to turn derivatives into descent directions.
K = gram_h1(space)
lo = eigsh(K, k=1, which="SA", return_eigenvectors=False)[0]
print("gram: shape %s, %d nonzeros, smallest eigenvalue %.3e"
      % (K.shape, K.nnz, lo))
