"""Shape optimization of 2D domains.

The domain is moved by a deformation field held in a Lagrangian finite
element geometry space; descent directions live in a tensor-product B-spline
space on a hold-all box and are pulled into the geometry space by a frozen
interpolation matrix.  State equations are solved isoparametrically on the
deformed configuration, shape derivatives are assembled as volume integrals,
and a Riesz-projected gradient with a truncated line search drives the
update.
"""

from .mesh import (TriMesh, Circle, AffineCellMap, MeshError, MshParseError,
                   generate_annulus, generate_rectangle, uniform_refine,
                   affine_map, parse_msh, write_msh, write_vtk)
from .splines import SplineGrid, SplineSpace, build_spline_space, gram_h1
from .fem import (FeSpace, QuadratureRule, LinearSystem, SolveError,
                  reference_basis, quadrature_rule, physical_geometry,
                  apply_dirichlet, solve)
from .deform import (DeformationState, init_deformation,
                     build_interpolation_matrix, apply_update, min_det)
from .problems import (make_problem, StateSolution, ModelProblem,
                       BernoulliProblem, StokesProblem, ElasticityProblem)
from .descent import (DescentDirection, riesz_descent, line_search,
                      predicted_descent_line)
from .driver import (RunConfig, default_config, optimize, gradient_check,
                     convergence_study)

__version__ = "0.1.0"
