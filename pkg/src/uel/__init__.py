"""uel: unfitted elliptic solvers on level-set domains.

Two discretizations of the Poisson problem -lap(u) = f with mixed
Dirichlet/Neumann data on domains described by a level-set function inside
R = [-1, 1]^2:

* a ghost-point finite-difference scheme (5-point interior stencil plus
  interpolation rows enforcing the boundary condition at projected boundary
  points), and
* a penalized nodal finite element method on cut cells with a symmetric
  Nitsche formulation and small-cut snapping.

A solver layer (direct, preconditioned CG, nonsymmetric Krylov, condition
estimation), manufactured-solution error analysis, and a CLI experiment
harness complete the package.
"""

from .analysis import (ConvergenceReport, ManufacturedCase, ReportRow,
                       fitted_order, make_case, observed_order, relative_error)
from .errors import (AnalysisError, AssemblyError, ConfigurationError,
                     GeometryError, SolverError, UelError)
from .fd_scheme import (FdSystem, LagrangeWeights, assemble_fd, fd_gradient,
                        ghost_row, interior_row, lagrange_weights,
                        mitigate_ill_conditioning)
from .fem_scheme import (FemMatrices, FemSystem, assemble_fem, basis_eval,
                         boundary_terms, element_volume_terms, fem_gradient)
from .geometry import (BCSpec, BoundaryProjection, CutCell, Grid,
                       GridClassification, LevelSetDomain, Segment, classify,
                       cut_cell_geometry, extract_cut_cells, make_bc_spec,
                       make_domain, normal_at, project_to_boundary,
                       snap_small_cells)
from .sparse_linalg import (CondEstimate, SolveReport, estimate_cond2,
                            solve_cg, solve_direct, solve_nonsymmetric)

__version__ = "0.1.0"
