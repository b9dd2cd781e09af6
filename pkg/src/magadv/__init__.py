"""Stabilized H(curl)-conforming finite element solvers for the magnetic
advection-diffusion problem on uniform simplicial meshes."""

from .analysis import (EnergyNormParts, ErrorRecord, convergence_orders, cross_section,
                       discrete_energy_norm, energy_norm_matrix, error_norms,
                       oscillation_metric)
from .fe_space import DiscreteField, FeSpace, ReferenceElement, build_space, interpolate
from .forms import (AssembledSystem, StabilizationConfig, apply_dirichlet, assemble,
                    compute_delta, curl_inverse_constant, lifting_apply,
                    stabilization_deltas)
from .mesh import (BoundaryLabel, Mesh, MixedFacetError, build_uniform_mesh,
                   classify_boundary_facets, facet_geometry)
from .problem import (ExactSolution, FriedrichsReport, ProblemSpec, friedrichs_rho,
                      friedrichs_sample_points, lie_advection, make_example,
                      manufactured_problem)
from .quadrature import QuadratureRule, facet_rule, segment_rule, simplex_rule
from .solve import (SoldState, SolveReport, compute_sold_z, sold_directions,
                    solve_linear, solve_sold)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
