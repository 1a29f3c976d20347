"""Selfdual variational calculus for maximal monotone vector fields.

Potentials on phase space turn inclusions p in T(x) into minimizations of
nonnegative gap functionals whose zero minimum is a certificate of
solution. The package builds such potentials for structured and sampled
operators, manipulates them with a calculus of transforms and
combinations, and solves static, evolution, model PDE and inverse problems
with certified zero-infimum minimizations.
"""

from . import tolerances
from .convex import (AbsValue, ConvexFunction, GridFn, GridFunction,
                     IndicatorBox, LinearTilt, PowerNorm, Quadratic, Rotated,
                     Scaled, Separable1D, Shifted, Stretched, SumFn,
                     SupportBox, conjugate, dilate, inf_convolve,
                     moreau_envelope, prox, quadratic_identity)
from .lagrangian import (Certificate, FitzpatrickLagrangian, GradConvex,
                         Grid2dLagrangian, Lagrangian, LinearPositive,
                         MonotoneGraph, MonotoneOperator,
                         ProxAverageLagrangian, SampledOperator,
                         SkewPlusGrad, SumFormLagrangian, fitzpatrick,
                         lag_conjugate_value, lag_value, op_scale, op_sum,
                         potential_for, proximal_average, sd_field,
                         selfdual_residual, transpose)
from .calculus import (BlockLagrangian, CombineSpec, CrossCoupledLagrangian,
                       DirectSumLagrangian, TransformSpec,
                       TransformedLagrangian, combine, transform)
from .solve import (Block, BlockSystem, cohamiltonian, resolvent,
                    solve_regularized, solve_static, superposed_solve)
from .evolution import (BoundaryOp, Path, TimeDependentOperator, TimeGrid,
                        connect_graphs, implicit_euler_path, path_functional,
                        semigroup_flow, solve_evolution)
from .pde import (EllipticProblem, Mesh1D, ParabolicProblem, flux_potential,
                  elliptic_block_system, newton_flux_solve, solve_elliptic,
                  solve_elliptic_block, solve_parabolic)
from .inverse import InverseProblem, ParamClass, cubic_family, fit_operator
from . import catalog, errors, serialize

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
