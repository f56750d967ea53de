"""Solvers for moderate-dimensional nonlinear BSDEs and their semilinear
parabolic PDEs: the deep automatic-differentiation multistep scheme plus
three comparator schemes, with validation oracles and a benchmark harness."""

from .nets import (Activation, ContractError, ParamGradient, ShallowNet,
                   WeightConstraint, forward, grad_input, grad_params,
                   init_params, project_weights)
from .optim import (LossSmoother, TrainConfig, OptimizerState, make_state,
                    scheduler_update, step, warm_start)
from .problems import BsdeProblem, bounded_example, get_problem, pde_residual, unbounded_example
from .sde import PathBatch, Rng, TimeGrid, flow_from, make_uniform_grid, replay_paths, simulate_paths
from .schemes import (SolveResult, TrainedStack, evaluate_slice, fit_terminal,
                      martingale_residuals, solve, solve_dadm, solve_dbdp1,
                      solve_dbdp2, solve_deep_bsde)
from .validation import (GradCheckReport, ZRegularityEstimate,
                         conditional_expectation_oracle, derivative_bound_check,
                         finite_diff_check, z_regularity_estimate)

__version__ = "0.1.0"
