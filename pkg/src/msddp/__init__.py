"""Regularized dual dynamic programming for multistage stochastic MINLPs."""

from .algorithms import (BoundsTrace, PolicyEstimate, SolveResult, Status, StochasticConfig, StopRule,
                         compute_cut_constants, compute_over_value, ddp_deterministic, ddp_stochastic,
                         estimate_policy_cost, nested_decomposition, sample_paths)
from .approx import (ConjugacyCut, EnvelopeMode, OverApprox, OverPoint, UnderApprox, add_cut_bundle,
                     add_over_point, eval_over, eval_under, penalty_eval)
from .bounds import BoundParams, BoundReport, cap_count_bound, evaluate_bounds
from .errors import MsddpError
from .harness import experiment_sweep, run
from .instance_io import InstanceDescription, InstanceMeta, emit_instance, parse_instance
from .instances import (ValueTable, SphericalCapSet, brute_force_value_functions, convex_worstcase,
                        example_convex_nonlipschitz, example_milp_discontinuous, exact_sigma_finite,
                        finite_state_instance, leave_one_out_gaps, lipschitz_chain, lipschitz_witness,
                        spherical_cap_points, with_certified_sigma)
from .model import (Ball, Box, DualBounds, FeasibleSet, FiniteSet, NodeData, NormKind, PenaltySpec,
                    RecombiningTree, ScenarioTree, build_tree, recombine)
from .oracles import (BackwardSolution, ForwardSolution, OracleSet, backward_solve, forward_solve,
                      make_analytic_oracles, make_grid_oracles, root_solve)

__version__ = "0.1.0"

__all__ = [
    'BoundsTrace', 'PolicyEstimate', 'SolveResult', 'Status', 'StochasticConfig', 'StopRule',
    'compute_cut_constants', 'compute_over_value', 'ddp_deterministic', 'ddp_stochastic',
    'estimate_policy_cost', 'nested_decomposition', 'sample_paths',
    'ConjugacyCut', 'EnvelopeMode', 'OverApprox', 'OverPoint', 'UnderApprox', 'add_cut_bundle',
    'add_over_point', 'eval_over', 'eval_under', 'penalty_eval',
    'BoundParams', 'BoundReport', 'cap_count_bound', 'evaluate_bounds',
    'MsddpError', 'experiment_sweep', 'run',
    'InstanceDescription', 'InstanceMeta', 'emit_instance', 'parse_instance',
    'ValueTable', 'SphericalCapSet', 'brute_force_value_functions', 'convex_worstcase',
    'example_convex_nonlipschitz', 'example_milp_discontinuous', 'exact_sigma_finite',
    'finite_state_instance', 'leave_one_out_gaps', 'lipschitz_chain', 'lipschitz_witness',
    'spherical_cap_points', 'with_certified_sigma',
    'Ball', 'Box', 'DualBounds', 'FeasibleSet', 'FiniteSet', 'NodeData', 'NormKind', 'PenaltySpec',
    'RecombiningTree', 'ScenarioTree', 'build_tree', 'recombine',
    'BackwardSolution', 'ForwardSolution', 'OracleSet', 'backward_solve', 'forward_solve',
    'make_analytic_oracles', 'make_grid_oracles', 'root_solve',
]
