"""Transfer-operator approximation in low-rank tensor formats.

Builds Ulam and EDMD discretizations of Perron-Frobenius and Koopman
operators for stochastic differential equations, stores them in CP or
tensor-train form, and solves the resulting eigenproblems with truncated
power iterations.
"""

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    DivergenceError,
    EmptyDataError,
    EvaluationError,
    IndexRangeError,
    SolverError,
    TtransferError,
)
from .indexing import ModeShape, linear_to_multiindex, multiindex_to_linear
from .full import FullOperator, FullTensor
from .cp import CPOperator, CPTensor, cp_add, cp_apply, cp_inner, cp_scale
from .tt import (
    TTOperator,
    TTVector,
    cp_op_to_tt,
    cp_to_tt,
    full_to_tt,
    full_to_tt_operator,
    tt_add,
    tt_apply,
    tt_dump,
    tt_inner,
    tt_load,
    tt_norm,
    tt_op_add,
    tt_op_scale,
    tt_round,
    tt_round_operator,
    tt_scale,
)
from .dynamics import (
    Potential,
    SdeSystem,
    SeededRng,
    analytic_invariant_density,
    flow_map,
    flow_map_batch,
    potential_by_name,
    rotated_double_well,
    triple_well_3d,
)
from .ulam import BoxGrid, assemble_dense, assemble_tensor, ind, sample_test_points
from .edmd import (
    TensorBasis,
    assemble_edmd_cp,
    assemble_edmd_dense,
    eval_eigenfunction,
    generate_samples,
    koopman_eigproblem_matrices,
    koopman_matrix,
    pf_eigproblem_matrices,
)
from .eigsolve import (
    EigConfig,
    EigResult,
    als_linear_solve,
    dense_generalized_eig,
    dense_spectrum_oracle,
    find_leading_eigenpairs,
    generalized_inverse_power_iteration,
    inverse_power_iteration,
    power_iteration,
    truncate_operator,
)

__version__ = "0.1.0"
