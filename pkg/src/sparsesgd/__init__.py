"""Lock-free asynchronous SGD on sparse data.

Four solvers over a shared word-atomic weight vector: serial SGD, lock-free
asynchronous SGD, importance-sampled asynchronous SGD with workload
balancing, and a faithful variance-reduced asynchronous baseline whose
dense correction term exposes the cost gap the sparse solvers avoid.
Plus the metrics and CLI of a small convergence benchmark harness.
"""

from .data import (
    DataError,
    ParseError,
    Partition,
    SparseDataset,
    estimate_conflict_degree,
    load_dataset,
    load_libsvm,
    parse_libsvm,
    partition_contiguous,
    row_norms,
    write_libsvm,
)
from .importance import (
    AliasSampler,
    ImportanceProfile,
    PartitionImportance,
    build_alias_sampler,
    generate_sequence,
    importance_balance,
    optimal_distribution_oracle,
    partition_importance_sums,
    psi,
    rho,
    sampling_distribution,
)
from .metrics import ConvergenceTrace, SpeedupSlice, error_rate, rmse, speedup_slices
from .objectives import (
    LOGISTIC_L1,
    SQUARED_HINGE_L2,
    Objective,
    full_gradient,
    grad,
    lipschitz_bound,
    lipschitz_bounds,
    loss,
)
from .solvers import (
    ALGORITHMS,
    ConfigError,
    SharedModel,
    SolverConfig,
    SolverResult,
    SvrgState,
    run,
    run_asgd,
    run_is_asgd,
    run_sgd,
    run_svrg_asgd,
)

__version__ = "0.1.0"
