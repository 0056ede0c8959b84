"""chainopt: incremental subgradient optimization driven by Markov chains.

Minimizes a weighted sum of convex functions over a box by letting one
or more finite Markov chains pick which component's subgradient to apply
at each iteration, averaging the parallel updates, and projecting. Ships
exact chain analysis (recurrent classes, periods, Cesaro and power
limits), the weight computation that ties chain statistics to the
objective, seeded reproducible runs, and a benchmark study harness.
"""

from .markov import (
    FIXED_POINT_TOL,
    ROW_SUM_TOL,
    SOLVE_RESIDUAL_TOL,
    ChainDecomposition,
    ChainState,
    InvalidDistributionError,
    MarkovError,
    NegativeEntryError,
    NoConvergenceError,
    RowSumError,
    SingularSolveError,
    TransitionMatrix,
    cesaro_limit,
    cesaro_limit_oracle,
    decompose,
    decomposition_report,
    limiting_distribution,
    make_chain,
    power_limit,
    read_distribution_text,
    read_matrix_text,
    step,
    validate_stochastic,
    walk,
    write_matrix_text,
)
from .problems import (
    Box,
    ConvexSumProblem,
    L1Component,
    NoiseModel,
    load_problem,
    make_l1_problem,
    objective,
    project,
    sample_noise,
    sample_noise_block,
    save_problem,
    weights_from_chains,
)
from .optimizer import (
    ChainRuntime,
    ChainSpec,
    ConstantStepsize,
    DiminishingBlockStepsize,
    InvalidNeighborsError,
    InvalidParametersError,
    RunConfig,
    Trace,
    UnreachableClassWarning,
    load_run_config,
    make_baseline,
    parse_trace_csv,
    run,
    save_run_config,
    start_chains,
    step_once,
    stepsize,
    stepsize_array,
    thin_trace,
    write_trace_csv,
)
from .harness import (
    DecayFit,
    DecayReport,
    DegenerateFitError,
    ExperimentSpec,
    InvalidSpecError,
    UnknownMethodError,
    UnknownTestError,
    build_experiment,
    decay_diagnostic,
    default_schedule,
    first_crossings,
    noise_for_test,
    run_suite,
    study_chain_starts,
    study_design,
    study_matrix,
    study_weights,
)

__version__ = "0.1.0"
