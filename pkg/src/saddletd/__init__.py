"""Multi-agent temporal-difference policy evaluation via saddle-point optimization.

Library layout: `chain` (ergodic environments and samplers), `features`
(linear dictionaries and bounds), `objective` (the projected-Bellman-error
saddle model), `network` (graphs and mixing matrices), `solver` (the
restart-schedule distributed method and fixed-step baselines, compiled kernel
with pure-numpy fallback), `analysis` (gaps, bound shapes, inequality
verifiers), `cli` (experiment runner).
"""

from .chain import (
    MixingEstimate,
    NonErgodicChainError,
    PolicyChain,
    SampleTransition,
    Trajectory,
    estimate_mixing,
    random_ergodic_chain,
    sample_trajectory,
    stationary_dataset,
    stationary_distribution,
    tv_distance,
)
from .features import (
    FeatureBounds,
    FeatureMap,
    compute_bounds,
    random_features,
    tabular_features,
)
from .network import (
    Graph,
    MixingMatrix,
    complete,
    erdos_renyi,
    laplacian_mixing,
    ring,
    spectral_gap,
)
from .objective import (
    ModelAssumptionError,
    PrimalDualPoint,
    ProblemConstants,
    SaddleModel,
    constants,
    empirical_model,
    local_mspbe,
    mean_local_mspbe,
    mspbe,
    population_model,
    psi,
    psi_gradients,
    saddle_solution,
    stochastic_gradient,
)
from .solver import (
    KERNEL_BACKEND,
    Checkpoint,
    DhpdConfig,
    RoundResult,
    RunTrace,
    dhpd_run,
    project_ball,
    running_average,
    spd_run_centralized,
    spd_run_distributed,
)
from .analysis import (
    BoundShape,
    CheckRecord,
    GapReport,
    gap_report,
    make_gap_oracle,
    mixing_time_bound,
    optimality_gap,
    surrogate_gap,
    theorem_bound_shape,
)

__version__ = "0.1.0"
