"""Full-duplex NOMA overlay spectrum sharing with SWIPT.

Monte Carlo outage estimation, closed-form outage approximations and
successive convex approximation (SCA) power allocation.
"""

from .analytic import (
    ApproximationClampWarning,
    outage_analytic,
    outage_primary_analytic,
    outage_secondary_analytic,
    throughput_analytic,
)
from .estimators import ExhaustiveSearchAllocator, ScaPowerAllocator, realizations_to_array, sample_design
from .optimizer import (
    Infeasible,
    NoFeasibleGridPoint,
    ScaPoint,
    ScaTrace,
    SolverFailure,
    achievable_sum_rate,
    exhaustive_search,
    initial_feasible_point,
    qos_feasible,
    sca_optimize,
    solve_convex_subproblem,
)
from .params import (
    ChannelRealization,
    ConfigError,
    DuplexMode,
    PowerAllocation,
    SystemParams,
    load_defaults,
    load_params,
)
from .simulator import OutageEstimate, estimate_outage, estimate_throughput, outage_failures

__version__ = "0.1.0"

__all__ = [
    "ApproximationClampWarning",
    "ChannelRealization",
    "ConfigError",
    "DuplexMode",
    "ExhaustiveSearchAllocator",
    "Infeasible",
    "NoFeasibleGridPoint",
    "OutageEstimate",
    "PowerAllocation",
    "ScaPoint",
    "ScaPowerAllocator",
    "ScaTrace",
    "SolverFailure",
    "SystemParams",
    "achievable_sum_rate",
    "estimate_outage",
    "estimate_throughput",
    "exhaustive_search",
    "initial_feasible_point",
    "load_defaults",
    "load_params",
    "outage_analytic",
    "outage_failures",
    "outage_primary_analytic",
    "outage_secondary_analytic",
    "qos_feasible",
    "realizations_to_array",
    "sample_design",
    "sca_optimize",
    "solve_convex_subproblem",
    "throughput_analytic",
]
