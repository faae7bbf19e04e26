"""Byzantine-resilient binary decision fusion.

Message passing on the factor graph of a Markov state sequence and node
honesty variables, an exact bitwise-MAP oracle, reference baselines and a
reproducible Monte Carlo harness.
"""

from .baselines import hard_isolation_fuse, majority_fuse, soft_isolation_fuse
from .exact import WindowTooLargeError, exact_bitwise_map, exact_joint_enumeration
from .experiment import (
    ExperimentConfig,
    compare_schemes,
    estimate_error_probability,
    run_trial,
    sweep,
)
from .model import (
    BYZANTINE,
    HONEST,
    ModelParams,
    read_report_matrix,
    report_likelihood,
    sample_node_statuses,
    sample_reports,
    sample_states,
    write_report_matrix,
)
from .mp import FusionResult, NumericalError, fuse_mp

__all__ = [
    "BYZANTINE",
    "HONEST",
    "ExperimentConfig",
    "FusionResult",
    "ModelParams",
    "NumericalError",
    "WindowTooLargeError",
    "compare_schemes",
    "estimate_error_probability",
    "exact_bitwise_map",
    "exact_joint_enumeration",
    "fuse_mp",
    "hard_isolation_fuse",
    "majority_fuse",
    "read_report_matrix",
    "report_likelihood",
    "run_trial",
    "sample_node_statuses",
    "sample_reports",
    "sample_states",
    "soft_isolation_fuse",
    "sweep",
    "write_report_matrix",
]
