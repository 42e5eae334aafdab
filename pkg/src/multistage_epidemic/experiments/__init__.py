"""Monte Carlo studies of the scaling limits, the outbreak size and the growth exponents."""
from .collapse import collapse_check, post_extinction_deviation
from .conjecture import conjecture_exponents, conjectured_exponent, partition_heuristic_exponent
from .convergence import convergence_study
from .outbreak import outbreak_scaling_fit
from .partition import PartitionResult, random_partition
from .report import StudyReport, Table
from .stats import ks_distance, power_law_fit

__all__ = [
    "PartitionResult", "StudyReport", "Table", "collapse_check", "conjecture_exponents", "conjectured_exponent",
    "convergence_study", "ks_distance", "outbreak_scaling_fit", "partition_heuristic_exponent",
    "post_extinction_deviation", "power_law_fit", "random_partition",
]
