"""Alternating randomized block coordinate descent and its accelerated variant."""

from .blocks import (BlockPartition, PartitionError, block_norm_sq, block_restrict, block_scatter,
                     make_partition, partition_by_sorted_smoothness)
from .data import CsvError, load_csv, make_quadratic, make_synthetic, synthetic_design
from .gap import (AcceleratedGapMonitor, ARBCDGapMonitor, GapAccumulator, RandGapAccumulator,
                  gamma_k, gap_Gk, lambda_k, lower_bound_Lk)
from .harness import (ConfigError, ExperimentConfig, Trace, cost_factor, estimate_fstar,
                      fit_rate_exponent, run_experiment, verify_theorem4_bound, write_trace_csv)
from .objective import (QuadraticProblem, ResidualCache, SmoothnessProfile, StructuredObjective,
                        cached_block_gradient, closed_form_exact_min, finite_diff_gradient)
from .schedule import (ConstantRatioSchedule, GeometricSchedule, PolynomialSchedule,
                       SamplingDistribution, ScheduleError, accelerated_parameters, make_sampling,
                       rng_stream)
from .solvers import (SolverError, SolverResult, gradient_step, run_aarbcd_efficient,
                      run_aarbcd_naive, run_am, run_arbcd, run_cyclic, run_rcdm)

__version__ = "0.1.0"

__all__ = [
    "BlockPartition", "PartitionError", "block_norm_sq", "block_restrict", "block_scatter",
    "make_partition", "partition_by_sorted_smoothness",
    "CsvError", "load_csv", "make_quadratic", "make_synthetic", "synthetic_design",
    "AcceleratedGapMonitor", "ARBCDGapMonitor", "GapAccumulator", "RandGapAccumulator",
    "gamma_k", "gap_Gk", "lambda_k", "lower_bound_Lk",
    "ConfigError", "ExperimentConfig", "Trace", "cost_factor", "estimate_fstar",
    "fit_rate_exponent", "run_experiment", "verify_theorem4_bound", "write_trace_csv",
    "QuadraticProblem", "ResidualCache", "SmoothnessProfile", "StructuredObjective",
    "cached_block_gradient", "closed_form_exact_min", "finite_diff_gradient",
    "ConstantRatioSchedule", "GeometricSchedule", "PolynomialSchedule", "SamplingDistribution",
    "ScheduleError", "accelerated_parameters", "make_sampling", "rng_stream",
    "SolverError", "SolverResult", "gradient_step", "run_aarbcd_efficient", "run_aarbcd_naive",
    "run_am", "run_arbcd", "run_cyclic", "run_rcdm",
]
