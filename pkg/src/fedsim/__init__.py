"""fedsim: desk-scale federated optimization simulator with exact
communication and oracle-cost accounting."""

from .algorithms import ALGORITHMS, OptimizerSpec, make_algorithm
from .compressors import (CompressorSpec, bit_cost, compress,
                          format_compressor, parse_compressor,
                          unbiasedness_certificate)
from .engine import (MetricsRow, RunConfig, RunResult, run_experiment,
                     sample_clients)
from .problems import (FederatedProblem, GradientOracle, ProblemSpec,
                       generate_logreg_problem, generate_quadratic_problem,
                       parse_problem_string)
from .store import (ExperimentRecord, export_series, list_records,
                    load_record, save_record)

__version__ = "0.1.0"
