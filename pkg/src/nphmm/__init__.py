"""Hidden Markov models with nonparametric and mixture emission families."""

from .core import (
    LOG_FLOOR,
    ObservationSequence,
    PosteriorSet,
    TransitionModel,
    apply_log_floor,
    forward_backward,
    log_likelihood,
    map_decode,
    pseudo_log_likelihood,
    stationary_distribution,
    viterbi,
)
from .diagnostics import IdentifiabilityReport, diagnose
from .em import FitOptions, FitReport, align_labels, fit, initialize
from .emissions.discrete import DiscreteEmissionTable, NegBinEmission, PenaltySpec
from .emissions.kernel import KernelEmission, bandwidth_cv
from .emissions.mixture import MixtureEmission, make_zero_inflated
from .errors import FitFailedError, InputError, NPHMMError, NumericError
from .model import HMMModel
from .modelio import load_model, read_data, save_model, write_data
from .sim import (
    BenchmarkConfig,
    RegionScheme,
    aligned_accuracy,
    default_benchmark_config,
    default_region_scheme,
    rand_index,
    run_benchmark,
    simulate_hmm,
    simulate_regions,
)

__version__ = "0.1.0"

__all__ = [
    "LOG_FLOOR",
    "ObservationSequence",
    "PosteriorSet",
    "TransitionModel",
    "apply_log_floor",
    "forward_backward",
    "log_likelihood",
    "map_decode",
    "pseudo_log_likelihood",
    "stationary_distribution",
    "viterbi",
    "IdentifiabilityReport",
    "diagnose",
    "FitOptions",
    "FitReport",
    "align_labels",
    "fit",
    "initialize",
    "DiscreteEmissionTable",
    "NegBinEmission",
    "PenaltySpec",
    "KernelEmission",
    "bandwidth_cv",
    "MixtureEmission",
    "make_zero_inflated",
    "FitFailedError",
    "InputError",
    "NPHMMError",
    "NumericError",
    "HMMModel",
    "load_model",
    "read_data",
    "save_model",
    "write_data",
    "BenchmarkConfig",
    "RegionScheme",
    "aligned_accuracy",
    "default_benchmark_config",
    "default_region_scheme",
    "rand_index",
    "run_benchmark",
    "simulate_hmm",
    "simulate_regions",
    "__version__",
]
