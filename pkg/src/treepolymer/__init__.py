"""Tree polymers on the binary tree.

Cascade martingales (mass and derivative), finite- and infinite-volume
polymer measures on boundary rectangles, exact path sampling, lognormal
strong-disorder Laplace rates, and Monte Carlo ensemble reports. See the
README for the layout and the CLI.
"""

from ._version import __version__
from . import cascade, disorder, laplace, measure, stats
from .cascade import (MartingaleSeries, Vertex, WeightOracle,
                      derivative_martingale, enumerate_leaves,
                      martingale_series, partition_function,
                      subtree_level_sums)
from .disorder import (DisorderSpec, Regime, classify, critical_beta,
                       deterministic, disorder_parameter, lognormal,
                       seneta_heyde_constant, sigma_squared, two_point)
from .errors import (ConfigError, DegenerateDisorderError, DepthCapError,
                     NonpositiveNormalizerError, RegimeError, SolverError,
                     TreePolymerError)
from .laplace import (LaplaceCurve, asymptotic_variance, empirical_laplace_rate,
                      laplace_curve, laplace_rate, solve_h, weak_disorder_rate)
from .measure import (Character, PathSample, RestrictedMeasure,
                      character_expectation_inf, character_expectation_n,
                      finite_volume_measure, infinite_volume_measure,
                      prob_inf_rectangle, prob_n_rectangle, sample_path,
                      sample_paths)
from .stats import (CltReport, DichotomyReport, EnsembleConfig,
                    EnsembleSummary, SenetaHeydeReport, VarianceReport,
                    clt_report, dichotomy_report, ks_statistic,
                    median_log_z_slope, run_ensemble, seneta_heyde_report,
                    variance_report)

__all__ = [name for name in dir() if not name.startswith("_")]
