"""Randomization-based design and analysis of treatment-effect experiments.

Design-stage tools draw completely randomized or rerandomized (Mahalanobis
balance-constrained) assignments; analysis-stage tools compute linearly
adjusted estimators with conservative variance estimates; the asymptotics
and inference layers evaluate the truncated-Gaussian mixture laws that
govern both, and the simulation laboratory verifies everything by Monte
Carlo and exhaustive enumeration at desk scale.
"""

from .asymptotics import (GainReport, Scenario, adjustment_helps,
                          condition2_holds, condition3_holds, decompose,
                          gains_estimated, gains_sampling, min_variance_gamma,
                          population_report, s_optimal_gamma,
                          sampling_distribution)
from .design import (Assignment, DesignSpec, RejectionCapError, draw_cre,
                     draw_rem, enumerate_assignments, mahalanobis)
from .dists import (MixtureDist, TruncatedGaussian, chi2_cdf, chi2_quantile,
                    mixture_quantile, v_constant)
from .estimators import (FitResult, TrialData, adjusted_estimate,
                         diff_in_means, huber_white, lin_fit, neyman_variance)
from .fpstats import (FinitePopulation, PopulationSummary,
                      SingularCovarianceError, adjusted_moments, fp_cov,
                      summarize, v_matrix)
from .inference import (IntervalReport, confidence_interval,
                        estimated_distribution, probability_limit)
from .simlab import (CsvPopulationModel, EstimatorSpec, Example1Model,
                     MonteCarloReport, ScenarioConfig, gen_example1,
                     reproduce_sec81, reproduce_table1, run_monte_carlo)

__version__ = "0.1.0"
