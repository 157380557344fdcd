"""Bayesian model-based finite population inference for spatially
referenced two-stage survey data.

Submodules:

* ``population``  - finite population data model and canonical layout
* ``covariance``  - Matern covariances, distances, variograms
* ``estimators``  - closed-form posterior estimators (fixed variances)
* ``exact_mc``    - exact composition sampling from the conjugate hierarchy
* ``gibbs``       - MCMC engines for the four hierarchical models
* ``assess``      - WAIC and the D = G + P predictive score
* ``sim``         - synthetic populations and two-stage cluster sampling
* ``cli``         - the ``geostat-fps`` command line interface
"""

from .assess import DScore, WaicReport, d_score, waic
from .covariance import (MaternSpec, PartitionedCovariance, VariogramFit,
                         build_omega, effective_range, empirical_variogram,
                         fit_exponential_variogram, matern)
from .estimators import (FixedVarianceModel, posterior_mean_linear,
                         posterior_variance, spatial_two_stage_estimate,
                         srs_estimate, stratified_limit_estimate,
                         two_stage_estimate, variance_of_expectation)
from .exact_mc import (ConjugateModel, fixed_ratio_procedure,
                       conjugate_components, model1_conditionals,
                       model2_conditionals, sample_exact)
from .gibbs import (IGPrior, ModelSpec, PosteriorDraws, SurveyData,
                    UniformPrior, run_chain, run_parallel_chains)
from .population import (DesignMatrices, FinitePopulation, SampleIndex,
                         build_design_matrices, fp_functional,
                         group_summaries)
from .sim import SimConfig, generate_population, replicate_study, \
    two_stage_sample

__version__ = "0.1.0"
