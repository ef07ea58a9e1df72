"""Simulation-based Bayesian inversion for grid-valued PDE problems.

Workflow: draw modulus fields from a parametric prior, push them through a
built-in forward solver plus noise model to build a training corpus, fit a
conditional score network by denoising score matching, then sample the
posterior for a new measurement with annealed Langevin dynamics. A
self-normalized importance-sampling reference posterior validates the
results end to end.
"""

from .errors import (AllWeightsZeroError, BadOrderingError, ConfigError,
                     CorruptPayloadError, CsdmError, DegenerateRangeError,
                     EmptyCollectionError, EmptyDatasetError,
                     FractionOutOfRangeError, GridDomainMismatchError,
                     LatentOutOfRangeError, NonFiniteLossError,
                     NonFiniteStateError, NonPositiveModulusError,
                     ShapeMismatchError, SingularCovarianceError,
                     SingularSystemError, TooFewSamplesError,
                     VersionMismatchError)
from .fields import (Grid2D, NormalizationStats, ScalarField2D, log_rescale,
                     minmax_apply, minmax_fit, minmax_invert, rmse)
from .container import (FORMAT_VERSION, canonical_json, read_container,
                        read_header, write_container)
from .rng import derive_rng
from .priors import (GaussianFieldPrior, InclusionPriorFixed,
                     InclusionPriorRich, PriorSample, render_disk)
from .elasticity import ElastostaticSetup, solve_elastostatic
from .helmholtz import HelmholtzSetup, solve_helmholtz
from .measurement import (TruncatedGaussianMeasurement,
                          WrappedPhaseMeasurement, phase_noise_pdf,
                          sample_phase_noise, sample_truncated_gaussian,
                          wrap_phase)
from .forward import (ElastostaticPhysics, HelmholtzPhysics, LinearPhysics,
                      forward_measure)
from .dataset import (ArrayDataset, Dataset, generate, load, load_header,
                      load_samples, regenerate, save, save_samples, split)
from .schedule import NoiseSchedule, check_gamma, make_schedule, suggest_sigma1
from .scorenet import (ScoreModel, ScoreNet, ScoreNetConfig, TrainConfig,
                       TrainResult, dsm_loss, load_checkpoint,
                       save_checkpoint, train)
from .sampler import (PosteriorSummary, SamplerConfig, annealed_langevin,
                      check_epsilon, epsilon_grid_search, model_score_fn,
                      posterior_stats)
from .oracle import (AnalyticGaussianPosterior, WeightedEnsemble,
                     compare_summaries, ensemble_predictions,
                     gaussian_linear_posterior, gaussian_log_weights,
                     importance_posterior)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
