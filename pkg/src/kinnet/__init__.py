"""kinnet: causal protein-signaling network inference from time courses.

Pipeline: load time-course phospho/unphospho abundances, normalize to unit
mean, turn them into gradient-matching regressions, score every bounded
in-degree candidate graph per substrate by marginal likelihood, average the
models into edge posteriors, and predict dynamics (including under unseen
interventions) by integrating a posterior ensemble of kinetic models.
"""

from .averaging import EdgePosterior, EnsembleDraw, draw_ensemble, edge_posterior
from .config import PriorSpec, RunConfig, SamplerConfig, build_run_config
from .data import (Dataset, GradientSample, ProteinPanel, TimeCourse,
                   gradient_match, gradient_samples, load_dataset, normalize,
                   write_dataset)
from .dynamics import (PredictionBand, Trajectory, integrate, predict,
                       prediction_mse, simulate_sde, stationary_benchmark)
from .errors import DataError, KinnetError, ModelRejected, NumericalError
from .graphs import (LocalGraph, Network, ReactionGraph, enumerate_local,
                     graph_prior, log_graph_prior, project_network)
from .inference import (Chain, ConditionalPosterior, LocalModel,
                        PosteriorResult, chib_log_marginal,
                        conditional_posterior, linear_log_marginal,
                        run_sampler, score_all_graphs, score_network)
from .kinetics import (DesignMatrix, KineticParams, apply_intervention,
                       build_design, design_row, linear_design, linear_rate,
                       mm_rate)
from .metrics import MetricReport, pr_roc, ranked_metrics
from .synthetic import (System, chain_system, make_dataset, noiseless_course,
                        system_from_json, system_to_json)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
