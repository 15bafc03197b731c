"""Proximal MCMC for constrained and regularized Bayesian models."""

from .diagnostics import coverage, credible_interval, effective_sample_size, gradient_check, summarize
from .envelope import AbsoluteValue, EnvelopeTerm, envelope_gradient, envelope_value, huber
from .models import (
    ConstrainedLassoModel,
    GraphicalLassoModel,
    InverseGammaPrior,
    LassoModel,
    MatrixCompletionModel,
    SmoothedPosterior,
    SparseLowRankModel,
    epigraph_prior_marginal,
)
from .prox import (
    DomainError,
    Hyperplane,
    L1Ball,
    NuclearBall,
    NumericalError,
    ProjectionResult,
    RankLeK,
    find_epigraph_root,
    project_hyperplane,
    project_l1_epigraph,
    project_nuclear_epigraph,
    project_rank_le_k,
    soft_threshold,
)
from .sampler import Chain, HmcConfig, SamplerError, leapfrog, sample

__version__ = "0.1.0"
