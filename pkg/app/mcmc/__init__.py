from mcmc.chain import ChainRecord, read_coefficients, write_coefficients
from mcmc.engine import FunctionPosterior, ModelPosterior, PosteriorEvaluator, metropolis_hastings
from mcmc.likelihoods import (
    CollectiveLikelihood,
    HausdorffLikelihood,
    L2Likelihood,
    LikelihoodModel,
    hausdorff_distance,
    log_likelihood_collective,
    log_likelihood_hausdorff,
    log_likelihood_l2,
    surface_distances,
)
from mcmc.proposals import (
    DEFAULT_SCALES,
    CPProposal,
    CPProposalConfig,
    MixtureProposal,
    Proposal,
    ProposedMove,
    RandomWalkProposal,
)

__all__ = [
    "ChainRecord",
    "read_coefficients",
    "write_coefficients",
    "FunctionPosterior",
    "ModelPosterior",
    "PosteriorEvaluator",
    "metropolis_hastings",
    "CollectiveLikelihood",
    "HausdorffLikelihood",
    "L2Likelihood",
    "LikelihoodModel",
    "hausdorff_distance",
    "log_likelihood_collective",
    "log_likelihood_hausdorff",
    "log_likelihood_l2",
    "surface_distances",
    "DEFAULT_SCALES",
    "CPProposal",
    "CPProposalConfig",
    "MixtureProposal",
    "Proposal",
    "ProposedMove",
    "RandomWalkProposal",
]
