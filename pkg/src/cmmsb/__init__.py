"""Copula-coupled mixed membership stochastic blockmodel."""
from .copula import CopulaSpec, NumericalError
from .inference import ChainConfig, Sampler, Trace, run_chain
from .mathkernel import DomainError, rng_stream
from .relmodel import ConsistencyError, Hyperparams, InteractionMatrix, SubgroupMap

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "ConsistencyError",
    "CopulaSpec",
    "DomainError",
    "Hyperparams",
    "InteractionMatrix",
    "NumericalError",
    "Sampler",
    "SubgroupMap",
    "Trace",
    "rng_stream",
    "run_chain",
]
