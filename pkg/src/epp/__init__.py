"""Evolving past posteriors over expert hidden Markov models."""

from .distributions import Distribution, PredictionTable, StateVector
from .ehmm import (
    Ehmm,
    LayerInfo,
    bayes_ehmm,
    bayes_mixture,
    chain_ehmm,
    equivalent,
    from_hmm,
    laplace_ehmm,
    layers,
    slot_machine,
    split_state,
)
from .engine import EppState, Variant, epp_init, epp_predict, epp_run, epp_update
from .errors import (
    CapacityError,
    EppError,
    InconsistentPartitionError,
    InvalidInputError,
    MixabilityError,
    ZeroProbabilityError,
)
from .forward import ForwardState, RunTrace, forward_run
from .schemes import MixingScheme, block_weights, parse_scheme, partition_prior, weights

__version__ = "0.1.0"
