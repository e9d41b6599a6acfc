"""Minimal sufficient subalgebras and Koashi-Imoto decompositions of finite families of quantum states."""

from .channels import Superoperator, from_heisenberg, from_kraus, from_schrodinger, is_cptp_unital
from .classical import (
    ClassicalExperiment,
    broadcast_channel,
    classical_part,
    extraction_channel,
    extraction_instrument,
    is_broadcastable,
)
from .errors import InputError, KIError, NumericalError, VerificationError
from .experiment import StatisticalExperiment, gen_planted
from .linalg import DEFAULT_TOL, Tolerance
from .minsuff import conditional_expectation, is_minimal_sufficient, minimal_sufficient_algebra
from .opspace import OperatorAlgebra, OperatorSubspace, center, close_algebra, commutant
from .products import check_product_classical, check_product_minimal_sufficiency, tensor_experiments
from .structure import KIDecomposition, ki_decomposition, verify_ki

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOL",
    "ClassicalExperiment",
    "InputError",
    "KIDecomposition",
    "KIError",
    "NumericalError",
    "OperatorAlgebra",
    "OperatorSubspace",
    "StatisticalExperiment",
    "Superoperator",
    "Tolerance",
    "VerificationError",
    "broadcast_channel",
    "center",
    "check_product_classical",
    "check_product_minimal_sufficiency",
    "classical_part",
    "close_algebra",
    "commutant",
    "conditional_expectation",
    "extraction_channel",
    "extraction_instrument",
    "from_heisenberg",
    "from_kraus",
    "from_schrodinger",
    "gen_planted",
    "is_broadcastable",
    "is_cptp_unital",
    "is_minimal_sufficient",
    "ki_decomposition",
    "minimal_sufficient_algebra",
    "tensor_experiments",
    "verify_ki",
]
