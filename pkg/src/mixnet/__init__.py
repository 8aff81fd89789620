"""Identification of mixed linear dynamic networks.

A mixed network combines diffusive (symmetric) couplings with directed links.
The estimator works in two linear stages: a polynomial-form model is fitted
from data, then mapped to physical coefficients.
"""
from .estim1 import estimate_breve, fit_arx, noise_model, reduce_to_structured, refine
from .estim2 import map_to_physical, solve_kkt
from .identcheck import check_identifiability, check_informativity, check_relaxed_cond6
from .netmodel import BreveModel, MixedModel, build_msd, compute_dG, freq_response, net2, to_breve
from .polyalg import PolyMatrix, Polynomial
from .simkit import DataSet, ExcitationSpec, generate, prediction_error, simulate
from .structure import ModelStructure

__version__ = "0.1.0"

__all__ = [
    "BreveModel", "DataSet", "ExcitationSpec", "MixedModel", "ModelStructure", "PolyMatrix",
    "Polynomial", "build_msd", "check_identifiability", "check_informativity",
    "check_relaxed_cond6", "compute_dG", "estimate_breve", "fit_arx", "freq_response",
    "generate", "map_to_physical", "net2", "noise_model", "prediction_error",
    "reduce_to_structured", "refine", "simulate", "solve_kkt", "to_breve",
]
