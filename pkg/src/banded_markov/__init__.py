"""Spectral analysis of banded Markov chains through positive bidiagonal factorizations."""

from .banded_core import BandedMatrix, from_rows, generator, load_spec, truncate
from .config import DEFAULT_TOLERANCES, Tolerances
from .factorization import compute_pbf, reconstruct, stochastic_normalize
from .markov_analysis import analyze, classify_infinite, doob_transform, kstep_prob, stationary
from .recursion_poly import InitialConditions, eval_recursions
from .simulate import SimConfig, simulate
from .spectral import eigensystem, eigenvalues, perron_pair, spectral_measure

__all__ = [
    "BandedMatrix", "from_rows", "generator", "load_spec", "truncate",
    "DEFAULT_TOLERANCES", "Tolerances",
    "compute_pbf", "reconstruct", "stochastic_normalize",
    "analyze", "classify_infinite", "doob_transform", "kstep_prob", "stationary",
    "InitialConditions", "eval_recursions",
    "SimConfig", "simulate",
    "eigensystem", "eigenvalues", "perron_pair", "spectral_measure",
]
