"""Numerical harness for peakon stability of the Degasperis-Procesi equation."""
from .grid import GridFunction, UniformGrid, eval_at, integrate, norms, spectral_derivative
from .helmholtz import HelmholtzKind, apply_helmholtz, inv_helmholtz, inv_helmholtz_dx
from .waves import landmark_constants, peakon, smooth_peakon
from .functionals import ck_distances, energy_E, energy_F, h_norm
from .admissible import MeasureData, cone_check, make_perturbed_peakon, synthesize_u
from .stability import stability_certificate
from .dynamics import EvolutionConfig, EvolutionTrace, dp_rhs, evolve, step_rk4

__version__ = "0.1.0"

__all__ = [
    "GridFunction", "UniformGrid", "eval_at", "integrate", "norms", "spectral_derivative",
    "HelmholtzKind", "apply_helmholtz", "inv_helmholtz", "inv_helmholtz_dx",
    "landmark_constants", "peakon", "smooth_peakon",
    "ck_distances", "energy_E", "energy_F", "h_norm",
    "MeasureData", "cone_check", "make_perturbed_peakon", "synthesize_u",
    "stability_certificate",
    "EvolutionConfig", "EvolutionTrace", "dp_rhs", "evolve", "step_rk4",
]
