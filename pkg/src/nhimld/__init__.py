"""Lagrangian descriptors and periodic-orbit tools for index-1 saddles in 2- and 3-DoF Hamiltonians."""
from .models import (BarbanisContopoulos3DoF, Barbanis2DoF, Equilibrium, ModelError, Params2D, Params3D,
                     PhaseState, SaddleEigensystem, apply_symmetry, hill_mask, linear_solution,
                     model_from_dict, quartic_roots, saddle_eigensystem)
from .integrator import (Event, EventNotFound, IntegrationError, IntegratorConfig, Trajectory, integrate,
                         integrate_to_event, integrate_with_stm)
from .slices import EnergySpec, SliceSpec, momentum_on_shell

__version__ = "0.1.0"

__all__ = [
    "Barbanis2DoF", "BarbanisContopoulos3DoF", "Equilibrium", "ModelError", "Params2D", "Params3D",
    "PhaseState", "SaddleEigensystem", "apply_symmetry", "hill_mask", "linear_solution", "model_from_dict",
    "quartic_roots", "saddle_eigensystem", "Event", "EventNotFound", "IntegrationError", "IntegratorConfig",
    "Trajectory", "integrate", "integrate_to_event", "integrate_with_stm", "EnergySpec", "SliceSpec",
    "momentum_on_shell", "__version__",
]
