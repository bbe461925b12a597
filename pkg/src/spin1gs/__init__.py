"""Ground states of a trapped spin-1 condensate with antiferromagnetic interactions."""

from .grid import Grid, GridSpec, build_grid, trap_potential
from .state import Constraints, InfeasibleConstraints, SpinorState, project_constraints
from .energy import EnergyBreakdown, ModelParams, Multipliers, energy_parts, gp_apply, multipliers

__version__ = "0.1.0"
