"""Ladder and crossed transport of interacting bosons through a disordered slab."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .crossed import (
    ConsistencyError,
    CrossedConfig,
    crossed_bistatic,
    crossed_spectrum,
    enhancement_factor,
    gp_sweep,
    solve_crossed,
)
from .grids import EnergyGrid, SpatialGrid
from .kernels import InteractionParams, crossed_fC, crossed_gC, crossed_h, ladder_f, ladder_g
from .ladder import (
    ConvergenceError,
    InstabilityError,
    LadderConfig,
    flux_profiles,
    ladder_bistatic,
    solve_ladder,
)

__version__ = "0.1.0"
