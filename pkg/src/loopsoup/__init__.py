"""Simulation and analysis of the Brownian loop soup representation of the Bose gas."""

from .geometry import CenteredBox, Shift, SubboxGrid, build_grid, shift_config, subbox_of
from .paths import (
    InterlacementFragment,
    InterlacementWindow,
    Leg,
    Loop,
    LoopConfiguration,
    Shred,
    particles,
    sample_bridge,
    sample_loop,
    spread,
)
from .loop_soup import (
    BoundaryCondition,
    SoupIntensity,
    estimate_rate_bc,
    free_rate,
    log_density_loop,
    make_intensity,
    sample_soup,
)
from .interaction import (
    EnergyBreakdown,
    PairPotential,
    check_superstability,
    f_decomposition,
    gauss_potential,
    leg_interaction,
    loop_pair_interaction,
    parse_potential,
    step_potential,
    total_interaction,
)
from .shredding import (
    BoundaryShredConfiguration,
    EmpiricalSubboxMeasure,
    ShredConfiguration,
    boundary_shreds,
    condensate_counters,
    consistency_check,
    empirical_measure,
    restrict_loops,
    shred_config,
    shred_path,
)
from .freegas import (
    FreeGasSolution,
    chibar_free,
    dual_lower_bound,
    entropy_sequence,
    qbar,
    qbar_direct,
    rel_entropy_discrete,
    rho_c,
    solve_alpha,
    zeta_partial,
)

__version__ = "0.1.0"
