"""Path-integral quantum Monte Carlo with Wolff cluster updates."""
from .analysis import QmcEstimate, autocorrelation, estimate, extrapolate_trotter, integrated_autocorrelation_time
from .pimc import (
    DegenerateMappingError,
    EquilibrationWarning,
    QmcConfig,
    QmcError,
    QmcResult,
    WorldlineSampler,
    default_slices,
    run_qmc,
    trotter_couplings,
    trotter_extrapolate,
)
