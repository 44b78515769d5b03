"""Open-system (Davies master equation) simulation of pause-and-quench protocols."""
from .davies import (AME_MAX_SITES, BOHR_TOL, AmeError, BathParams, DaviesGenerator, build_davies,
                     davies_generator, ohmic_rate, sigma_z_diagonals)
from .dynamics import (NS_PER_US, UNITARY_MAX_SITES, AmeRun, ChainHamiltonian, IntegratorError,
                       TrajectoryOutput, closed_system_evolve, evolve, magnus4, trace_distance,
                       unitary_propagator)
from .protocols import (DEFAULT_PAUSE_US, SWEEP_HEADER, TRAJECTORY_HEADER, BracketError, QuenchCell,
                        fit_loglog_slope, minimal_quench_rate, prepare_paused_state, quench_from,
                        quench_sweep, read_sweep_csv, read_trajectory_csv, sample_measurements,
                        unitary_quench_norm, write_sweep_csv, write_trajectory_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
