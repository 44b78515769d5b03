"""Exact thermal expectation values: dense diagonalization and free fermions."""
from .ed import (
    ED_MAX_SITES,
    STATE_MAX_SITES,
    SizeError,
    boltzmann_weights,
    build_hamiltonian,
    gibbs_expectations,
    gibbs_state,
    gibbs_state_of,
    spectrum,
    squared_magnetization_diagonal,
)
from .fermion import UnsupportedModelError, free_fermion_e_ising, free_fermion_log_z
from .thermal import KB_OVER_H_GHZ_PER_MK, GibbsResult, ThermalError, ThermalPoint, beta_from_mk
