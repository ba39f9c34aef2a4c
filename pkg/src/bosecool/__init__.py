"""Cooling of trapped ideal bosons by a collective bath: Fock-space operators,
vacuum-ladder structure, master-equation integration and coarse rate equations."""

from .bath_rates import BathSpec, RateSet, compute_rates
from .coarse_dynamics import CoarseModel, CoarseProjector, CoarseState, evolve_coarse
from .fock_basis import TruncatedBasis, build_basis, enumerate_shell, shell_dimension
from .liouville import EvolutionConfig, Generator, evolve
from .operators import CollectiveOperators, check_algebra
from .vacua import VacuumLabel, VacuumStructure

__version__ = "0.1.0"
