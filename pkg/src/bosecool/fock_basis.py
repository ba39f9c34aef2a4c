"""N-boson Fock space of a 1D harmonic trap, organised by energy shells.

A state is stored as its occupation vector ``(nu_0, nu_1, ...)`` with trailing
zeros trimmed.  The energy (in units of hbar*omega) of a state is
``sum(n * nu_n)``, so the states of shell ``l`` are in one-to-one
correspondence with partitions of ``l`` into at most ``N`` parts: each part is
the level of one excited atom, the remaining atoms sit in level 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_MAX_DIM = 100_000


class BasisTooLarge(RuntimeError):
    """Raised when a truncated basis would exceed the configured size cap."""


@dataclass(frozen=True, order=True)
class OccupationState:
    occupations: tuple[int, ...]
    particle_total: int = field(compare=False)
    energy: int = field(compare=False)

    def __post_init__(self):
        occ = tuple(int(v) for v in self.occupations)
        while occ and occ[-1] == 0:
            occ = occ[:-1]
        object.__setattr__(self, "occupations", occ)
        if any(v < 0 for v in occ):
            raise ValueError(f"negative occupation in {occ}")
        if sum(occ) != self.particle_total:
            raise ValueError(f"occupations {occ} do not sum to N={self.particle_total}")
        if sum(n * v for n, v in enumerate(occ)) != self.energy:
            raise ValueError(f"occupations {occ} do not have energy {self.energy}")

    @classmethod
    def from_occupations(cls, occupations) -> "OccupationState":
        occ = tuple(int(v) for v in occupations)
        return cls(occ, sum(occ), sum(n * v for n, v in enumerate(occ)))

    def occupation(self, level: int) -> int:
        return self.occupations[level] if level < len(self.occupations) else 0

    def __str__(self):
        return "|" + ",".join(map(str, self.occupations)) + ">"


def _partitions(total: int, max_parts: int, max_part: int):
    """Yield partitions of ``total`` (non-increasing tuples) with bounded size."""
    if total == 0:
        yield ()
        return
    if max_parts == 0:
        return
    for first in range(min(total, max_part), 0, -1):
        for rest in _partitions(total - first, max_parts - 1, first):
            yield (first,) + rest


def _partition_to_occupations(parts: tuple[int, ...], N: int) -> tuple[int, ...]:
    occ = [0] * ((parts[0] if parts else 0) + 1)
    occ[0] = N - len(parts)
    for p in parts:
        occ[p] += 1
    return tuple(occ)


@dataclass(frozen=True)
class EnergyShell:
    N: int
    l: int
    states: tuple[OccupationState, ...]
    index_of: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.states)

    def index(self, occupations) -> int:
        occ = tuple(occupations)
        while occ and occ[-1] == 0:
            occ = occ[:-1]
        return self.index_of[occ]


def enumerate_shell(N: int, l: int) -> EnergyShell:
    """All ``N``-atom occupation states of energy ``l``.

    States are ordered by lexicographically decreasing occupation vector, so
    the state with the most atoms in the ground level comes first.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if l < 0:
        raise ValueError("l must be >= 0")
    occs = [_partition_to_occupations(p, N) for p in _partitions(l, N, l)]
    states = sorted((OccupationState(o, N, l) for o in occs), reverse=True)
    index_of = {s.occupations: i for i, s in enumerate(states)}
    return EnergyShell(N, l, tuple(states), index_of)


@lru_cache(maxsize=None)
def shell_dimension(N: int, l: int) -> int:
    """Number of partitions of ``l`` into at most ``N`` parts, p_N(l)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if l < 0:
        return 0
    if l == 0:
        return 1
    # p_N(l) = p_{N-1}(l) + p_N(l - N): either fewer than N parts, or remove
    # one from each of the N parts.
    if N == 1:
        return 1
    return shell_dimension(N - 1, l) + (shell_dimension(N, l - N) if l >= N else 0)


class TruncatedBasis:
    """Fock states of ``N`` bosons with energy ``<= L_max``.

    Global indices are contiguous per shell and increase with ``l``; inside a
    shell they follow :func:`enumerate_shell` order.  Instances are immutable
    after construction.
    """

    def __init__(self, N: int, L_max: int, max_dim: int = DEFAULT_MAX_DIM):
        if N < 1:
            raise ValueError("N must be >= 1")
        if L_max < 0:
            raise ValueError("L_max must be >= 0")
        dim = sum(shell_dimension(N, l) for l in range(L_max + 1))
        if dim > max_dim:
            raise BasisTooLarge(f"basis N={N}, L_max={L_max} has {dim} states (cap {max_dim})")
        self.N = N
        self.L_max = L_max
        self.shells = tuple(enumerate_shell(N, l) for l in range(L_max + 1))
        offsets = np.zeros(L_max + 2, dtype=int)
        offsets[1:] = np.cumsum([len(s) for s in self.shells])
        self._offsets = offsets
        self.dim = int(offsets[-1])
        self.energies = np.repeat(np.arange(L_max + 1), [len(s) for s in self.shells])
        self.states = tuple(s for shell in self.shells for s in shell.states)

    def __repr__(self):
        return f"TruncatedBasis(N={self.N}, L_max={self.L_max}, dim={self.dim})"

    def __len__(self):
        return self.dim

    def shell_slice(self, l: int) -> slice:
        if not 0 <= l <= self.L_max:
            raise IndexError(f"shell {l} outside 0..{self.L_max}")
        return slice(int(self._offsets[l]), int(self._offsets[l + 1]))

    def index(self, occupations) -> int:
        """Global index of an occupation vector (trailing zeros ignored)."""
        occ = tuple(int(v) for v in occupations)
        l = sum(n * v for n, v in enumerate(occ))
        if sum(occ) != self.N or l > self.L_max:
            raise KeyError(f"{occ} not in {self!r}")
        return int(self._offsets[l]) + self.shells[l].index(occ)

    def global_index(self, l: int, position: int) -> int:
        if not 0 <= position < len(self.shells[l]):
            raise IndexError(f"position {position} outside shell {l}")
        return int(self._offsets[l]) + position

    def locate(self, index: int) -> tuple[int, int]:
        """Inverse of :meth:`global_index`: ``(l, position)``."""
        if not 0 <= index < self.dim:
            raise IndexError(index)
        l = int(self.energies[index])
        return l, index - int(self._offsets[l])

    def state(self, index: int) -> OccupationState:
        return self.states[index]

    def basis_vector(self, occupations) -> np.ndarray:
        v = np.zeros(self.dim)
        v[self.index(occupations)] = 1.0
        return v

    def guard_mask(self, band: int = 2) -> np.ndarray:
        """Boolean mask of states with energy ``<= L_max - band``."""
        return self.energies <= self.L_max - band


def build_basis(N: int, L_max: int, max_dim: int = DEFAULT_MAX_DIM) -> TruncatedBasis:
    return TruncatedBasis(N, L_max, max_dim=max_dim)
