import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosecool.fock_basis import (BasisTooLarge, OccupationState, build_basis, enumerate_shell,
                                 shell_dimension)


def brute_force_count(N, l):
    # occupation vectors over levels 0..l with sum N and energy l
    count = 0
    for occ in itertools.product(range(N + 1), repeat=l + 1):
        if sum(occ) == N and sum(n * v for n, v in enumerate(occ)) == l:
            count += 1
    return count


def test_ground_shell():
    sh = enumerate_shell(3, 0)
    assert [s.occupations for s in sh.states] == [(3,)]


def test_two_excitations_six_atoms():
    sh = enumerate_shell(6, 2)
    assert [s.occupations for s in sh.states] == [(5, 0, 1), (4, 2)]


def test_three_atoms_four_quanta():
    assert len(enumerate_shell(3, 4)) == 4


def test_partition_numbers():
    assert [shell_dimension(6, l) for l in range(7)] == [1, 1, 2, 3, 5, 7, 11]
    assert shell_dimension(3, 4) == 4
    assert shell_dimension(1, 5) == 1


@pytest.mark.parametrize("N,L,dim", [(2, 6, 16), (1, 9, 10), (3, 0, 1)])
def test_basis_dimension(N, L, dim):
    assert build_basis(N, L).dim == dim


def test_dimension_cap():
    with pytest.raises(BasisTooLarge):
        build_basis(8, 30, max_dim=1000)


def test_occupation_state_trims_and_validates():
    s = OccupationState.from_occupations([2, 1, 0, 0])
    assert s.occupations == (2, 1)
    assert s.energy == 1 and s.particle_total == 3
    with pytest.raises(ValueError):
        OccupationState((2, 1), 3, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 6))
def test_shell_dimension_matches_brute_force(N, l):
    assert shell_dimension(N, l) == brute_force_count(N, l) == len(enumerate_shell(N, l))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 8), st.integers(0, 4))
def test_small_shells_independent_of_N(l, extra):
    assert shell_dimension(max(l, 1) + extra, l) == shell_dimension(max(l, 1), l)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 7))
def test_index_bijection(N, L):
    b = build_basis(N, L)
    assert b.dim == sum(shell_dimension(N, l) for l in range(L + 1))
    for i in range(b.dim):
        s = b.state(i)
        assert b.index(s.occupations) == i
        l, pos = b.locate(i)
        assert b.global_index(l, pos) == i
        assert s.energy == l and s.particle_total == N
    starts = [b.shell_slice(l).start for l in range(L + 1)]
    assert starts == sorted(starts)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 8))
def test_shell_order_is_lexicographically_decreasing(N, l):
    occ = [s.occupations for s in enumerate_shell(N, l).states]
    padded = [o + (0,) * (l + 1 - len(o)) for o in occ]
    assert padded == sorted(padded, reverse=True)


def test_basis_vector_and_guard_mask():
    b = build_basis(2, 6)
    v = b.basis_vector((1, 0, 1))
    assert v.sum() == 1 and np.flatnonzero(v)[0] == b.index((1, 0, 1))
    assert b.guard_mask(2).sum() == sum(shell_dimension(2, l) for l in range(5))
