"""
Vacua and ladders of the collective jump operator
=================================================

N bosons in a harmonic trap, all energies in units of the trap quantum.
The collective operator A lowers the total energy by one quantum.  States it
annihilates (vacua) cannot lose energy through single-quantum exchanges, so
every vacuum starts its own ladder of A^dag excitations.
"""

import numpy as np

from bosecool.coarse_dynamics import FTable, f_closed
from bosecool.fock_basis import build_basis
from bosecool.operators import check_algebra
from bosecool.vacua import VacuumStructure, recurrence_vacuum, overlap_with_span

# A basis of six atoms with at most six quanta of excitation.
basis = build_basis(6, 6)
print(basis)
for l, shell in enumerate(basis.shells):
    print(l, [str(s) for s in shell.states][:4], "..." if len(shell) > 4 else "")

# The operators close on a small algebra away from the cutoff.
report = check_algebra(basis)
for name, res in report.residuals.items():
    print(f"{name:32s} {res:.1e}")

# Vacua per shell: n(l) = p(l) - p(l-1).  m(l) counts the ones that D also
# annihilates; the others are D^dag images of lower vacua.
S = VacuumStructure(basis)
print("l   m   n   p")
for l, (m, n, p) in S.counts().items():
    print(f"{l:<3d} {m:<3d} {n:<3d} {p}")
print("labels (l.s.v):", " ".join(str(w) for w in S.labels))

# A vacuum from the explicit two-term recurrence lies in the kernel.
v = recurrence_vacuum(6, 5)
print("recurrence vacuum l=5, overlap with ker A:", overlap_with_span(v.coefficients, S.kernels[5]))

# %%
# Ladders are complete: together they span the whole truncated space.
U = S.state_in_ladders()
print("ladder basis orthonormal and complete:", np.allclose(U @ U.T, np.eye(basis.dim)))

# Two-quantum processes (B) connect the vacuum (l, s, v) to (l-2, s-1, v)
# with amplitude f.  Closed form and explicit matrix elements agree.
table = FTable.build(VacuumStructure(build_basis(6, 8)))
for w, f in table.numeric.items():
    if w.s:
        print(f"f[{w}] = {f:.6f}   closed form {f_closed(w.l, w.s, 6):.6f}")
