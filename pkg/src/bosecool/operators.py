"""Sparse second-quantised operators on a :class:`TruncatedBasis`.

All one-body operators here have the form ``sum_n c(n) a^dag_n a_{n+d}``.
Matrix elements are evaluated as a single square root of an integer product
(coefficient^2 * nu_{n+d} * (nu_n + 1)) followed by a common real prefactor,
so algebraically equal expressions round identically.

Amplitudes that would land above the energy cutoff are dropped; lowering
operators are therefore exact on the whole basis, raising operators are
exact except on the top shells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fock_basis import TruncatedBasis

MIXED = "mixed"


@dataclass(frozen=True)
class SparseOperator:
    """Complex sparse matrix of an operator plus its shell bookkeeping.

    ``shell_shift`` is the energy change ``delta`` of every non-zero entry
    (column in shell ``l`` -> row in shell ``l + delta``), or ``"mixed"``.
    """

    basis: TruncatedBasis
    matrix: sp.csr_matrix
    shell_shift: int | str
    name: str = ""

    @property
    def H(self) -> "SparseOperator":
        return self.adjoint()

    def adjoint(self) -> "SparseOperator":
        shift = -self.shell_shift if self.shell_shift != MIXED else MIXED
        name = self.name[:-1] if self.name.endswith("†") else (self.name + "†" if self.name else "")
        return SparseOperator(self.basis, self.matrix.conj().T.tocsr(), shift, name)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def _check(self, other: "SparseOperator"):
        if other.basis is not self.basis:
            raise ValueError("operators live on different bases")

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            self._check(other)
            shift = (self.shell_shift + other.shell_shift
                     if MIXED not in (self.shell_shift, other.shell_shift) else MIXED)
            return SparseOperator(self.basis, (self.matrix @ other.matrix).tocsr(), shift)
        return self.matrix @ other

    def __rmatmul__(self, other):
        return other @ self.matrix

    def _combine(self, other: "SparseOperator", sign: float) -> "SparseOperator":
        self._check(other)
        shift = self.shell_shift if self.shell_shift == other.shell_shift else MIXED
        if other.matrix.nnz == 0:
            shift = self.shell_shift
        elif self.matrix.nnz == 0:
            shift = other.shell_shift
        return SparseOperator(self.basis, (self.matrix + sign * other.matrix).tocsr(), shift)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return SparseOperator(self.basis, -self.matrix, self.shell_shift)

    def __mul__(self, scalar):
        return SparseOperator(self.basis, (self.matrix * scalar).tocsr(), self.shell_shift)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def respects_shift(self) -> bool:
        """True if every stored entry connects shells differing by ``shell_shift``."""
        if self.shell_shift == MIXED:
            return True
        coo = self.matrix.tocoo()
        e = self.basis.energies
        return bool(np.all(e[coo.row] - e[coo.col] == self.shell_shift))


def identity(basis: TruncatedBasis) -> SparseOperator:
    return SparseOperator(basis, sp.identity(basis.dim, dtype=complex, format="csr"), 0, "1")


def _one_body(basis: TruncatedBasis, shift: int, coeff_sq: Callable[[int], int],
              prefactor: float, name: str) -> SparseOperator:
    """Matrix of ``prefactor * sum_n sqrt(coeff_sq(n)) a^dag_n a_{n+shift}``.

    ``shift`` is the level taken from the annihilated particle relative to the
    created one, so the operator changes the energy by ``-shift``.
    """
    rows, cols, vals = [], [], []
    for j, state in enumerate(basis.states):
        occ = state.occupations
        l = state.energy
        if l - shift > basis.L_max or l - shift < 0:
            continue
        for m, nu_m in enumerate(occ):
            if nu_m == 0:
                continue
            n = m - shift
            if n < 0:
                continue
            c2 = coeff_sq(n)
            if c2 == 0:
                continue
            new = list(occ) + [0] * max(0, n + 1 - len(occ))
            if n == m:
                amp_sq = c2 * nu_m * nu_m
            else:
                amp_sq = c2 * nu_m * (new[n] + 1)
                new[m] -= 1
                new[n] += 1
            rows.append(basis.index(new))
            cols.append(j)
            vals.append(math.sqrt(amp_sq))
    mat = sp.csr_matrix((np.asarray(vals, dtype=complex) * prefactor, (rows, cols)),
                        shape=(basis.dim, basis.dim))
    mat.sum_duplicates()
    return SparseOperator(basis, mat, -shift, name)


def bilinear(basis: TruncatedBasis, n: int, m: int) -> SparseOperator:
    """Matrix of ``a^dag_n a_m``."""
    if n < 0 or m < 0:
        raise ValueError("levels must be non-negative")
    rows, cols, vals = [], [], []
    for j, state in enumerate(basis.states):
        nu_m = state.occupation(m)
        if nu_m == 0 or state.energy + n - m > basis.L_max:
            continue
        if n == m:
            rows.append(j)
            cols.append(j)
            vals.append(float(nu_m))
            continue
        occ = list(state.occupations) + [0] * max(0, max(n, m) + 1 - len(state.occupations))
        amp = math.sqrt(nu_m * (occ[n] + 1))
        occ[m] -= 1
        occ[n] += 1
        rows.append(basis.index(occ))
        cols.append(j)
        vals.append(amp)
    mat = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(basis.dim, basis.dim))
    return SparseOperator(basis, mat, n - m, f"a{n}†a{m}")


def build_A(basis: TruncatedBasis) -> SparseOperator:
    """Collective jump ``A = N^-1/2 sum_n sqrt(n+1) a^dag_n a_{n+1}``."""
    return _one_body(basis, 1, lambda n: n + 1, 1.0 / math.sqrt(basis.N), "A")


def build_B(basis: TruncatedBasis) -> SparseOperator:
    """``B = N^-1/2 sum_n sqrt((n+1)(n+2)) a^dag_n a_{n+2}``."""
    return _one_body(basis, 2, lambda n: (n + 1) * (n + 2), 1.0 / math.sqrt(basis.N), "B")


def build_C(basis: TruncatedBasis) -> SparseOperator:
    """``C = (2 sqrt(N))^-1 sum_n (n+1)^(3/2) a^dag_n a_{n+1}``."""
    return _one_body(basis, 1, lambda n: (n + 1) ** 3, 0.5 / math.sqrt(basis.N), "C")


def build_E(basis: TruncatedBasis) -> SparseOperator:
    """Energy operator ``sum_n n a^dag_n a_n`` (diagonal)."""
    mat = sp.diags(basis.energies.astype(complex), format="csr")
    return SparseOperator(basis, mat, 0, "E")


def build_D(basis: TruncatedBasis, A: SparseOperator | None = None,
            B: SparseOperator | None = None) -> SparseOperator:
    """``D = B - A^2 / sqrt(N)``."""
    A = build_A(basis) if A is None else A
    B = build_B(basis) if B is None else B
    D = B - (A @ A) / math.sqrt(basis.N)
    D.matrix.eliminate_zeros()
    return SparseOperator(basis, D.matrix, -2, "D")


def commutator(X: SparseOperator, Y: SparseOperator) -> SparseOperator:
    return (X @ Y) - (Y @ X)


@dataclass(frozen=True)
class CollectiveOperators:
    """The operators entering the Lamb-Dicke master equation, built once."""

    basis: TruncatedBasis
    A: SparseOperator
    B: SparseOperator
    C: SparseOperator
    D: SparseOperator
    E: SparseOperator

    @classmethod
    def build(cls, basis: TruncatedBasis) -> "CollectiveOperators":
        A, B = build_A(basis), build_B(basis)
        return cls(basis, A, B, build_C(basis), build_D(basis, A, B), build_E(basis))

    @property
    def Ad(self):
        return self.A.H

    @property
    def Bd(self):
        return self.B.H

    @property
    def Cd(self):
        return self.C.H

    @property
    def Dd(self):
        return self.D.H


# --- algebra check -----------------------------------------------------------

ALGEBRA_TOL = 1e-10


@dataclass
class AlgebraReport:
    N: int
    L_max: int
    residuals: dict[str, float]
    tol: float = ALGEBRA_TOL

    @property
    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.residuals.items() if not v < self.tol}

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"N": self.N, "L_max": self.L_max, "tol": self.tol, "ok": self.ok,
                "residuals": dict(self.residuals)}


def check_algebra(basis: TruncatedBasis, ops: CollectiveOperators | None = None,
                  tol: float = ALGEBRA_TOL) -> AlgebraReport:
    """Residuals of the collective-operator commutation relations.

    Each residual is the max-norm of ``lhs - rhs`` acting on states in the
    guard band ``l <= L_max - 2``; states near the cutoff are excluded because
    raising operators are truncated there.
    """
    if basis.L_max < 4:
        raise ValueError(f"guard band too small: need L_max >= 4, got {basis.L_max}")
    ops = CollectiveOperators.build(basis) if ops is None else ops
    N = basis.N
    A, B, C, D, E = ops.A, ops.B, ops.C, ops.D, ops.E
    one = identity(basis)
    zero = one * 0.0
    AdA = ops.Ad @ A
    relations = {
        "[A,A†]=1": (commutator(A, ops.Ad), one),
        "[A,B]=0": (commutator(A, B), zero),
        "[A,C]=B/(2√N)": (commutator(A, C), B / (2 * math.sqrt(N))),
        "[A,B†]=2A†/√N": (commutator(A, ops.Bd), ops.Ad * (2 / math.sqrt(N))),
        "[A,C†]=E/N+1/2": (commutator(A, ops.Cd), E / N + one * 0.5),
        "[B,B†]=4E/N+2": (commutator(B, ops.Bd), E * (4 / N) + one * 2.0),
        "[B,E]=2B": (commutator(B, E), B * 2.0),
        "[C,E]=C": (commutator(C, E), C),
        "[A,E]=A": (commutator(A, E), A),
        "[D,A]=0": (commutator(D, A), zero),
        "[D,A†]=0": (commutator(D, ops.Ad), zero),
        "[D,D†]=4(E-A†A)/N+2(1-1/N)": (commutator(D, ops.Dd),
                                       (E - AdA) * (4 / N) + one * (2 * (1 - 1 / N))),
    }
    cols = np.flatnonzero(basis.guard_mask(2))
    residuals = {}
    for name, (lhs, rhs) in relations.items():
        diff = (lhs.matrix - rhs.matrix).tocsc()[:, cols]
        residuals[name] = float(abs(diff).max()) if diff.nnz else 0.0
    return AlgebraReport(N, basis.L_max, residuals, tol)


# --- text dump ---------------------------------------------------------------

def dump_operator(op: SparseOperator, path, name: str | None = None) -> None:
    """Write ``op`` as ``# op=<name> N=<N> Lmax=<L>`` followed by ``row col re im`` lines."""
    name = name or op.name or "op"
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# op={name} N={op.basis.N} Lmax={op.basis.L_max}"]
    for k in order:
        v = coo.data[k]
        lines.append(f"{coo.row[k]} {coo.col[k]} {v.real:.17g} {v.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_operator(path, basis: TruncatedBasis) -> SparseOperator:
    """Read a file written by :func:`dump_operator` back onto ``basis``."""
    text = Path(path).read_text().splitlines()
    header = dict(tok.split("=", 1) for tok in text[0].lstrip("# ").split())
    if int(header["N"]) != basis.N or int(header["Lmax"]) != basis.L_max:
        raise ValueError(f"dump is for N={header['N']}, Lmax={header['Lmax']}, not {basis!r}")
    rows, cols, vals = [], [], []
    for line in text[1:]:
        if not line.strip():
            continue
        r, c, re, im = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re), float(im)))
    mat = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(basis.dim, basis.dim))
    shifts = set((basis.energies[rows] - basis.energies[cols]).tolist())
    shift = shifts.pop() if len(shifts) == 1 else (0 if not shifts else MIXED)
    return SparseOperator(basis, mat, shift, header.get("op", ""))
