"""Multiple vacua of the collective jump operator and their A^dag ladders.

Every shell ``l`` contains ``n_N(l) = p_N(l) - p_N(l-1)`` independent states
annihilated by ``A``.  They are organised as ``|0_{lsv}>``, proportional to
``(D^dag)^s |0_{l-2s,0,v}>`` where ``|0_{m0v}>`` span the joint kernel of
``A`` and ``D`` in shell ``m``.  Each vacuum ``w = (l, s, v)`` seeds a ladder
``|k_w> = (A^dag)^k / sqrt(k!) |0_w>``; the ladders together span the whole
truncated Fock space.

Conventions (none of them affect physics, which never mixes ``v``):

* base vacua (``s = 0``) are obtained by Gram-Schmidt of the kernel projector
  applied to the canonical shell states in order, and their phase makes the
  largest-magnitude coefficient positive (ties go to the later state);
* vacua with ``s > 0`` inherit their phase from the ``D^dag`` construction,
  which makes ``<0_{w-2}|D|0_w>`` positive.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .fock_basis import TruncatedBasis, enumerate_shell, shell_dimension
from .operators import CollectiveOperators

RANK_TOL = 1e-10
AMBIGUOUS_BAND = (1e-12, 1e-8)
SPAN_TOL = 1e-8
LADDER_NORM_TOL = 1e-9


class RankAmbiguityError(ArithmeticError):
    """A singular value fell in the band where rank cannot be decided."""


class StructuralError(RuntimeError):
    """The vacuum construction failed one of its structural identities."""


class LadderError(RuntimeError):
    """A ladder state lost its normalisation (cutoff leakage)."""


class VacuumLabel(NamedTuple):
    l: int
    s: int
    v: int

    @property
    def family(self) -> tuple[int, int]:
        """``(m, v)`` with ``m = l - 2s``: invariant under the slow dynamics."""
        return (self.l - 2 * self.s, self.v)

    def up(self) -> "VacuumLabel":
        return VacuumLabel(self.l + 2, self.s + 1, self.v)

    def down(self) -> "VacuumLabel":
        return VacuumLabel(self.l - 2, self.s - 1, self.v)

    def __str__(self):
        return f"{self.l}.{self.s}.{self.v}"

    @classmethod
    def parse(cls, text) -> "VacuumLabel":
        if isinstance(text, (tuple, list)):
            return cls(*map(int, text))
        return cls(*map(int, str(text).replace(",", ".").split(".")))


@dataclass(frozen=True)
class VacuumState:
    label: VacuumLabel | None
    N: int
    l: int
    coefficients: np.ndarray  # over enumerate_shell(N, l).states
    dtd: float = float("nan")  # <0|D^dag D|0>

    def embed(self, basis: TruncatedBasis) -> np.ndarray:
        vec = np.zeros(basis.dim)
        vec[basis.shell_slice(self.l)] = self.coefficients
        return vec


@dataclass(frozen=True)
class SubspaceLadder:
    label: VacuumLabel
    vectors: np.ndarray  # (k_max + 1, dim); row k is |k_w> in the global basis

    @property
    def k_max(self) -> int:
        return self.vectors.shape[0] - 1

    def __getitem__(self, k) -> np.ndarray:
        return self.vectors[k]


# --- linear algebra helpers --------------------------------------------------

def null_space(M: np.ndarray, ncols: int | None = None, scale: float | None = None) -> np.ndarray:
    """Orthonormal null-space basis of ``M`` with an explicit rank decision.

    A singular value ``s`` counts as zero when ``s / scale < 1e-10``; any value
    with ``1e-12 < s / scale < 1e-8`` raises :class:`RankAmbiguityError`.
    ``scale`` defaults to the largest singular value of ``M``.
    """
    M = np.atleast_2d(np.asarray(M))
    ncols = M.shape[1] if ncols is None else ncols
    if M.size == 0 or M.shape[0] == 0:
        return np.eye(ncols)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    smax = scale if scale is not None else (s.max() if s.size else 0.0)
    if smax == 0.0:
        return np.eye(ncols)
    rel = np.zeros(ncols)
    rel[: s.size] = s / smax
    lo, hi = AMBIGUOUS_BAND
    if np.any((rel > lo) & (rel < hi)):
        raise RankAmbiguityError(f"singular values {rel[(rel > lo) & (rel < hi)]} are ambiguous")
    return vh[rel < RANK_TOL].conj().T


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    mags = np.abs(vec)
    i = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[-1])
    return vec * (np.conj(vec[i]) / mags[i])


def canonical_basis(Q: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Deterministic orthonormal basis of ``span(Q)``.

    Gram-Schmidt of ``P e_i`` over canonical basis vectors ``e_i`` in order,
    where ``P`` is the projector onto ``span(Q)``; the result does not depend
    on which orthonormal ``Q`` was supplied.
    """
    p, k = Q.shape
    if k == 0:
        return Q
    P = Q @ Q.conj().T
    chosen: list[np.ndarray] = []
    for i in range(p):
        v = P[:, i].copy()
        for _ in range(2):
            for u in chosen:
                v -= u * (u.conj() @ v)
        nrm = np.linalg.norm(v)
        if nrm > tol:
            chosen.append(v / nrm)
            if len(chosen) == k:
                break
    if len(chosen) != k:
        raise StructuralError(f"canonical Gram-Schmidt found {len(chosen)} of {k} vectors")
    return np.column_stack([_fix_phase(u) for u in chosen])


def _block(op, basis: TruncatedBasis, row_shell: int, col_shell: int) -> np.ndarray:
    rows = basis.shell_slice(row_shell)
    cols = basis.shell_slice(col_shell)
    return op.matrix[rows, cols].toarray().real


# --- kernels -----------------------------------------------------------------

def kernel_of_A(basis: TruncatedBasis, l: int, ops: CollectiveOperators | None = None) -> np.ndarray:
    """Orthonormal basis (columns, shell coordinates) of ``ker A`` in shell ``l``.

    Lowering operators are exact on the truncated basis, so any
    ``0 <= l <= L_max`` is allowed.
    """
    if not 0 <= l <= basis.L_max:
        raise ValueError(f"shell {l} outside 0..{basis.L_max}")
    p = len(basis.shells[l])
    if l == 0:
        return np.eye(p)
    ops = CollectiveOperators.build(basis) if ops is None else ops
    Q = null_space(_block(ops.A, basis, l - 1, l), p)
    return canonical_basis(Q) if Q.shape[1] else Q


class VacuumStructure:
    """All vacua and ladders of a truncated basis.

    Built once per basis; everything is immutable afterwards.
    """

    def __init__(self, basis: TruncatedBasis, ops: CollectiveOperators | None = None):
        self.basis = basis
        self.ops = CollectiveOperators.build(basis) if ops is None else ops
        self.N = basis.N
        self.kernels: dict[int, np.ndarray] = {}
        self.base: dict[int, np.ndarray] = {}
        self.vacua: dict[VacuumLabel, VacuumState] = {}
        self._ladders: dict[VacuumLabel, SubspaceLadder] = {}
        self._build()

    # construction
    def _build(self):
        b = self.basis
        for m in range(b.L_max + 1):
            Q = kernel_of_A(b, m, self.ops)
            self.kernels[m] = Q
            if m >= 2 and Q.shape[1]:
                # ker A and ker D together from the stacked blocks; going through
                # D @ Q instead amplifies the error in Q at large l
                M = np.vstack([_block(self.ops.A, b, m - 1, m), _block(self.ops.D, b, m - 2, m)])
                base = null_space(M, len(b.shells[m]))
            else:
                base = Q
            self.base[m] = canonical_basis(base) if base.shape[1] else base
        for m in range(b.L_max + 1):
            for v_idx in range(self.base[m].shape[1]):
                vec = self.base[m][:, v_idx]
                s, l = 0, m
                while True:
                    label = VacuumLabel(l, s, v_idx + 1)
                    dtd = float(np.linalg.norm(_block(self.ops.D, b, l - 2, l) @ vec) ** 2) if l >= 2 else 0.0
                    self.vacua[label] = VacuumState(label, self.N, l, vec, dtd)
                    if l + 2 > b.L_max:
                        break
                    vec = _block(self.ops.Dd, b, l + 2, l) @ vec
                    nrm = np.linalg.norm(vec)
                    if nrm < 1e-12:
                        break
                    vec = vec / nrm
                    s, l = s + 1, l + 2
        self.vacua = dict(sorted(self.vacua.items()))
        for l in range(b.L_max + 1):
            self._check_shell(l)

    def _check_shell(self, l: int):
        V = self.shell_matrix(l)
        Q = self.kernels[l]
        if V.shape[1] != Q.shape[1]:
            raise StructuralError(f"shell {l}: {V.shape[1]} labelled vacua, kernel dimension {Q.shape[1]}")
        if V.shape[1] == 0:
            return
        if np.abs(V.T @ V - np.eye(V.shape[1])).max() > SPAN_TOL:
            raise StructuralError(f"shell {l}: vacua not orthonormal")
        if np.abs(V @ V.T - Q @ Q.T).max() > SPAN_TOL:
            raise StructuralError(f"shell {l}: vacua do not span ker A")

    # queries
    @property
    def labels(self) -> list[VacuumLabel]:
        return list(self.vacua)

    def labels_in_shell(self, l: int) -> list[VacuumLabel]:
        return [w for w in self.vacua if w.l == l]

    def shell_matrix(self, l: int) -> np.ndarray:
        cols = [self.vacua[w].coefficients for w in self.labels_in_shell(l)]
        p = len(self.basis.shells[l])
        return np.column_stack(cols) if cols else np.zeros((p, 0))

    def families(self) -> dict[tuple[int, int], list[VacuumLabel]]:
        fam: dict[tuple[int, int], list[VacuumLabel]] = {}
        for w in self.vacua:
            fam.setdefault(w.family, []).append(w)
        return fam

    def ladder(self, w) -> SubspaceLadder:
        w = VacuumLabel(*w)
        if w not in self._ladders:
            self._ladders[w] = build_ladder(self.vacua[w], self.basis, self.basis.L_max - w.l, self.ops)
        return self._ladders[w]

    def ladders(self) -> dict[VacuumLabel, SubspaceLadder]:
        return {w: self.ladder(w) for w in self.vacua}

    def counts(self) -> dict[int, tuple[int, int, int]]:
        """``{l: (m_N(l), n_N(l), p_N(l))}`` from the computed kernels."""
        return {l: (self.base[l].shape[1], self.kernels[l].shape[1], len(self.basis.shells[l]))
                for l in range(self.basis.L_max + 1)}

    def state_in_ladders(self) -> np.ndarray:
        """Matrix whose rows are all ladder states, sorted by (label, k)."""
        return np.vstack([self.ladder(w).vectors for w in self.vacua])


# --- module-level operations -------------------------------------------------

def classify_vacua(basis: TruncatedBasis, l: int, structure: VacuumStructure | None = None) -> list[VacuumState]:
    structure = VacuumStructure(basis) if structure is None else structure
    return [structure.vacua[w] for w in structure.labels_in_shell(l)]


def build_ladder(vacuum: VacuumState, basis: TruncatedBasis, k_max: int,
                 ops: CollectiveOperators | None = None) -> SubspaceLadder:
    """``|k> = (A^dag)^k / sqrt(k!) |0>`` for ``k = 0..k_max``."""
    if vacuum.l + k_max > basis.L_max:
        raise ValueError(f"ladder from l={vacuum.l} to k={k_max} exceeds L_max={basis.L_max}")
    ops = CollectiveOperators.build(basis) if ops is None else ops
    Ad = ops.Ad.matrix.real.tocsr()
    vecs = np.zeros((k_max + 1, basis.dim))
    vecs[0] = vacuum.embed(basis)
    for k in range(1, k_max + 1):
        vecs[k] = (Ad @ vecs[k - 1]) / math.sqrt(k)
    drift = np.abs(np.linalg.norm(vecs, axis=1) - 1.0)
    if drift.max() > LADDER_NORM_TOL:
        raise LadderError(f"ladder {vacuum.label}: norm drift {drift.max():.3g}")
    return SubspaceLadder(vacuum.label, vecs)


def vacuum_counts(N: int, L_max: int, structure: VacuumStructure | None = None) -> dict[int, tuple[int, int, int]]:
    """Per-shell ``(m_N, n_N, p_N)`` with both counting identities enforced.

    The convolution identity ``n_N(l) = sum_s m_N(l-2s)`` needs ``N >= 2``:
    for a single atom ``D`` vanishes identically and no D-ladder exists.
    """
    if structure is None:
        from .fock_basis import build_basis
        structure = VacuumStructure(build_basis(N, L_max))
    counts = structure.counts()
    for l, (m, n, p) in counts.items():
        p_prev = shell_dimension(N, l - 1) if l >= 1 else 0
        if n != p - p_prev:
            raise StructuralError(f"l={l}: n_N={n} but p_N(l)-p_N(l-1)={p - p_prev}")
        conv = sum(counts[l - 2 * s][0] for s in range(l // 2 + 1))
        if N >= 2 and n != conv:
            raise StructuralError(f"l={l}: n_N={n} but sum_s m_N(l-2s)={conv}")
    return counts


def dtd_ladder_sum(l: int, s: int, N: int) -> float:
    """``sum_{s'<s} [4(l-2s+2s')/N + 2(1-1/N)]``: the D^dag D eigenvalue of |0_{lsv}>."""
    return sum(4 * (l - 2 * s + 2 * sp) / N + 2 * (1 - 1 / N) for sp in range(s))


def dtd_inline_formula(l: int, s: int, N: int) -> float:
    """``(4ls - 4s^2 - 2s + 2Ns)/N``; kept for comparison, it overshoots by 4s/N."""
    return (4 * l * s - 4 * s * s - 2 * s + 2 * N * s) / N


def recurrence_vacuum(N: int, l: int, A_coeff=None) -> VacuumState:
    """Explicit vacuum built on ``a^dag_{l+1-m} |N-m, m-1, 0, ...>`` states.

    Coefficients follow the two-term recurrence for ``A = sum_n A_n a^dag_n a_{n+1}``
    (default ``A_n = sqrt(n+1)``) and the result is normalised.  Requires
    ``l == 0`` or ``2 <= l <= N``.
    """
    if not (l == 0 or 2 <= l <= N):
        raise ValueError(f"need l == 0 or 2 <= l <= N, got N={N}, l={l}")
    An = A_coeff or (lambda n: math.sqrt(n + 1))
    shell = enumerate_shell(N, l)
    coeffs = np.zeros(len(shell))
    if l == 0:
        coeffs[0] = 1.0
        return VacuumState(None, N, 0, coeffs)
    alpha = {l: 1.0}
    alpha[l - 1] = -(An(0) / An(1)) * math.sqrt(l) * math.sqrt(N - l + 1) / math.sqrt(l - 1) * alpha[l]
    for m in range(l - 2, 0, -1):
        alpha[m] = -(An(0) / An(l - m)) * math.sqrt(m) * math.sqrt(N - m) * alpha[m + 1]
    coeffs[shell.index((N - l, l))] = alpha[l]
    for m in range(1, l):
        occ = [0] * (l + 2)
        occ[0], occ[1] = N - m, m - 1
        occ[l + 1 - m] += 1
        coeffs[shell.index(occ)] += alpha[m]
    coeffs /= np.linalg.norm(coeffs)
    return VacuumState(None, N, l, coeffs)


def closed_form_vacuum(N: int, l: int) -> VacuumState:
    """Candidate closed-form vacua for ``l = 2, 3, 4``.

    Kept as reference vectors to compare against the numerical kernels.  The
    ``l = 2`` vector is exact; the ``l = 3`` and ``l = 4`` coefficient lists
    are not annihilated by ``A`` (see :func:`recurrence_vacuum` for exact ones).
    """
    shell = enumerate_shell(N, l)
    c = np.zeros(len(shell))
    sq = math.sqrt
    if l == 2:
        terms = {(N - 2, 2): 1.0, (N - 1, 0, 1): -sq(N - 1)}
        norm = 1 / sq(N)
    elif l == 3:
        terms = {(N - 3, 3): 1.0, (N - 2, 1, 1): -sq(3 * (N - 2)) / 2,
                 (N - 1, 0, 0, 1): sq((N - 1) * (N - 2)) / (2 * sq(2))}
        norm = sq(8) / sq(N ** 2 + 3 * N - 2)
    elif l == 4:
        terms = {(N - 4, 4): 1.0, (N - 3, 2, 1): -sq(2 * (N - 3)) / 3,
                 (N - 2, 1, 0, 1): 2 * sq((N - 2) * (N - 3)) / 3,
                 (N - 1, 0, 0, 0, 1): -sq((N - 1) * (N - 2) * (N - 3)) / 3}
        radicand = N ** 3 - 5 * N ** 2 - 3 * N + 21
        # this prefactor is imaginary for N = 4
        norm = 3 / sq(radicand) if radicand > 0 else None
    else:
        raise ValueError("closed forms exist for l = 2, 3, 4 only")
    if N < l:
        raise ValueError(f"closed form for l={l} needs N >= {l}")
    for occ, val in terms.items():
        c[shell.index(occ)] = val
    c *= norm if norm is not None else 1 / np.linalg.norm(c)
    return VacuumState(None, N, l, c)


def overlap_with_span(vector: np.ndarray, Q: np.ndarray) -> float:
    """``||Q^T v||^2 / ||v||^2``: 1 when ``v`` lies in ``span(Q)``."""
    v = np.asarray(vector)
    return float(np.linalg.norm(Q.conj().T @ v) ** 2 / np.linalg.norm(v) ** 2)


# --- export ------------------------------------------------------------------

def vacuum_table(structure: VacuumStructure) -> dict:
    b = structure.basis
    rows = []
    for w, vac in structure.vacua.items():
        rows.append({
            "l": w.l, "s": w.s, "v": w.v,
            "dtd": vac.dtd,
            "coefficients": [float(x) for x in vac.coefficients],
        })
    counts = structure.counts()
    return {
        "N": b.N, "L_max": b.L_max,
        "shell_states": {str(l): [list(s.occupations) for s in shell.states] for l, shell in enumerate(b.shells)},
        "counts": {str(l): {"m": m, "n": n, "p": p} for l, (m, n, p) in counts.items()},
        "vacua": rows,
    }


def export_vacuum_table(structure: VacuumStructure, path) -> dict:
    table = vacuum_table(structure)
    Path(path).write_text(json.dumps(table, indent=2, sort_keys=False) + "\n")
    return table
