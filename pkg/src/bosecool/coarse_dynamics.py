"""Slow-timescale description in terms of ladder populations and coherences.

After the fast ``A``-dynamics has thermalised every ladder, the state is
described by populations ``n_w = sum_k <k_w|rho|k_w>`` and cumulative
coherences ``r_ww' = sum_k <k_w|rho|k_w'>``.  The two-quantum ``B`` processes
then move weight between ``w = (l, s, v)`` and ``w + 2 = (l+2, s+1, v)`` with
matrix elements ``f_w = <0_{w-2}|B|0_w>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg as sla

from .bath_rates import RateSet
from .liouville import NumericalFailure, apply_L11, apply_L12
from .operators import CollectiveOperators
from .tables import write_csv, write_json
from .vacua import StructuralError, VacuumLabel, VacuumStructure

PROJECTION_TOL = 1e-8
F_TOL = 1e-8
LADDER_TOL = 1e-9


@dataclass
class CoarseState:
    """Populations ``n_w`` and coherences ``r_ww'`` (stored for ``w < w'``)."""

    populations: dict
    coherences: dict = field(default_factory=dict)

    def n(self, w) -> float:
        return self.populations.get(VacuumLabel(*w), 0.0)

    def r(self, w, w2) -> complex:
        w, w2 = VacuumLabel(*w), VacuumLabel(*w2)
        if w == w2:
            return complex(self.n(w))
        if w < w2:
            return self.coherences.get((w, w2), 0j)
        return np.conj(self.coherences.get((w2, w), 0j))

    @property
    def total(self) -> float:
        return float(sum(self.populations.values()))

    def family_masses(self) -> dict:
        out: dict = {}
        for w, n in self.populations.items():
            out[w.family] = out.get(w.family, 0.0) + n
        return dict(sorted(out.items()))

    def cauchy_schwarz_excess(self) -> float:
        """Largest ``|r_ww'| - sqrt(n_w n_w')`` (positive means a violation)."""
        worst = -math.inf
        for (w, w2), r in self.coherences.items():
            worst = max(worst, abs(r) - math.sqrt(max(self.n(w), 0) * max(self.n(w2), 0)))
        return worst

    @classmethod
    def single(cls, w) -> "CoarseState":
        return cls({VacuumLabel(*w): 1.0})


def f_closed(l: int, s: int, N: int) -> float:
    """``f_{ls}`` from the unrolled recurrence ``f^2_{l+2,s+1} = f^2_{ls} + 4l/N + 2 - 2/N``."""
    if not 0 <= s <= l // 2:
        raise ValueError(f"need 0 <= s <= l/2, got l={l}, s={s}")
    f2 = (2 - 2 / N) * s + 4 * ((l - 2 * s) * s + s * (s - 1)) / N
    return math.sqrt(max(f2, 0.0))


def f_numeric(structure: VacuumStructure, w) -> float:
    """``<0_{w-2}|B|0_w>`` from the explicit vacua (0 when ``s = 0``)."""
    w = VacuumLabel(*w)
    if w.s == 0:
        return 0.0
    b = structure.basis
    lo = structure.vacua[w.down()].embed(b)
    hi = structure.vacua[w].embed(b)
    return float(np.real(lo @ (structure.ops.B.matrix @ hi)))


@dataclass(frozen=True)
class FTable:
    N: int
    closed: dict  # (l, s) -> f
    numeric: dict  # VacuumLabel -> f

    @classmethod
    def build(cls, structure: VacuumStructure, tol: float = F_TOL) -> "FTable":
        N = structure.N
        closed, numeric = {}, {}
        for w in structure.labels:
            closed[(w.l, w.s)] = f_closed(w.l, w.s, N)
            numeric[w] = f_numeric(structure, w)
            if numeric[w] < -tol or abs(numeric[w] - closed[(w.l, w.s)]) > tol:
                raise StructuralError(f"f mismatch at {w}: numeric {numeric[w]!r}, closed {closed[(w.l, w.s)]!r}")
        return cls(N, closed, numeric)

    def max_deviation(self) -> float:
        return max((abs(f - self.closed[(w.l, w.s)]) for w, f in self.numeric.items()), default=0.0)


# --- ladder actions ----------------------------------------------------------

def apply_B_ladder(structure: VacuumStructure, k: int, w) -> dict:
    """Expansion of ``B|k_w>`` over ladder states ``{(label, k'): coefficient}``."""
    w = VacuumLabel(*w)
    out = {}
    if w.s > 0:
        out[(w.down(), k)] = f_closed(w.l, w.s, structure.N)
    if k >= 2:
        out[(w, k - 2)] = math.sqrt(k * (k - 1) / structure.N)
    return out


def v_coefficient(l: int, k: int, N: int) -> float:
    """``v_l(k)`` from ``v(k+1) = sqrt(k/(k+1)) v(k) + ((k+l)/N + 1/2)/sqrt(k+1)``, ``v(0) = 0``."""
    v = 0.0
    for j in range(k):
        v = math.sqrt(j / (j + 1)) * v + ((j + l) / N + 0.5) / math.sqrt(j + 1)
    return v


def apply_C_ladder(structure: VacuumStructure, k: int, w) -> dict:
    """Expansion of ``C|k_w>``; the couplings to shell ``l-1`` vacua are computed numerically."""
    w = VacuumLabel(*w)
    N, b = structure.N, structure.basis
    out = {}
    if w.s > 0:
        out[(w.down(), k + 1)] = math.sqrt(k + 1) / (2 * math.sqrt(N)) * f_closed(w.l, w.s, N)
    if w.l >= 1:
        c0 = structure.ops.C.matrix @ structure.vacua[w].embed(b)
        for w2 in structure.labels_in_shell(w.l - 1):
            c = float(np.real(structure.vacua[w2].embed(b) @ c0))
            if c != 0.0:
                out[(w2, k)] = out.get((w2, k), 0.0) + c
    if k >= 1:
        out[(w, k - 1)] = out.get((w, k - 1), 0.0) + v_coefficient(w.l, k, N)
    return out


def ladder_residual(structure: VacuumStructure, op, k: int, w, expansion: dict) -> float:
    """``|| op|k_w> - sum c |k'_w'> ||`` for an expansion from the functions above."""
    vec = op.matrix @ structure.ladder(w)[k]
    for (w2, k2), c in expansion.items():
        vec = vec - c * structure.ladder(w2)[k2]
    return float(np.linalg.norm(vec))


# --- projection and lift -----------------------------------------------------

class CoarseProjector:
    """Maps between density matrices and :class:`CoarseState` for one basis."""

    def __init__(self, structure: VacuumStructure):
        self.structure = structure
        self.basis = structure.basis
        self.labels = structure.labels
        self.pairs = list(combinations(self.labels, 2))
        rows, self.offsets, self.kmax = [], {}, {}
        pos = 0
        for w in self.labels:
            lad = structure.ladder(w)
            self.offsets[w] = pos
            self.kmax[w] = lad.k_max
            rows.append(lad.vectors)
            pos += lad.k_max + 1
        self.U = np.vstack(rows)
        err = np.abs(self.U @ self.U.T - np.eye(self.U.shape[0])).max()
        if self.U.shape[0] != self.basis.dim or err > PROJECTION_TOL:
            raise StructuralError(f"ladders are not a complete orthonormal basis (error {err:.3g})")

    def to_ladder(self, rho: np.ndarray) -> np.ndarray:
        return self.U @ rho @ self.U.T

    def project(self, rho: np.ndarray) -> CoarseState:
        t = self.to_ladder(rho)
        pops = {}
        for w in self.labels:
            o, K = self.offsets[w], self.kmax[w]
            pops[w] = float(np.real(np.trace(t[o:o + K + 1, o:o + K + 1])))
        coh = {}
        for w, w2 in self.pairs:
            o, o2 = self.offsets[w], self.offsets[w2]
            K = min(self.kmax[w], self.kmax[w2])
            coh[(w, w2)] = complex(np.trace(t[o:o + K + 1, o2:o2 + K + 1]))
        return CoarseState(pops, coh)

    def geometric_weights(self, K: int, beta_e: float) -> np.ndarray:
        x = math.exp(-beta_e)
        w = x ** np.arange(K + 1)
        return w / w.sum()

    def lift(self, cs: CoarseState, beta_e: float, tail_tol: float | None = 1e-10) -> np.ndarray:
        """Ladder-thermal density matrix for ``cs``.

        Every ladder (and every pair of ladders, over their common ``k`` range)
        carries geometric weights ``exp(-beta_e k)`` renormalised on the
        available range, so ``project(lift(cs)) == cs`` exactly.  With
        ``tail_tol`` set, the discarded geometric tail of every populated
        ladder must be below it.
        """
        x = math.exp(-beta_e)
        t = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        for w, n in cs.populations.items():
            if n == 0:
                continue
            K = self.kmax[w]
            if tail_tol is not None and x ** (K + 1) > tail_tol:
                raise ValueError(f"ladder {w}: geometric tail {x ** (K + 1):.3g} exceeds {tail_tol:g}")
            o = self.offsets[w]
            idx = np.arange(o, o + K + 1)
            t[idx, idx] = n * self.geometric_weights(K, beta_e)
        for (w, w2), r in cs.coherences.items():
            if r == 0:
                continue
            K = min(self.kmax[w], self.kmax[w2])
            p = self.geometric_weights(K, beta_e)
            i = np.arange(self.offsets[w], self.offsets[w] + K + 1)
            j = np.arange(self.offsets[w2], self.offsets[w2] + K + 1)
            t[i, j] = r * p
            t[j, i] = np.conj(r) * p
        return self.U.T @ t @ self.U

    def unprojected_weight(self, rho: np.ndarray) -> float:
        """Weight of ``rho`` outside the ladder span (zero when ladders are complete)."""
        t = self.to_ladder(rho)
        return float(abs(np.trace(rho).real - np.trace(t).real))


def random_coarse_state(labels, rng: np.random.Generator, coherent: bool = True) -> CoarseState:
    """Populations and coherences from a random positive Gram matrix over ``labels``."""
    labels = sorted(VacuumLabel(*w) for w in labels)
    n = len(labels)
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    G = X @ X.conj().T
    G /= np.trace(G).real
    pops = {w: float(G[i, i].real) for i, w in enumerate(labels)}
    coh = {}
    if coherent:
        for i, j in combinations(range(n), 2):
            coh[(labels[i], labels[j])] = complex(G[i, j])
    return CoarseState(pops, coh)


# --- rate equations ----------------------------------------------------------

class CoarseModel:
    """Linear generators of the population and coherence equations.

    Couplings use the closed-form ``f``; transitions to labels above the
    cutoff are dropped (``f = 0`` upward at the top).
    """

    def __init__(self, labels, N: int, rates: RateSet):
        self.labels = sorted(VacuumLabel(*w) for w in labels)
        self.index = {w: i for i, w in enumerate(self.labels)}
        self.pairs = list(combinations(self.labels, 2))
        self.pair_index = {p: i for i, p in enumerate(self.pairs)}
        self.N = N
        self.rates = rates
        self.f = {w: f_closed(w.l, w.s, N) for w in self.labels}
        self.Gn = self._population_generator()
        self.Gr_db, self.Gr_neg = self._coherence_generators()
        self.Gr = self.Gr_db + self.Gr_neg

    @classmethod
    def from_structure(cls, structure: VacuumStructure, rates: RateSet) -> "CoarseModel":
        return cls(structure.labels, structure.N, rates)

    def f_of(self, w) -> float:
        """``f_w`` (0 for labels outside the model, which drops cutoff transitions)."""
        return self.f.get(w, 0.0) if w.s >= 0 else 0.0

    def f_up(self, w) -> float:
        return self.f_of(w.up()) if w.up() in self.index else 0.0

    def _population_generator(self):
        g_dn, g_up = self.rates.gamma1_down, self.rates.gamma1_up
        G = np.zeros((len(self.labels),) * 2)
        for w, i in self.index.items():
            fw2, fup2 = self.f_of(w) ** 2, self.f_up(w) ** 2
            G[i, i] -= 2 * g_dn * fw2 + 2 * g_up * fup2
            if fup2:
                G[i, self.index[w.up()]] += 2 * g_dn * fup2
            if w.s > 0 and fw2:
                G[i, self.index[w.down()]] += 2 * g_up * fw2
        return G

    def _coherence_generators(self):
        g_dn, g_up = self.rates.gamma1_down, self.rates.gamma1_up
        n = len(self.pairs)
        db = np.zeros((n, n))
        neg = np.zeros((n, n))
        for (w, w2), i in self.pair_index.items():
            fw, fw2 = self.f_of(w), self.f_of(w2)
            uw, uw2 = self.f_up(w), self.f_up(w2)
            if uw and uw2:
                db[i, self.pair_index[(w.up(), w2.up())]] += 2 * g_dn * uw * uw2
            if fw and fw2:
                db[i, self.pair_index[(w.down(), w2.down())]] += 2 * g_up * fw * fw2
            db[i, i] -= 2 * g_dn * fw * fw2 + 2 * g_up * uw * uw2
            neg[i, i] = -g_dn * (fw - fw2) ** 2 - g_up * (uw - uw2) ** 2
        return db, neg

    # vector <-> state
    def to_vectors(self, cs: CoarseState):
        n = np.array([cs.n(w) for w in self.labels])
        r = np.array([cs.r(w, w2) for w, w2 in self.pairs], dtype=complex)
        return n, r

    def from_vectors(self, n, r) -> CoarseState:
        return CoarseState({w: float(n[i]) for i, w in enumerate(self.labels)},
                           {p: complex(r[i]) for i, p in enumerate(self.pairs)})

    def derivative(self, cs: CoarseState) -> CoarseState:
        n, r = self.to_vectors(cs)
        return self.from_vectors(self.Gn @ n, self.Gr @ r)

    def slow_rate(self, family=None) -> float:
        """Smallest non-zero relaxation rate of the population generator."""
        idx = range(len(self.labels)) if family is None else [self.index[w] for w in self.labels if w.family == family]
        idx = list(idx)
        ev = np.linalg.eigvals(self.Gn[np.ix_(idx, idx)]).real
        scale = max(abs(ev).max(), 1e-300)
        nz = -ev[ev < -1e-9 * scale]
        return float(nz.min()) if nz.size else 0.0


@dataclass
class CoarseTrajectory:
    times: np.ndarray
    n: np.ndarray  # (T, labels)
    r: np.ndarray  # (T, pairs)
    model: CoarseModel

    def state(self, i: int) -> CoarseState:
        return self.model.from_vectors(self.n[i], self.r[i])

    def population(self, w) -> np.ndarray:
        return self.n[:, self.model.index[VacuumLabel(*w)]]


def evolve_coarse(model: CoarseModel, cs0: CoarseState, t_final: float, n_samples: int = 101,
                  times=None, neg_tol: float = 1e-8) -> CoarseTrajectory:
    """Exact solution of the linear rate equations at the requested times."""
    times = np.linspace(0.0, t_final, n_samples) if times is None else np.asarray(times, dtype=float)
    n0, r0 = model.to_vectors(cs0)
    ns, rs = [], []
    for t in times:
        ns.append(sla.expm(model.Gn * t) @ n0)
        rs.append(sla.expm(model.Gr * t) @ r0)
    ns, rs = np.array(ns), np.array(rs)
    if ns.size and ns.min() < -neg_tol:
        raise NumericalFailure(f"negative coarse population {ns.min():.3g}")
    return CoarseTrajectory(times, ns, rs, model)


def stationary_populations(model: CoarseModel, cs0: CoarseState) -> CoarseState:
    """Detailed-balance state at ``beta'_e`` with each family keeping its initial mass."""
    x2 = math.exp(-2 * model.rates.beta_e_prime)
    masses = cs0.family_masses()
    pops = {}
    for fam in sorted({w.family for w in model.labels}):
        members = [w for w in model.labels if w.family == fam]
        weights = np.array([x2 ** w.s for w in members])
        weights = weights / weights.sum()
        for w, p in zip(members, weights):
            pops[w] = masses.get(fam, 0.0) * float(p)
    return CoarseState(pops, {p: 0j for p in model.pairs})


def detailed_balance_residual(model: CoarseModel, cs: CoarseState) -> float:
    """Largest edge flux imbalance ``|2G1dn f^2 n_{w+2} - 2G1up f^2 n_w|``."""
    worst = 0.0
    for w in model.labels:
        fu = model.f_up(w)
        if fu:
            down = 2 * model.rates.gamma1_down * fu ** 2 * cs.n(w.up())
            up = 2 * model.rates.gamma1_up * fu ** 2 * cs.n(w)
            worst = max(worst, abs(down - up))
    return worst


def coherence_spectrum(model: CoarseModel) -> dict:
    """Eigenvalues of the coherence generator and of its two parts.

    ``db`` keeps the ``f_w f_w'`` products and conserves probability like a
    kinetic equation; ``neg`` is the diagonal remainder
    ``-G1dn (f_w - f_w')^2 - G1up (f_{w+2} - f_{w'+2})^2``.
    """
    return {
        "full": np.linalg.eigvals(model.Gr) if model.pairs else np.zeros(0),
        "db": np.linalg.eigvals(model.Gr_db) if model.pairs else np.zeros(0),
        "neg": np.diag(model.Gr_neg).copy(),
        "neg_offdiag": float(np.abs(model.Gr_neg - np.diag(np.diag(model.Gr_neg))).max()) if model.pairs else 0.0,
    }


def db_symmetrization_residual(model: CoarseModel) -> float:
    """Asymmetry of ``P^-1/2 G_db P^1/2`` with the detailed-balance weights of each pair chain."""
    if not model.pairs:
        return 0.0
    x2 = model.rates.gamma1_up / model.rates.gamma1_down
    # weight of pair (w, w') grows by x2 per joint step up
    w = np.array([x2 ** min(p[0].s, p[1].s) for p in model.pairs])
    s = np.sqrt(w)
    S = model.Gr_db * s[None, :] / s[:, None]
    return float(np.abs(S - S.T).max())


def microscopic_derivative(projector: CoarseProjector, ops: CollectiveOperators, rates: RateSet,
                           cs: CoarseState, term: str = "L12", tail_tol: float | None = None) -> CoarseState:
    """``project(L lift(cs))`` for ``term`` in ``{"L11", "L12"}``."""
    rho = projector.lift(cs, rates.beta_e, tail_tol=tail_tol)
    fn = {"L11": apply_L11, "L12": apply_L12}[term]
    return projector.project(fn(rho, ops, rates))


def _max_abs(cs: CoarseState) -> float:
    vals = [abs(v) for v in cs.populations.values()] + [abs(v) for v in cs.coherences.values()]
    return max(vals, default=0.0)


def check_L11_vanishes(projector: CoarseProjector, ops: CollectiveOperators, rates: RateSet,
                       states=None, draws: int = 10, seed: int = 0, labels=None) -> float:
    """Largest projected ``L11`` derivative over ladder-thermal test states.

    Default test states: every single population, every single unit
    coherence, and ``draws`` random Gram-matrix states (fixed ``seed``), over
    ``labels`` (default: all labels).
    """
    labels = projector.labels if labels is None else sorted(VacuumLabel(*w) for w in labels)
    if states is None:
        states = [CoarseState.single(w) for w in labels]
        states += [CoarseState({}, {(w, w2): 1.0 + 0.5j}) for w, w2 in combinations(labels, 2)]
        rng = np.random.default_rng(seed)
        states += [random_coarse_state(labels, rng) for _ in range(draws)]
    return max(_max_abs(microscopic_derivative(projector, ops, rates, cs, "L11")) for cs in states)


# --- output ------------------------------------------------------------------

def coherence_columns(pairs) -> list[str]:
    cols = []
    for w, w2 in pairs:
        cols += [f"r_{w}__{w2}_re", f"r_{w}__{w2}_im"]
    return cols


def coarse_trajectory_table(traj: CoarseTrajectory):
    """Header and rows in the trajectory layout (drift = total-mass error, no leakage)."""
    m = traj.model
    header = ["t", "trace_drift", "leak_top2"] + [f"n_{w}" for w in m.labels] + coherence_columns(m.pairs)
    rows = []
    for i, t in enumerate(traj.times):
        row = [t, abs(traj.n[i].sum() - traj.n[0].sum()), 0.0] + list(traj.n[i])
        for r in traj.r[i]:
            row += [r.real, r.imag]
        rows.append(row)
    return header, rows


def full_trajectory_table(traj, projector: CoarseProjector):
    """Header and rows for a full master-equation run, projected on the ladders."""
    labels, pairs = projector.labels, projector.pairs
    header = ["t", "trace_drift", "leak_top2"] + [f"n_{w}" for w in labels] + coherence_columns(pairs)
    rows = []
    for t, d, lk, rho in zip(traj.times, traj.trace_drift, traj.leak_top2, traj.states):
        cs = projector.project(rho)
        row = [t, d, lk] + [cs.n(w) for w in labels]
        for p in pairs:
            r = cs.coherences[p]
            row += [r.real, r.imag]
        rows.append(row)
    return header, rows


def write_coarse_csv(traj: CoarseTrajectory, path):
    return write_csv(path, *coarse_trajectory_table(traj))


def write_full_csv(traj, projector: CoarseProjector, path):
    return write_csv(path, *full_trajectory_table(traj, projector))


def stationary_json(model: CoarseModel, cs: CoarseState) -> dict:
    return {
        "populations": {str(w): cs.n(w) for w in model.labels},
        "beta_e_prime": model.rates.beta_e_prime,
        "family_masses": {f"{m}.{v}": mass for (m, v), mass in cs.family_masses().items()},
    }


def write_stationary_json(model: CoarseModel, cs: CoarseState, path):
    return write_json(path, stationary_json(model, cs))
