"""Lamb-Dicke master equation on the truncated Fock basis.

Density matrices are plain complex ``(dim, dim)`` numpy arrays.  The
generator is applied matrix-free with sparse-dense products; for small bases
(``dim <= 40``) a dense superoperator can be formed for spectra, steady states
and exact RK4 propagators.

Vectorisation convention: ``vec(rho) = rho.reshape(-1)`` (row major), so
``vec(L rho R) = kron(L, R.T) vec(rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .bath_rates import BathSpec, RateSet, bose_occupation, gamma_exact
from .fock_basis import TruncatedBasis
from .operators import CollectiveOperators, SparseOperator, bilinear

TERMS = ("L0", "L11", "L12")
EXACT = "exact"
DENSE_SUPEROP_MAX_DIM = 40


class NumericalFailure(RuntimeError):
    """Integration aborted (trace drift or cutoff leakage beyond threshold)."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


def _mat(op):
    return op.matrix if isinstance(op, SparseOperator) else op


def lindblad_apply(rho: np.ndarray, jump, rate: float) -> np.ndarray:
    """``rate * (2 L rho L^dag - L^dag L rho - rho L^dag L)``."""
    L = _mat(jump)
    Ld = L.conj().T.tocsr()
    LdL = (Ld @ L).tocsr()
    LrhoLd = L @ (L @ rho.conj().T).conj().T
    return rate * (2 * LrhoLd - LdL @ rho - (LdL @ rho.conj().T).conj().T)


def _left_right(L, rho, R):
    """``L @ rho @ R`` for sparse ``L``, ``R``."""
    return L @ (R.T @ rho.T).T


def apply_L0(rho, ops: CollectiveOperators, rates: RateSet) -> np.ndarray:
    return lindblad_apply(rho, ops.A, rates.gamma_down) + lindblad_apply(rho, ops.Ad, rates.gamma_up)


def apply_L11(rho, ops: CollectiveOperators, rates: RateSet) -> np.ndarray:
    """Cross terms between ``A`` and ``C`` with ``-Gamma eta^2`` prefactors."""
    A, C = ops.A.matrix, ops.C.matrix
    Ad, Cd = ops.Ad.matrix, ops.Cd.matrix
    down = (2 * (_left_right(A, rho, Cd) + _left_right(C, rho, Ad))
            - (Cd @ A + Ad @ C) @ rho - _left_right(sp.identity(rho.shape[0]), rho, Cd @ A + Ad @ C))
    up = (2 * (_left_right(Ad, rho, C) + _left_right(Cd, rho, A))
          - (C @ Ad + A @ Cd) @ rho - _left_right(sp.identity(rho.shape[0]), rho, C @ Ad + A @ Cd))
    eta2 = rates.eta ** 2
    return -rates.gamma_down * eta2 * down - rates.gamma_up * eta2 * up


def apply_L12(rho, ops: CollectiveOperators, rates: RateSet) -> np.ndarray:
    return lindblad_apply(rho, ops.B, rates.gamma1_down) + lindblad_apply(rho, ops.Bd, rates.gamma1_up)


def exact_jump(basis: TruncatedBasis, alpha: int, eta_alpha: float) -> SparseOperator:
    """``sum_m conj(gamma_{m, m+alpha}) a^dag_m a_{m+alpha}`` with the exact coupling."""
    mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for m in range(basis.L_max - alpha + 1):
        g = gamma_exact(m, m + alpha, eta_alpha)
        mat = mat + np.conj(g) * bilinear(basis, m, m + alpha).matrix
    return SparseOperator(basis, mat.tocsr(), -alpha, f"X{alpha}")


class Generator:
    """Sum of the enabled Liouvillian terms, with cached sparse products.

    ``terms`` is any subset of ``("L0", "L11", "L12")``, or ``("exact",)``
    for the one- and two-quantum Liouvillians with the exact (non-expanded)
    coupling, which needs the :class:`BathSpec`.
    """

    def __init__(self, ops: CollectiveOperators, rates: RateSet, terms: Iterable[str] = TERMS,
                 spec: BathSpec | None = None):
        self.ops = ops
        self.basis = ops.basis
        self.rates = rates
        self.terms = tuple(terms)
        unknown = set(self.terms) - set(TERMS) - {EXACT}
        if unknown:
            raise ValueError(f"unknown Liouvillian terms {sorted(unknown)}")
        if EXACT in self.terms and len(self.terms) > 1:
            raise ValueError("the exact-coupling mode replaces all expanded terms")
        if EXACT in self.terms and spec is None:
            raise ValueError("exact-coupling mode needs the BathSpec")
        self.spec = spec
        dim = self.basis.dim
        self._I = sp.identity(dim, dtype=complex, format="csr")
        self._pieces = []
        for t in self.terms:
            self._pieces.extend(self._term_pieces(t))

    def _lindblad_pieces(self, L, rate):
        if rate == 0:
            return []
        L = _mat(L).tocsr()
        Ld = L.conj().T.tocsr()
        LdL = (Ld @ L).tocsr()
        return [(L, Ld, 2 * rate), (LdL, self._I, -rate), (self._I, LdL, -rate)]

    def _term_pieces(self, term):
        o, r = self.ops, self.rates
        if term == "L0":
            return self._lindblad_pieces(o.A, r.gamma_down) + self._lindblad_pieces(o.Ad, r.gamma_up)
        if term == "L12":
            return self._lindblad_pieces(o.B, r.gamma1_down) + self._lindblad_pieces(o.Bd, r.gamma1_up)
        if term == "L11":
            A, C, Ad, Cd = o.A.matrix, o.C.matrix, o.Ad.matrix, o.Cd.matrix
            kd = -r.gamma_down * r.eta ** 2
            ku = -r.gamma_up * r.eta ** 2
            Md = (Cd @ A + Ad @ C).tocsr()
            Mu = (C @ Ad + A @ Cd).tocsr()
            out = []
            if kd:
                out += [(A, Cd, 2 * kd), (C, Ad, 2 * kd), (Md, self._I, -kd), (self._I, Md, -kd)]
            if ku:
                out += [(Ad, C, 2 * ku), (Cd, A, 2 * ku), (Mu, self._I, -ku), (self._I, Mu, -ku)]
            return out
        # exact coupling
        spec = self.spec
        out = []
        for alpha in (1, 2):
            X = exact_jump(self.basis, alpha, spec.eta_alpha(alpha)).matrix
            # X already carries the collective sqrt(N) of A or B
            g = spec.kappa_scale * spec.density(alpha)
            n = bose_occupation(spec, alpha)
            out += self._lindblad_pieces(X, g * (n + 1))
            out += self._lindblad_pieces(X.conj().T.tocsr(), g * n)
        return out

    @property
    def gamma_max(self) -> float:
        r = self.rates
        vals = [0.0]
        if "L0" in self.terms or EXACT in self.terms:
            vals += [r.gamma_down, r.gamma_up]
        if "L11" in self.terms:
            vals += [r.gamma_down * r.eta ** 2, r.gamma_up * r.eta ** 2]
        if "L12" in self.terms or EXACT in self.terms:
            vals += [r.gamma1_down, r.gamma1_up]
        return max(vals)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for L, R, c in self._pieces:
            if L is self._I:
                out += c * (R.T @ rho.T).T
            elif R is self._I:
                out += c * (L @ rho)
            else:
                out += c * (L @ (R.T @ rho.T).T)
        return out

    __call__ = apply

    def superoperator(self, force: bool = False) -> np.ndarray:
        """Dense ``dim^2 x dim^2`` matrix of the generator (row-major vec)."""
        dim = self.basis.dim
        if dim > DENSE_SUPEROP_MAX_DIM and not force:
            raise ValueError(f"dense superoperator limited to dim <= {DENSE_SUPEROP_MAX_DIM} (got {dim})")
        S = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
        for L, R, c in self._pieces:
            S = S + c * sp.kron(L, R.T, format="csr")
        return S.toarray()


# --- states ------------------------------------------------------------------

def pure_state(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def thermal_state(basis: TruncatedBasis, beta_hw: float) -> np.ndarray:
    """``exp(-beta H) / Z`` on the truncated basis (``H`` = trap energy)."""
    w = np.exp(-beta_hw * (basis.energies - basis.energies.min()))
    return np.diag(w / w.sum()).astype(complex)


def top_shell_population(rho: np.ndarray, basis: TruncatedBasis, shells: int = 2) -> float:
    mask = basis.energies > basis.L_max - shells
    return float(np.real(np.diag(rho))[mask].sum())


def hermitize(rho):
    return 0.5 * (rho + rho.conj().T)


def min_eigenvalue(rho) -> float:
    return float(np.linalg.eigvalsh(hermitize(rho))[0])


# --- integration -------------------------------------------------------------

@dataclass
class EvolutionConfig:
    """RK4 settings.

    ``dt=None`` picks ``0.01 / Gamma_max``; an explicit ``dt`` larger than
    that is rejected.  ``record_every`` counts steps between samples.
    ``max_leak=None`` disables the top-shell leakage abort.
    """

    t_final: float
    dt: float | None = None
    record_every: int = 10
    max_leak: float | None = 1e-6
    max_drift_rate: float = 1e-6
    positivity_tol: float = 1e-8
    check_positivity: bool = True
    keep_states: bool = True
    propagator: str = "auto"  # "auto" | "dense" | "matrix-free"

    def resolve_dt(self, gamma_max: float) -> float:
        limit = 0.01 / gamma_max if gamma_max > 0 else math.inf
        if self.dt is None:
            if not math.isfinite(limit):
                raise ValueError("no enabled rates: give dt explicitly")
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds 0.01/Gamma_max={limit}")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        return self.dt


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    trace_drift: np.ndarray
    leak_top2: np.ndarray
    min_eig: np.ndarray
    dt: float
    status: str = "ok"
    message: str = ""
    positivity_violations: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _rk4_step(f, rho, h):
    k1 = f(rho)
    k2 = f(rho + 0.5 * h * k1)
    k3 = f(rho + 0.5 * h * k2)
    k4 = f(rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_propagator(S: np.ndarray, h: float, steps: int = 1) -> np.ndarray:
    """Matrix of ``steps`` RK4 steps for the linear system ``x' = S x``."""
    X = h * S
    P = np.eye(S.shape[0], dtype=complex)
    term = np.eye(S.shape[0], dtype=complex)
    for j in range(1, 5):
        term = term @ X / j
        P = P + term
    return np.linalg.matrix_power(P, steps)


def evolve(rho0: np.ndarray, config: EvolutionConfig, generator: Generator,
           observer: Callable | None = None) -> Trajectory:
    """Fixed-step RK4 integration of ``d rho/dt = generator(rho)``.

    Every sample is re-Hermitised and renormalised; the trace error removed at
    each sample is logged as ``trace_drift``.  Raises :class:`NumericalFailure`
    when the drift rate or the top-shell leakage exceed their limits.
    """
    basis = generator.basis
    dt = config.resolve_dt(generator.gamma_max)
    n_steps = int(math.ceil(config.t_final / dt - 1e-9))
    stride = max(1, int(config.record_every))
    mode = config.propagator
    if mode == "auto":
        mode = "dense" if basis.dim <= DENSE_SUPEROP_MAX_DIM else "matrix-free"
    P_stride = P_rest = None
    if mode == "dense":
        S = generator.superoperator()
        P_stride = rk4_propagator(S, dt, stride)

    rho = hermitize(np.asarray(rho0, dtype=complex))
    rho = rho / np.trace(rho).real
    times, states, drift, leak, mins = [0.0], [rho.copy()], [0.0], [top_shell_population(rho, basis)], []
    mins.append(min_eigenvalue(rho) if config.check_positivity else np.nan)
    if observer is not None:
        observer(0.0, rho)
    traj = Trajectory(np.array(times), states, np.array(drift), np.array(leak), np.array(mins), dt)
    viol = 0
    step = 0
    while step < n_steps:
        todo = min(stride, n_steps - step)
        if mode == "dense":
            if todo == stride:
                P = P_stride
            else:
                P_rest = rk4_propagator(S, dt, todo) if P_rest is None else P_rest
                P = P_rest
            rho = (P @ rho.reshape(-1)).reshape(rho.shape)
        else:
            for _ in range(todo):
                rho = _rk4_step(generator.apply, rho, dt)
        step += todo
        t = step * dt
        tr = np.trace(rho).real
        d = abs(tr - 1.0)
        rho = hermitize(rho) / tr
        lk = top_shell_population(rho, basis)
        me = min_eigenvalue(rho) if config.check_positivity else np.nan
        if config.check_positivity and me < -config.positivity_tol:
            viol += 1
        times.append(t)
        drift.append(d)
        leak.append(lk)
        mins.append(me)
        if config.keep_states or step >= n_steps:
            states.append(rho.copy())
        if observer is not None:
            observer(t, rho)
        failure = None
        if d / (todo * dt) > config.max_drift_rate:
            failure = f"trace drift {d:.3g} over {todo * dt:.3g} time units"
        elif config.max_leak is not None and lk > config.max_leak:
            failure = f"top-shell population {lk:.3g} exceeds {config.max_leak:.3g}"
        if failure:
            traj = Trajectory(np.array(times), states, np.array(drift), np.array(leak), np.array(mins),
                              dt, "failed", failure, viol)
            raise NumericalFailure(failure, traj)
    status = "ok" if viol == 0 else "positivity"
    msg = "" if viol == 0 else f"{viol} samples with eigenvalue below -{config.positivity_tol:g}"
    return Trajectory(np.array(times), states, np.array(drift), np.array(leak), np.array(mins),
                      dt, status, msg, viol)


# --- stationary states -------------------------------------------------------

def stationary_projector(S: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Spectral projector of ``S`` onto its kernel (the ``t -> inf`` map).

    Valid when the zero eigenvalue is semisimple, which holds for generators
    whose non-zero spectrum lies in the open left half plane.
    """
    R = sla.null_space(S, rcond=rcond)
    Lh = sla.null_space(S.conj().T, rcond=rcond).conj().T
    if R.shape[1] != Lh.shape[0]:
        raise ArithmeticError("left and right kernels differ in dimension")
    return R @ np.linalg.solve(Lh @ R, Lh)


def steady_state(rho0: np.ndarray, generator: Generator, rcond: float = 1e-10) -> np.ndarray:
    """Long-time limit of ``exp(t L) rho0`` from the dense superoperator."""
    S = generator.superoperator()
    P = stationary_projector(S, rcond)
    rho = (P @ np.asarray(rho0, dtype=complex).reshape(-1)).reshape(rho0.shape)
    rho = hermitize(rho)
    return rho / np.trace(rho).real


def guard_band_norm(X: np.ndarray, basis: TruncatedBasis, band: int = 2) -> float:
    """Trace norm of ``X`` restricted to shells ``l <= L_max - band``."""
    m = basis.guard_mask(band)
    sub = X[np.ix_(m, m)]
    return float(np.abs(np.linalg.svd(sub, compute_uv=False)).sum())
