"""Bath parameters, collective cooling rates and the trap-bath coupling.

Internal units: hbar = omega = 1 and lengths in units of the ground-state
size ``a`` of the trap, so the Lamb-Dicke parameter of a bath quantum that
carries ``alpha`` trap quanta is ``eta_alpha = k_alpha * a``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

MASSIVE = "massive"
MASSLESS = "massless"
DISPERSIONS = (MASSIVE, MASSLESS)


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BathSpec:
    """Physical bath parameters.

    Parameters
    ----------
    N : int
        Number of trapped atoms.
    eta : float
        Lamb-Dicke parameter for a one-quantum exchange.
    beta_hw : float
        Inverse bath temperature in units of the trap quantum; ``inf`` is a
        zero-temperature bath.
    beta_mu : float
        ``beta * mu``; must be non-positive.  The fugacity is ``exp(beta_mu)``.
    kappa_scale : float
        Overall coupling normalisation.  Use :meth:`with_gamma_down` to fix
        it from a target one-quantum cooling rate instead.
    dispersion : {"massive", "massless"}
        Massive bath particles have ``k_alpha ~ sqrt(alpha)`` and density
        factor ``alpha**-0.5``; massless quanta have ``k_alpha ~ alpha`` and a
        constant density factor.
    """

    N: int
    eta: float
    beta_hw: float
    beta_mu: float = 0.0
    kappa_scale: float = 1.0
    dispersion: str = MASSIVE
    omega: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.beta_hw > 0:
            raise ValueError("beta_hw must be > 0")
        if self.beta_mu > 0:
            raise ValueError("beta_mu must be <= 0")
        if not self.kappa_scale > 0:
            raise ValueError("kappa_scale must be > 0")
        if self.dispersion not in DISPERSIONS:
            raise ValueError(f"dispersion must be one of {DISPERSIONS}")

    @property
    def z(self) -> float:
        return math.exp(self.beta_mu)

    fugacity = z

    def eta_alpha(self, alpha: int) -> float:
        alpha = abs(alpha)
        if self.dispersion == MASSIVE:
            return math.sqrt(alpha) * self.eta
        return alpha * self.eta

    def density(self, alpha: int) -> float:
        alpha = abs(alpha)
        return alpha ** -0.5 if self.dispersion == MASSIVE else 1.0

    def ld_valid(self, alpha_max: int = 2) -> bool:
        return self.eta_alpha(alpha_max) < 1.0

    def with_gamma_down(self, gamma_down: float) -> "BathSpec":
        """Copy with ``kappa_scale`` chosen so that ``compute_rates(...).gamma_down == gamma_down``."""
        unit = replace(self, kappa_scale=1.0)
        return replace(self, kappa_scale=gamma_down / compute_rates(unit).gamma_down)


@dataclass(frozen=True)
class RateSet:
    gamma_down: float
    gamma_up: float
    gamma1_down: float
    gamma1_up: float
    beta_e: float
    beta_e_prime: float
    eta: float = 0.0  # prefactor of the A-C cross terms

    @property
    def gamma_max(self) -> float:
        return max(self.gamma_down, self.gamma_up, self.gamma1_down, self.gamma1_up)

    def as_dict(self) -> dict:
        return asdict(self)


def bose_occupation(spec: BathSpec, alpha: int) -> float:
    """Mean occupation of bath modes with energy ``alpha`` trap quanta."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    x = spec.z * math.exp(-alpha * spec.beta_hw)
    assert x < 1.0, "Bose occupation diverges"
    return x / (1.0 - x)


def compute_rates(spec: BathSpec) -> RateSet:
    n1 = bose_occupation(spec, 1)
    n2 = bose_occupation(spec, 2)
    base1 = spec.kappa_scale * spec.N * spec.eta_alpha(1) ** 2 * spec.density(1)
    base2 = spec.kappa_scale * spec.N * spec.eta_alpha(2) ** 4 / 4 * spec.density(2)
    return RateSet(
        gamma_down=base1 * (n1 + 1),
        gamma_up=base1 * n1,
        gamma1_down=base2 * (n2 + 1),
        gamma1_up=base2 * n2,
        beta_e=spec.beta_hw - spec.beta_mu,
        beta_e_prime=spec.beta_hw - spec.beta_mu / 2,
        eta=spec.eta_alpha(1),
    )


# --- coupling matrix elements -------------------------------------------------

def gamma_ld(n: int, n_prime: int, alpha: int, order: int, eta: float,
             dispersion: str = MASSIVE) -> complex:
    """Order-``order`` Lamb-Dicke term of ``<n|exp(-i k_alpha x)|n'>``.

    The ``kappa / 2pi`` prefactor is folded into the rate normalisation.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    e = eta * (math.sqrt(abs(alpha)) if dispersion == MASSIVE else abs(alpha))
    if order == 0:
        return complex(n == n_prime)
    if order == 1:
        val = 0.0
        if n == n_prime - 1:
            val += math.sqrt(n + 1)
        if n == n_prime + 1:
            val += math.sqrt(n)
        return -1j * e * val
    val = 0.0
    if n == n_prime - 2:
        val += math.sqrt((n + 2) * (n + 1))
    if n == n_prime:
        val += 2 * n + 1
    if n == n_prime + 2:
        val += math.sqrt(n * (n - 1))
    return complex(-(e * e / 2) * val)


def gamma_ld_sum(n: int, n_prime: int, eta_alpha: float, max_order: int = 2) -> complex:
    """Sum of the Lamb-Dicke terms up to ``max_order`` for a given ``eta_alpha``."""
    return sum(gamma_ld(n, n_prime, 1, k, eta_alpha) for k in range(max_order + 1))


def _hermite_functions(nmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal Hermite functions without the Gaussian factor, rows 0..nmax."""
    out = np.zeros((nmax + 1, x.size))
    out[0] = math.pi ** -0.25
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, nmax):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def gamma_exact(n: int, n_prime: int, k: float, tol: float = 1e-12, max_nodes: int = 400) -> complex:
    """``<n|exp(-i k x)|n'>`` for the trap eigenfunctions, by quadrature.

    ``k`` is in units of ``1/a`` (so ``k = eta_alpha``).  Gauss-Hermite
    quadrature in the oscillator variable, doubling the node count until two
    successive estimates agree to ``tol``.
    """
    if max(n, n_prime) > 40:
        raise ValueError("quadrature oracle is validated for n, n' <= 40")
    # x = a (b + b^dag) = sqrt(2) a xi in oscillator units
    c = math.sqrt(2.0) * k
    nodes = max(n, n_prime) + 24
    prev = None
    while nodes <= max_nodes:
        xi, w = np.polynomial.hermite.hermgauss(nodes)
        h = _hermite_functions(max(n, n_prime), xi)
        val = complex(np.sum(w * h[n] * h[n_prime] * np.exp(-1j * c * xi)))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        nodes *= 2
    raise QuadratureError(f"no convergence for n={n}, n'={n_prime}, k={k}")


def displacement_element(m: int, n: int, alpha: complex) -> complex:
    """``<m|exp(alpha b^dag - alpha^* b)|n>`` from the associated-Laguerre closed form."""
    x = abs(alpha) ** 2
    if m >= n:
        pref = math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
        return pref * alpha ** (m - n) * math.exp(-x / 2) * eval_genlaguerre(n, m - n, x)
    pref = math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
    return pref * (-np.conj(alpha)) ** (n - m) * math.exp(-x / 2) * eval_genlaguerre(m, n - m, x)


def ld_error_slope(etas=(0.05, 0.1, 0.2), n_max: int = 6) -> tuple[float, list[float]]:
    """Log-log slope of ``max |gamma_exact - LD sum|`` against ``eta``.

    The maximum runs over ``0 <= n, n' <= n_max``.
    """
    errs = []
    for eta in etas:
        errs.append(max(abs(gamma_exact(n, m, eta) - gamma_ld_sum(n, m, eta))
                        for n in range(n_max + 1) for m in range(n_max + 1)))
    slope = np.polyfit(np.log(etas), np.log(errs), 1)[0]
    return float(slope), errs
