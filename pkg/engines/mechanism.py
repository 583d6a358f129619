"""
Branching mechanisms ψ and the checks every other module relies on.

Closed-form variants carry exact ψ, ψ', ψ'' (valid for complex λ with
Re λ > 0 on principal branches), their regular-variation index at zero,
their growth exponent at infinity and, where one exists, a closed form for
ϕ(z) = ∫_z^∞ dξ/ψ(ξ) and its inverse. General mechanisms wrap a Lévy triplet
and estimate the same quantities numerically; those estimates are cached per
mechanism because mechanisms are immutable and hashable.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import ClassVar, Optional, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn, zeta

from config.errors import (
    BoundaryCaseError,
    IndeterminateError,
    NotRegularlyVaryingError,
    TrivialMechanismError,
)
from config.terminal_logger import terminal_logger
from engines.levy import LevyTriplet
from tools.numerics import aitken, quad_checked, quad_complex


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class BranchingMechanism(ABC):
    """ψ(λ) = λ^{1+α} L(1/λ) near zero; subclasses declare what they know exactly"""

    variant: ClassVar[str] = "abstract"

    @abstractmethod
    def psi(self, lam):
        ...

    @abstractmethod
    def dpsi(self, lam):
        ...

    @abstractmethod
    def d2psi(self, lam):
        ...

    def psi_over_lambda_at_log(self, w):
        """ψ(e^w)/e^w, the Bernstein factor, for real or complex w"""
        lam = np.exp(w)
        return self.psi(lam) / lam

    # Declared facts: None means "estimate numerically"
    @property
    def declared_alpha(self) -> Optional[float]:
        return None

    @property
    def declared_growth(self) -> Optional[float]:
        return None

    @property
    def declared_rho(self) -> Optional[float]:
        return None

    def phi_at_log(self, w):
        """Closed or variant-specific ϕ(e^w); None when only generic quadrature applies"""
        return None

    def log_varphi(self, t):
        """Closed log φ(t); None when φ must be found by root-finding"""
        return None

    def slowly_varying_at_log(self, log_z):
        """L(e^{log z}) with L(z) = z^{1+α} ψ(1/z)"""
        alpha = rv_index_at_zero(self)
        lam = np.exp(-log_z)
        return self.psi(lam) * np.exp((1.0 + alpha) * log_z)

    @property
    def sigma(self) -> float:
        """ψ''(0+), infinite unless the mechanism has a finite second moment"""
        return math.inf

    def describe(self) -> dict:
        return {"variant": self.variant}


@dataclass(frozen=True)
class Stable(BranchingMechanism):
    """ψ(λ) = cλ^{1+α}"""

    c: float = 1.0
    alpha: float = 1.0
    variant: ClassVar[str] = "stable"

    def __post_init__(self):
        if self.c <= 0 or not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"Stable needs c > 0 and alpha in (0, 1], got c={self.c}, alpha={self.alpha}")

    def psi(self, lam):
        return self.c * lam ** (1.0 + self.alpha)

    def dpsi(self, lam):
        return self.c * (1.0 + self.alpha) * lam ** self.alpha

    def d2psi(self, lam):
        return self.c * (1.0 + self.alpha) * self.alpha * lam ** (self.alpha - 1.0)

    def psi_over_lambda_at_log(self, w):
        return self.c * np.exp(self.alpha * w)

    @property
    def declared_alpha(self):
        return self.alpha

    @property
    def declared_growth(self):
        return 1.0 + self.alpha

    @property
    def declared_rho(self):
        return 0.0

    def phi_at_log(self, w):
        return np.exp(-self.alpha * w) / (self.c * self.alpha)

    def log_varphi(self, t):
        return -np.log(self.c * self.alpha * t) / self.alpha

    def slowly_varying_at_log(self, log_z):
        return self.c + 0.0 * log_z

    @property
    def sigma(self):
        return 2.0 * self.c if self.alpha == 1.0 else math.inf

    def describe(self):
        return {"variant": self.variant, "c": self.c, "alpha": self.alpha}


@dataclass(frozen=True)
class Quadratic(BranchingMechanism):
    """Feller diffusion ψ(λ) = bλ², σ = 2b"""

    b: float = 1.0
    variant: ClassVar[str] = "quadratic"

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError(f"Quadratic needs b > 0, got {self.b}")

    def psi(self, lam):
        return self.b * lam * lam

    def dpsi(self, lam):
        return 2.0 * self.b * lam

    def d2psi(self, lam):
        return 2.0 * self.b + 0.0 * lam

    def psi_over_lambda_at_log(self, w):
        return self.b * np.exp(w)

    @property
    def declared_alpha(self):
        return 1.0

    @property
    def declared_growth(self):
        return 2.0

    @property
    def declared_rho(self):
        return 0.0

    def phi_at_log(self, w):
        return np.exp(-w) / self.b

    def log_varphi(self, t):
        return -np.log(self.b * t)

    def slowly_varying_at_log(self, log_z):
        return self.b + 0.0 * log_z

    @property
    def sigma(self):
        return 2.0 * self.b

    def describe(self):
        return {"variant": self.variant, "b": self.b}


@dataclass(frozen=True)
class StableSum(BranchingMechanism):
    """ψ(λ) = λ^{1+β} + λ^{1+γ}, 0 < γ < β ≤ 1; index γ at zero, growth 1+β"""

    beta: float = 1.0
    gamma: float = 0.5
    variant: ClassVar[str] = "stable_sum"

    def __post_init__(self):
        if not 0.0 < self.gamma < self.beta <= 1.0:
            raise ValueError(f"StableSum needs 0 < gamma < beta <= 1, got beta={self.beta}, gamma={self.gamma}")

    def psi(self, lam):
        return lam ** (1.0 + self.beta) + lam ** (1.0 + self.gamma)

    def dpsi(self, lam):
        return (1.0 + self.beta) * lam ** self.beta + (1.0 + self.gamma) * lam ** self.gamma

    def d2psi(self, lam):
        b, g = self.beta, self.gamma
        return (1.0 + b) * b * lam ** (b - 1.0) + (1.0 + g) * g * lam ** (g - 1.0)

    def psi_over_lambda_at_log(self, w):
        return np.exp(self.beta * w) + np.exp(self.gamma * w)

    @property
    def declared_alpha(self):
        return self.gamma

    @property
    def declared_growth(self):
        return 1.0 + self.beta

    @property
    def declared_rho(self):
        return 0.0

    def slowly_varying_at_log(self, log_z):
        return 1.0 + np.exp((self.gamma - self.beta) * log_z)

    def describe(self):
        return {"variant": self.variant, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class ReciprocalSum(BranchingMechanism):
    """ψ(λ) = λ(λ^{-α} + λ^{-β})^{-1}, 0 < β < α ≤ 1; ϕ(z) = z^{-α}/α + z^{-β}/β"""

    alpha: float = 0.8
    beta: float = 0.2
    variant: ClassVar[str] = "reciprocal_sum"

    def __post_init__(self):
        if not 0.0 < self.beta < self.alpha <= 1.0:
            raise ValueError(f"ReciprocalSum needs 0 < beta < alpha <= 1, got alpha={self.alpha}, beta={self.beta}")

    def _denominator(self, lam):
        return lam ** (-self.alpha) + lam ** (-self.beta)

    def psi(self, lam):
        if lam == 0:
            return 0.0
        return lam / self._denominator(lam)

    def _numerator(self, lam):
        return (1.0 + self.alpha) * lam ** (-self.alpha) + (1.0 + self.beta) * lam ** (-self.beta)

    def dpsi(self, lam):
        return self._numerator(lam) / self._denominator(lam) ** 2

    def d2psi(self, lam):
        a, b = self.alpha, self.beta
        d = self._denominator(lam)
        d_prime = -a * lam ** (-a - 1.0) - b * lam ** (-b - 1.0)
        n_prime = -(1.0 + a) * a * lam ** (-a - 1.0) - (1.0 + b) * b * lam ** (-b - 1.0)
        return n_prime / d ** 2 - 2.0 * self._numerator(lam) * d_prime / d ** 3

    def psi_over_lambda_at_log(self, w):
        a, b = self.alpha, self.beta
        if np.real(w) < 0:
            return np.exp(a * w) / (1.0 + np.exp((a - b) * w))
        return 1.0 / (np.exp(-a * w) + np.exp(-b * w))

    @property
    def declared_alpha(self):
        return self.alpha

    @property
    def declared_growth(self):
        return 1.0 + self.beta

    @property
    def declared_rho(self):
        return 0.0

    def phi_at_log(self, w):
        return np.exp(-self.alpha * w) / self.alpha + np.exp(-self.beta * w) / self.beta

    def slowly_varying_at_log(self, log_z):
        return 1.0 / (1.0 + np.exp((self.beta - self.alpha) * log_z))

    @property
    def sigma(self):
        # ψ = λ²/(1 + λ^{1-β}) when α = 1
        return 2.0 if self.alpha == 1.0 else math.inf

    def describe(self):
        return {"variant": self.variant, "alpha": self.alpha, "beta": self.beta}


def _log1p_exp_neg(w):
    """log(1 + e^{-w}) without overflow for real or complex w with |Im w| < π/2"""
    if np.real(w) < 0:
        return -w + np.log1p(np.exp(w))
    return np.log1p(np.exp(-w))


@dataclass(frozen=True)
class LogBernstein(BranchingMechanism):
    """
    ψ(λ) = λ log^{-β}(1 + 1/λ), β ∈ (0, 1]: index 0 at zero, L(z) = log^{-β}(1+z).

    With s = log(1 + 1/z) the cumulant integral becomes
    ϕ(z) = s^{1+β}/(1+β) + ∫_0^s σ^β/(e^σ - 1) dσ, and the last integral tends
    to Γ(1+β)ζ(1+β) as s grows.
    """

    beta: float = 1.0
    rel_tol: float = 1e-12
    variant: ClassVar[str] = "log_bernstein"

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"LogBernstein needs beta in (0, 1], got {self.beta}")

    def psi(self, lam):
        if lam == 0:
            return 0.0
        return lam * np.log1p(1.0 / lam) ** (-self.beta)

    def dpsi(self, lam):
        ell = np.log1p(1.0 / lam)
        b = self.beta
        return ell ** (-b) + b * ell ** (-b - 1.0) / (lam + 1.0)

    def d2psi(self, lam):
        ell = np.log1p(1.0 / lam)
        b = self.beta
        return b * ell ** (-b - 1.0) / (lam * (lam + 1.0) ** 2) * (1.0 + (b + 1.0) / ell)

    def psi_over_lambda_at_log(self, w):
        return _log1p_exp_neg(w) ** (-self.beta)

    @property
    def declared_alpha(self):
        return 0.0

    @property
    def declared_growth(self):
        return 1.0 + self.beta

    @property
    def declared_rho(self):
        return 0.0

    def _bose_integral(self, s):
        """∫_0^s σ^β/(e^σ - 1) dσ along the segment [0, s]"""
        b = self.beta
        if np.real(s) > TAIL_FREE_S:
            return float(gamma_fn(1.0 + b) * zeta(1.0 + b))
        if np.iscomplexobj(s) and np.imag(s) != 0:
            s = complex(s)
            return s ** b * quad_complex(
                lambda tau: (s * tau) / np.expm1(s * tau) if tau > 0 else 1.0,
                0.0, 1.0, self.rel_tol, weight="alg", wvar=(b - 1.0, 0.0), what="LogBernstein ϕ",
            )
        s = float(np.real(s))
        return s ** b * quad_checked(
            lambda tau: (s * tau) / math.expm1(s * tau) if tau > 0 else 1.0,
            0.0, 1.0, self.rel_tol, weight="alg", wvar=(b - 1.0, 0.0), what="LogBernstein ϕ",
        )

    def phi_at_log(self, w):
        s = _log1p_exp_neg(w)
        return s ** (1.0 + self.beta) / (1.0 + self.beta) + self._bose_integral(s)

    def slowly_varying_at_log(self, log_z):
        return _log1p_exp_neg(-log_z) ** (-self.beta)

    def describe(self):
        return {"variant": self.variant, "beta": self.beta}


# beyond this the remainder ∫_s^∞ σ^β/(e^σ-1) dσ is below e^{-40}
TAIL_FREE_S = 45.0


@dataclass(frozen=True)
class General(BranchingMechanism):
    """Mechanism given only by its Lévy triplet; every property is computed"""

    triplet: LevyTriplet = LevyTriplet()
    variant: ClassVar[str] = "general"

    def __post_init__(self):
        self.triplet.check_integrability()

    def psi(self, lam):
        return self.triplet.psi(lam)

    def dpsi(self, lam):
        return self.triplet.dpsi(lam)

    def d2psi(self, lam):
        return self.triplet.d2psi(lam)

    @property
    def sigma(self):
        density = self.triplet.density
        if density is not None and density.weight > 0 and density.tail_exponent <= 3.0:
            return math.inf
        return 2.0 * self.triplet.diffusion + self.triplet.u_cumulative(math.inf)

    def describe(self):
        return {"variant": self.variant, **self.triplet.describe()}


# ----------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------

def psi_eval(mech: BranchingMechanism, lam: float) -> float:
    if lam < 0:
        raise ValueError(f"ψ is defined for λ ≥ 0, got {lam}")
    if lam == 0:
        return 0.0
    return float(mech.psi(float(lam)))


def psi_derivatives(mech: BranchingMechanism, lam: float) -> Tuple[float, float]:
    if lam <= 0:
        raise ValueError(f"derivatives need λ > 0, got {lam}")
    lam = float(lam)
    return float(mech.dpsi(lam)), float(mech.d2psi(lam))


def psi_complex(mech: BranchingMechanism, lam: complex) -> complex:
    """Analytic continuation of ψ to Re λ > 0"""
    if np.real(lam) <= 0:
        raise ValueError("complex ψ is only continued to Re λ > 0")
    return complex(mech.psi(complex(lam)))


RHO_ZERO_TOL = 1e-6
RHO_GRID = tuple(2.0 ** -k for k in range(1, 41))


@lru_cache(maxsize=64)
def _estimate_rho(mech: BranchingMechanism) -> Tuple[float, bool]:
    ratios = [float(mech.psi(lam)) / lam for lam in RHO_GRID]
    accelerated = [aitken(ratios[: k + 1]) for k in range(2, len(ratios))]
    estimate = accelerated[-1]
    drift = max(abs(accelerated[-1] - accelerated[-2]), abs(accelerated[-2] - accelerated[-3]))
    converged = drift <= RHO_ZERO_TOL * max(1.0, abs(estimate))
    return estimate, converged


def critical_drift(mech: BranchingMechanism) -> float:
    """ρ = ψ'(0+)"""
    if mech.declared_rho is not None:
        return mech.declared_rho
    return _estimate_rho(mech)[0]


def classify(mech: BranchingMechanism) -> Criticality:
    if mech.declared_rho is not None:
        rho, converged = mech.declared_rho, True
    else:
        rho, converged = _estimate_rho(mech)
    if abs(rho) < RHO_ZERO_TOL:
        if not converged:
            raise IndeterminateError(
                f"ψ(λ)/λ over λ = 2^-1 … 2^-40 ends at {rho:.3g} without settling; criticality undecided"
            )
        return Criticality.CRITICAL
    return Criticality.SUBCRITICAL if rho > 0 else Criticality.SUPERCRITICAL


GROWTH_TOL = 0.05
GROWTH_GRID = (1e6, 1e7, 1e8)


def _increment(mech: BranchingMechanism, lo: float, hi: float) -> float:
    return quad_checked(lambda v: math.exp(v) / float(mech.psi(math.exp(v))),
                        math.log(lo), math.log(hi), 1e-10, what="∫ dξ/ψ(ξ) decade")


@lru_cache(maxsize=64)
def _estimate_grey(mech: BranchingMechanism) -> bool:
    values = [float(mech.psi(lam)) for lam in GROWTH_GRID]
    slopes = [math.log(values[i + 1] / values[i]) / math.log(GROWTH_GRID[i + 1] / GROWTH_GRID[i])
              for i in range(len(values) - 1)]
    slope = slopes[-1]
    terminal_logger.add_log(f"growth exponent of ψ at ∞ ≈ {slope:.4f}", "MECHANISM", "mechanism")
    if slope > 1.0 + GROWTH_TOL:
        return True
    if slope < 1.0 - GROWTH_TOL:
        return False
    # exponent ≈ 1: decide from how ∫ dξ/ψ accumulates decade by decade
    increments = [_increment(mech, 10.0 ** k, 10.0 ** (k + 1)) for k in range(2, 9)]
    ratios = [increments[i + 1] / increments[i] for i in range(len(increments) - 1)][-3:]
    if all(abs(r - 1.0) <= 0.05 for r in ratios):
        return False
    if all(r < 0.8 for r in ratios):
        return True
    raise BoundaryCaseError(
        f"ψ grows like λ^{slope:.4f} at infinity and the truncated integrals "
        f"neither settle nor grow linearly (decade ratios {', '.join(f'{r:.3f}' for r in ratios)})"
    )


def grey_condition(mech: BranchingMechanism) -> bool:
    """True iff ∫^∞ dξ/ψ(ξ) < ∞; the lower limit is irrelevant"""
    if mech.declared_growth is not None:
        return mech.declared_growth > 1.0
    if classify(mech) == Criticality.SUPERCRITICAL:
        raise ValueError("Grey's condition is only examined for critical or subcritical mechanisms")
    return _estimate_grey(mech)


ALPHA_GRID = tuple(2.0 ** -k for k in range(1, 41))
ALPHA_TOL = 1e-4


@lru_cache(maxsize=64)
def _estimate_alpha(mech: BranchingMechanism) -> float:
    values = [float(mech.psi(s)) for s in ALPHA_GRID]
    exponents = [math.log2(values[k] / values[k + 1]) - 1.0 for k in range(len(values) - 1)]
    accelerated = [aitken(exponents[: k + 1]) for k in range(2, len(exponents))]
    drift = max(abs(accelerated[-1] - accelerated[-2]), abs(accelerated[-2] - accelerated[-3]))
    if not np.isfinite(accelerated[-1]) or drift > ALPHA_TOL:
        raise NotRegularlyVaryingError(
            f"log2 ψ(2s)/ψ(s) - 1 still moves by {drift:.2e} at s = 2^-40 (last {accelerated[-1]:.4f})"
        )
    estimate = accelerated[-1]
    if estimate < -0.05 or estimate > 1.05:
        raise BoundaryCaseError(f"index estimate α = {estimate:.4f} lies outside [0, 1]")
    terminal_logger.add_log(f"ψ regularly varying at 0 with α ≈ {estimate:.5f}", "MECHANISM", "mechanism")
    return min(1.0, max(0.0, estimate))


def rv_index_at_zero(mech: BranchingMechanism) -> float:
    """α with ψ ∈ R_{1+α}(0)"""
    if mech.declared_alpha is not None:
        return mech.declared_alpha
    if isinstance(mech, General) and mech.triplet.is_trivial:
        raise TrivialMechanismError("b = 0 and Λ ≡ 0: ψ is trivial")
    if classify(mech) != Criticality.CRITICAL:
        raise ValueError("the index at zero is only defined here for critical mechanisms")
    return _estimate_alpha(mech)


def slowly_varying(mech: BranchingMechanism, z: float) -> float:
    """L(z) = z^{1+α} ψ(1/z)"""
    if z <= 0:
        raise ValueError("L is evaluated at z > 0")
    return float(np.real(mech.slowly_varying_at_log(math.log(z))))
