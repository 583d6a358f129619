"""
Lévy–Khintchine triplets (a, b, Λ) and the built-in catalog of Lévy densities.

ψ(λ) = aλ + bλ² + ∫ (e^{-λx} - 1 + λx) Λ(dx)

Density-form measures are integrated on a logarithmic scale split at x = 1/|λ|,
up to X* = 40/Re λ, and the remainder [X*, ∞) is closed analytically from the
density's own antiderivative with e^{-λx} dropped.

Every kernel is written as x² times a bounded ratio, and the density enters as
x³g(x) = exp(3v + log g(e^v)), so no factor of the integrand overflows at
either end of the log scale.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from config.errors import QuadratureError
from tools.numerics import quad_checked, quad_complex

TAIL_CUTOFF = 40.0


def compensated_ratio(y):
    """(e^{-y} - 1 + y)/y², finite at y = 0 and for complex y"""
    if abs(y) < 1e-3:
        return 0.5 - y * (1.0 / 6.0 - y * (1.0 / 24.0 - y / 120.0))
    return (np.expm1(-y) + y) / (y * y)


def one_minus_exp_ratio(y):
    """(1 - e^{-y})/y"""
    if abs(y) < 1e-3:
        return 1.0 - y * (0.5 - y * (1.0 / 6.0 - y / 24.0))
    return -np.expm1(-y) / y


@dataclass(frozen=True)
class LevyDensity(ABC):
    """A density g(x) on (0, ∞) with known behavior at both ends"""

    weight: float = 1.0

    name: str = field(default="", init=False)

    @abstractmethod
    def __call__(self, x: float) -> float:
        ...

    @abstractmethod
    def log_density(self, v: float) -> float:
        """log g(e^v); -inf where g vanishes"""

    def moment_density(self, v: float, power: float) -> float:
        """x^power·g(x) at x = e^v"""
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            return float(np.exp(power * v + self.log_density(v)))

    @property
    def log_weight(self) -> float:
        with np.errstate(divide="ignore"):
            return float(np.log(self.weight))

    @property
    @abstractmethod
    def tail_exponent(self) -> float:
        """p with g(x) ≍ x^{-p} as x → ∞ (inf for light tails)"""

    @property
    def support_end(self) -> float:
        return math.inf

    @abstractmethod
    def tail_integral(self, kind: str, lam, x_star: float):
        """∫_{x*}^∞ of the drift-type kernel with e^{-λx} dropped"""


@dataclass(frozen=True)
class StableDensity(LevyDensity):
    """g(x) = weight·x^{-2-α}; with weight α(1+α)/Γ(1-α) the exponent is exactly λ^{1+α}"""

    alpha: float = 0.5
    name: str = field(default="stable", init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("stable density needs alpha in (0, 1); use diffusion for alpha = 1")

    def __call__(self, x):
        with np.errstate(divide="ignore", over="ignore"):
            return float(self.weight * np.power(np.float64(x), -2.0 - self.alpha))

    def log_density(self, v):
        return self.log_weight - (2.0 + self.alpha) * v

    @property
    def tail_exponent(self) -> float:
        return 2.0 + self.alpha

    def tail_integral(self, kind, lam, x_star):
        p = self.tail_exponent
        if kind == "psi":
            return self.weight * (lam * x_star ** (2 - p) / (p - 2) - x_star ** (1 - p) / (p - 1))
        if kind == "dpsi":
            return self.weight * x_star ** (2 - p) / (p - 2)
        return 0.0

    @staticmethod
    def weight_for(c: float, alpha: float) -> float:
        return c * alpha * (1.0 + alpha) / float(gamma_fn(1.0 - alpha))


@dataclass(frozen=True)
class ParetoDensity(LevyDensity):
    """g(x) = weight·(1+x)^{-2-α}: finite near 0, power tail of index 2+α"""

    alpha: float = 0.5
    name: str = field(default="pareto", init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("pareto density needs alpha in (0, 1]")

    def __call__(self, x):
        return self.weight * (1.0 + x) ** (-2.0 - self.alpha)

    def log_density(self, v):
        return self.log_weight - (2.0 + self.alpha) * float(np.logaddexp(0.0, v))

    @property
    def tail_exponent(self) -> float:
        return 2.0 + self.alpha

    def tail_integral(self, kind, lam, x_star):
        p = self.tail_exponent
        y = 1.0 + x_star
        if kind == "psi":
            return self.weight * (lam * y ** (2 - p) / (p - 2) - (lam + 1) * y ** (1 - p) / (p - 1))
        if kind == "dpsi":
            return self.weight * (y ** (2 - p) / (p - 2) - y ** (1 - p) / (p - 1))
        return 0.0


@dataclass(frozen=True)
class ExponentialDensity(LevyDensity):
    """g(x) = weight·e^{-x/scale}; weight 1, scale 1 gives ψ(λ) = λ²/(1+λ)"""

    scale: float = 1.0
    name: str = field(default="exponential", init=False)

    def __call__(self, x):
        return self.weight * math.exp(-x / self.scale)

    def log_density(self, v):
        with np.errstate(over="ignore"):
            return self.log_weight - float(np.exp(v)) / self.scale

    @property
    def tail_exponent(self) -> float:
        return math.inf

    def tail_integral(self, kind, lam, x_star):
        s = self.scale
        decay = self.weight * s * math.exp(-x_star / s)
        if kind == "psi":
            return decay * (lam * (x_star + s) - 1.0)
        if kind == "dpsi":
            return decay * (x_star + s)
        return 0.0


@dataclass(frozen=True)
class UniformDensity(LevyDensity):
    """g(x) = weight on (0, scale]: compact support"""

    scale: float = 1.0
    name: str = field(default="uniform", init=False)

    def __call__(self, x):
        return self.weight if x <= self.scale else 0.0

    def log_density(self, v):
        return self.log_weight if v <= math.log(self.scale) else -math.inf

    @property
    def tail_exponent(self) -> float:
        return math.inf

    @property
    def support_end(self) -> float:
        return self.scale

    def tail_integral(self, kind, lam, x_star):
        return 0.0


DENSITY_CATALOG = {
    "stable": StableDensity,
    "pareto": ParetoDensity,
    "exponential": ExponentialDensity,
    "uniform": UniformDensity,
}


@dataclass(frozen=True)
class LevyTriplet:
    """Drift a, diffusion b ≥ 0 and a Lévy measure given by a density and/or atoms"""

    drift: float = 0.0
    diffusion: float = 0.0
    density: Optional[LevyDensity] = None
    atoms: Tuple[Tuple[float, float], ...] = ()
    rel_tol: float = 1e-12

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError("diffusion b must be nonnegative")
        for x, m in self.atoms:
            if x <= 0 or m < 0:
                raise ValueError(f"atom ({x}, {m}) must have x > 0 and m ≥ 0")
        if self.density is not None and self.density.weight < 0:
            raise ValueError("density weight must be nonnegative")

    @property
    def has_measure(self) -> bool:
        return (self.density is not None and self.density.weight > 0) or any(m > 0 for _, m in self.atoms)

    @property
    def is_trivial(self) -> bool:
        return self.diffusion == 0 and not self.has_measure

    # ------------------------------------------------------------------
    # Lévy–Khintchine integrands
    # ------------------------------------------------------------------

    def _density_integral(self, kernel: Callable, kind: str, lam) -> complex:
        """∫ x² kernel(λ, x) g(x) dx over (0, ∞) for density-form Λ"""
        g = self.density
        re_lam = float(np.real(lam))
        is_complex = isinstance(lam, complex) or np.iscomplexobj(lam)
        scale = 1.0 / abs(lam)
        x_star = TAIL_CUTOFF / re_lam
        upper = min(x_star, g.support_end)

        def integrand(v):
            return kernel(lam, math.exp(v)) * g.moment_density(v, 3.0)

        integrate = quad_complex if is_complex else quad_checked
        split = math.log(min(scale, upper))
        total = integrate(integrand, -math.inf, split, self.rel_tol, what=f"Lévy {kind} (inner)")
        if upper > scale:
            total += integrate(integrand, split, math.log(upper), self.rel_tol, what=f"Lévy {kind} (bulk)")
        if x_star < g.support_end:
            total += g.tail_integral(kind, lam, x_star)
        return total

    def _measure_term(self, kernel: Callable, kind: str, lam):
        total = 0.0
        for x, m in self.atoms:
            total += m * x * x * kernel(lam, x)
        if self.density is not None and self.density.weight > 0:
            total += self._density_integral(kernel, kind, lam)
        return total

    def psi(self, lam):
        if lam == 0:
            return 0.0
        measure = self._measure_term(lambda l, x: l * l * compensated_ratio(l * x), "psi", lam)
        return self.drift * lam + self.diffusion * lam * lam + measure

    def dpsi(self, lam):
        measure = self._measure_term(lambda l, x: l * one_minus_exp_ratio(l * x), "dpsi", lam)
        return self.drift + 2.0 * self.diffusion * lam + measure

    def d2psi(self, lam):
        return 2.0 * self.diffusion + self.u_hat(lam)

    # ------------------------------------------------------------------
    # Tail diagnostics
    # ------------------------------------------------------------------

    def u_hat(self, theta):
        """Û(θ) = ∫ e^{-θx} x² Λ(dx)"""
        return self._measure_term(lambda l, x: np.exp(-l * x), "d2psi", theta)

    def u_cumulative(self, z: float) -> float:
        """U(z) = ∫_(0, z] x² Λ(dx)"""
        total = sum(m * x * x for x, m in self.atoms if x <= z)
        g = self.density
        if g is not None and g.weight > 0:
            log_upper = math.log(min(z, g.support_end))
            integrand = lambda v: g.moment_density(v, 3.0)
            total += quad_checked(integrand, -math.inf, min(log_upper, 0.0), self.rel_tol, what="U(z) on (0, 1]")
            if log_upper > 0.0:
                total += quad_checked(integrand, 0.0, log_upper, self.rel_tol, what="U(z) beyond 1")
        return float(total)

    def check_integrability(self) -> float:
        """∫ (x ∧ x²) Λ(dx); raises QuadratureError when it does not converge"""
        total = sum(m * min(x, x * x) for x, m in self.atoms)
        g = self.density
        if g is None or g.weight == 0:
            return float(total)
        if g.support_end == math.inf and g.tail_exponent <= 2.0:
            raise QuadratureError(f"density tail exponent {g.tail_exponent} ≤ 2: ∫ x Λ(dx) diverges")
        upper = min(1.0, g.support_end)
        total += quad_checked(lambda v: g.moment_density(v, 3.0), -math.inf, math.log(upper),
                              self.rel_tol, what="∫ x² Λ(dx) on (0, 1]")
        if g.support_end > 1.0:
            total += quad_checked(lambda v: g.moment_density(v, 2.0), 0.0, math.log(g.support_end),
                                  self.rel_tol, what="∫ x Λ(dx) on (1, ∞)")
        return float(total)

    def describe(self) -> dict:
        return {
            "drift": self.drift,
            "diffusion": self.diffusion,
            "density": None if self.density is None else {
                "name": self.density.name,
                "weight": self.density.weight,
                "tail_exponent": self.density.tail_exponent,
            },
            "atoms": [list(a) for a in self.atoms],
        }

    @classmethod
    def stable_equivalent(cls, c: float, alpha: float, rel_tol: float = 1e-12) -> "LevyTriplet":
        """Triplet whose exponent equals cλ^{1+α}"""
        if alpha == 1.0:
            return cls(diffusion=c, rel_tol=rel_tol)
        return cls(density=StableDensity(weight=StableDensity.weight_for(c, alpha), alpha=alpha),
                   rel_tol=rel_tol)
