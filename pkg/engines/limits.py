"""
Conditioned laws of Q_t X_t given survival, and the laws they converge to.

Finite-t quantities are exact: they are composed from u_t, φ and the survival
probability on the logarithmic scale, never from asymptotic equivalents.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, Union

import mpmath
import numpy as np

from config.terminal_logger import terminal_logger
from engines.flow import CumulantFlow
from engines.mechanism import rv_index_at_zero
from tools.inversion import Analyticity, TransformHandle, invert_cdf
from tools.numerics import log_one_minus_exp_neg, quad_checked

ALPHA_ZERO_TOL = 0.05


# ----------------------------------------------------------------------
# Normings
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FbarNorming:
    """Q_t = F̄(t) = P_1(τ > t)"""

    name: ClassVar[str] = "fbar"

    def log_q(self, flow: CumulantFlow, t: float) -> float:
        return flow.log_fbar(t)


@dataclass(frozen=True)
class PowerNorming:
    """Q_t = t^{-exponent}; exponent 1/α is the closed-form norming of the stable family"""

    exponent: float
    name: ClassVar[str] = "power"

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError(f"power norming needs a positive exponent, got {self.exponent}")

    def log_q(self, flow: CumulantFlow, t: float) -> float:
        return -self.exponent * math.log(t)


@dataclass(frozen=True)
class CustomNorming:
    """A fixed Q_t, held as log Q_t so huge or tiny scales stay representable"""

    log_value: float
    name: ClassVar[str] = "custom"

    @classmethod
    def of(cls, q: float) -> "CustomNorming":
        if not q > 0:
            raise ValueError(f"custom norming needs Q_t > 0, got {q}")
        return cls(log_value=math.log(q))

    def log_q(self, flow: CumulantFlow, t: float) -> float:
        return self.log_value


@dataclass(frozen=True)
class AlphaZeroNorming:
    """L(F̄(t)^{-1}) V(X_t) in place of a linear scaling; only for index-zero mechanisms"""

    name: ClassVar[str] = "alpha0"

    def log_q(self, flow: CumulantFlow, t: float) -> float:
        raise ValueError("the α = 0 scheme is not a linear norming; use alpha0_normalized_cdf")


Norming = Union[FbarNorming, PowerNorming, CustomNorming, AlphaZeroNorming]


@dataclass(frozen=True)
class ConditionalLaw:
    """Law of Q_t X_t under P_x( · | τ > t)"""

    flow: CumulantFlow
    t: float
    x: float
    norming: Norming = field(default_factory=FbarNorming)

    def __post_init__(self):
        if not self.t > 0 or not self.x > 0:
            raise ValueError(f"conditional law needs t > 0 and x > 0, got t={self.t}, x={self.x}")

    @property
    def log_q(self) -> float:
        return self.norming.log_q(self.flow, self.t)

    @property
    def log_survival(self) -> float:
        return self.flow.log_survival(self.t, self.x)

    def describe(self) -> dict:
        return {"mechanism": self.flow.mech.describe(), "t": self.t, "x": self.x,
                "norming": self.norming.name}


def conditioned_log_complement(law: ConditionalLaw, theta: float) -> float:
    """
    log(1 - E_x(e^{-θ Q_t X_t} | τ > t)).

    Stays informative after the transform itself has rounded to 1, which is
    what an overnormed law does within a few decades of t.
    """
    if not theta > 0:
        raise ValueError(f"θ must be positive, got {theta}")
    if isinstance(law.norming, AlphaZeroNorming):
        raise ValueError("conditioned_lt needs a linear norming (fbar, power or custom)")
    log_x = math.log(law.x)
    log_u = law.flow.log_u(law.t, math.log(theta) + law.log_q)
    return float(log_one_minus_exp_neg(log_x + log_u)) - law.log_survival


def conditioned_lt(law: ConditionalLaw, theta: float) -> float:
    """E_x(e^{-θ Q_t X_t} | τ > t) = 1 - (1 - e^{-x u_t(θQ_t)}) / (1 - e^{-x φ(t)})"""
    return float(-math.expm1(conditioned_log_complement(law, theta)))


def conditioned_mean(law: ConditionalLaw) -> float:
    """E_x(Q_t X_t | τ > t) = Q_t E_x X_t / P_x(τ > t)"""
    if isinstance(law.norming, AlphaZeroNorming):
        raise ValueError("conditioned_mean needs a linear norming (fbar, power or custom)")
    log_mean = math.log(law.flow.mean(law.t, law.x))
    return math.exp(law.log_q + log_mean - law.log_survival)


def conditioned_handle(law: ConditionalLaw) -> TransformHandle:
    """The conditioned transform continued to Re θ > 0, ready for Euler inversion"""
    log_x = math.log(law.x)
    log_q = law.log_q
    log_surv = law.log_survival

    def evaluator(theta):
        log_lams = np.log(np.asarray(theta, dtype=complex)) + log_q
        log_u = law.flow.log_u_complex(law.t, log_lams)
        return -np.expm1(log_one_minus_exp_neg(log_x + log_u) - log_surv)

    return TransformHandle(evaluator=evaluator, total_mass=1.0, analyticity=Analyticity.RIGHT_HALF_PLANE,
                           label=f"{law.flow.mech.variant} t={law.t:g} x={law.x:g} {law.norming.name}")


def conditional_cdf(law: ConditionalLaw, y: float) -> float:
    """P_x(Q_t X_t ≤ y | τ > t)"""
    if isinstance(law.norming, AlphaZeroNorming):
        return alpha0_normalized_cdf(AlphaZeroScheme(law.flow), law.t, law.x, y)
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    if y == math.inf:
        return 1.0
    return invert_cdf(conditioned_handle(law), y)


# ----------------------------------------------------------------------
# Limit laws
# ----------------------------------------------------------------------

class LimitLaw(ABC):
    variant: ClassVar[str] = "abstract"

    @abstractmethod
    def transform(self, theta):
        """The law's transform in its stated form, vectorized over real or complex θ"""

    def stieltjes(self, theta):
        """∫ e^{-θy} dH(y), the transform the CDF is recovered from"""
        return self.transform(theta)

    @abstractmethod
    def stieltjes_mp(self, p):
        ...

    @abstractmethod
    def mean(self) -> float:
        ...

    def handle(self) -> TransformHandle:
        return TransformHandle(evaluator=self.stieltjes, total_mass=1.0, analyticity=Analyticity.CUT_PLANE,
                               extended_evaluator=self.stieltjes_mp, label=repr(self))


@dataclass(frozen=True)
class LinnikType(LimitLaw):
    """h(θ) = 1 - (1 + c^{-α} θ^{-α})^{-1/α}; c = 1 is the F̄-normed limit"""

    alpha: float
    c: float = 1.0
    variant: ClassVar[str] = "linnik"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0 or not self.c > 0:
            raise ValueError(f"LinnikType needs alpha in (0, 1] and c > 0, got alpha={self.alpha}, c={self.c}")

    @classmethod
    def for_power_norming(cls, c: float, alpha: float) -> "LinnikType":
        """Limit of the stable family cλ^{1+α} normed by t^{-1/α}"""
        return cls(alpha=alpha, c=(c * alpha) ** (1.0 / alpha))

    def transform(self, theta):
        x = (self.c * np.asarray(theta)) ** (-self.alpha)
        return -np.expm1(-np.log1p(x) / self.alpha)

    def stieltjes_mp(self, p):
        return 1 - (1 + (self.c * p) ** (-self.alpha)) ** (-1 / mpmath.mpf(self.alpha))

    def mean(self) -> float:
        return self.c


@dataclass(frozen=True)
class StationaryExcess(LimitLaw):
    """
    Stationary-excess law of H_α (generalized positive Linnik).

    transform() is the stated form (1 + θ^{-α})^{-1/α} = 1 - h_α(θ); dividing by
    θ gives the law's own Laplace–Stieltjes transform (1 + θ^α)^{-1/α}.
    """

    alpha: float
    variant: ClassVar[str] = "stationary_excess"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"StationaryExcess needs alpha in (0, 1], got {self.alpha}")

    def transform(self, theta):
        x = np.asarray(theta) ** (-self.alpha)
        return np.exp(-np.log1p(x) / self.alpha)

    def stieltjes(self, theta):
        return np.exp(-np.log1p(np.asarray(theta) ** self.alpha) / self.alpha)

    def stieltjes_mp(self, p):
        return (1 + p ** self.alpha) ** (-1 / mpmath.mpf(self.alpha))

    def mean(self) -> float:
        return 1.0 if self.alpha == 1.0 else math.inf


@dataclass(frozen=True)
class ExponentialUnit(LimitLaw):
    """1 - e^{-y}, the α = 0 limit"""

    variant: ClassVar[str] = "exponential"

    def transform(self, theta):
        return 1.0 / (1.0 + np.asarray(theta))

    def stieltjes_mp(self, p):
        return 1 / (1 + p)

    def mean(self) -> float:
        return 1.0


def limit_lt(lim: LimitLaw, theta: float) -> float:
    if not theta > 0:
        raise ValueError(f"θ must be positive, got {theta}")
    return float(np.real(lim.transform(theta)))


def limit_cdf(lim: LimitLaw, y: float) -> float:
    if y == math.inf:
        return 1.0
    if isinstance(lim, ExponentialUnit):
        return alpha0_limit_cdf(y)
    return invert_cdf(lim.handle(), y)


def limit_mean(lim: LimitLaw) -> float:
    return lim.mean()


def linnik_cdf_real_axis(alpha: float, y: float) -> float:
    """
    H_α(y) for c = 1 without any contour: the survival transform (1 + p^α)^{-1/α}
    has only the cut along p < 0, so H̄_α(y) = (1/π) ∫_0^∞ e^{-ry} Im (1 + r^α e^{-iπα})^{-1/α} dr.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("the real-axis representation needs alpha in (0, 1); alpha = 1 has a pole")
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    rotation = np.exp(-1j * np.pi * alpha)

    def integrand(r):
        if r == 0.0:
            return 0.0
        return math.exp(-r * y) * float(np.imag((1.0 + r ** alpha * rotation) ** (-1.0 / alpha)))

    split = 1.0 / y
    integral = quad_checked(integrand, 0.0, split, 1e-12, what="Linnik real-axis (head)")
    integral += quad_checked(integrand, split, math.inf, 1e-12, what="Linnik real-axis (tail)")
    return 1.0 - integral / math.pi


def alpha0_limit_cdf(y: float) -> float:
    if y < 0:
        raise ValueError(f"y must be nonnegative, got {y}")
    return float(-math.expm1(-y))


# ----------------------------------------------------------------------
# The α = 0 scheme
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaZeroScheme:
    """
    V(x) = ϕ(1/x) = ∫_0^x dξ/(ξL(ξ)) and its inverse R = 1/φ.

    Both are kept on the log scale of their large argument, which is where the
    slowly varying factor L lives.
    """

    flow: CumulantFlow

    def __post_init__(self):
        alpha = rv_index_at_zero(self.flow.mech)
        if alpha > ALPHA_ZERO_TOL:
            raise ValueError(
                f"{self.flow.mech.variant} has index α ≈ {alpha:.4g} at zero; the α = 0 scheme does not apply, "
                f"use a linear norming and LinnikType({alpha:.4g}) instead"
            )

    def V(self, x: float) -> float:
        if x < 0:
            raise ValueError(f"V is defined on [0, ∞), got {x}")
        if x == 0:
            return 0.0
        if x == math.inf:
            return math.inf
        return float(np.real(self.flow.phi_at_log(-math.log(x))))

    def log_R(self, y: float) -> float:
        return -self.flow.log_varphi(y)

    def R(self, y: float) -> float:
        if y == 0:
            return 0.0
        return math.exp(self.log_R(y))

    def L_at_log(self, log_z: float) -> float:
        return float(np.real(self.flow.mech.slowly_varying_at_log(log_z)))

    def L(self, z: float) -> float:
        return self.L_at_log(math.log(z))

    def L_of_R(self, z: float) -> float:
        return self.L_at_log(self.log_R(z))


def _lemma_upper(scheme: AlphaZeroScheme, y: float, t: float) -> float:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    upper = t + y / scheme.L_of_R(t)
    if not upper > 0:
        raise ValueError(f"t + y/L(R(t)) = {upper} is not positive; take a larger t")
    return upper


def lemma_I(scheme: AlphaZeroScheme, y: float, t: float) -> float:
    """I(y, t) = ∫_t^{t + y/L(R(t))} L(R(z)) dz by quadrature"""
    if y == 0:
        return 0.0
    upper = _lemma_upper(scheme, y, t)
    return quad_checked(scheme.L_of_R, t, upper, 1e-10, what="I(y, t)")


def lemma_I_exact(scheme: AlphaZeroScheme, y: float, t: float) -> float:
    """log R(t + y/L(R(t))) - log R(t), from R'/R = L(R)"""
    if y == 0:
        return 0.0
    upper = _lemma_upper(scheme, y, t)
    return scheme.log_R(upper) - scheme.log_R(t)


def theorem42_timescale(scheme: AlphaZeroScheme, t: float) -> float:
    """V(F̄(t)^{-1}) / t"""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    return float(np.real(scheme.flow.phi_at_log(scheme.flow.log_fbar(t)))) / t


def alpha0_normalized_cdf(scheme: AlphaZeroScheme, t: float, x: float, y: float) -> float:
    """
    P_x(L(F̄(t)^{-1}) V(X_t) ≤ y | τ > t) = P_x(X_t ≤ R(y / L(F̄(t)^{-1})) | τ > t).

    The right side is a linearly normed conditional CDF at 1 with Q_t = 1/R(·).
    """
    if y < 0:
        raise ValueError(f"y must be nonnegative, got {y}")
    if y == 0:
        return 0.0
    if y == math.inf:
        return 1.0
    scale = scheme.L_at_log(-scheme.flow.log_fbar(t))
    log_threshold = scheme.log_R(y / scale)
    terminal_logger.add_log(
        f"α=0 CDF: t={t:g} y={y:g} L(1/F̄)={scale:.6g} log R={log_threshold:.6g}", "LIMITS", "limits",
    )
    law = ConditionalLaw(scheme.flow, t, x, CustomNorming(log_value=-log_threshold))
    return conditional_cdf(law, 1.0)
