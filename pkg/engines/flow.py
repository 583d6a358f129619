"""
Cumulant flow of a CB process: ϕ, its inverse φ, u_t(λ) = φ(t + ϕ(λ)),
survival probabilities and means.

Everything is computed on the logarithmic scale w = log z internally, since
survival probabilities of slowly decaying mechanisms leave the double range
long before the time horizons the limit theorems need.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from threading import Lock
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from config import settings
from config.errors import BracketingError, GreyConditionError, SurvivalUnderflowError
from config.terminal_logger import terminal_logger
from engines.mechanism import BranchingMechanism, Criticality, classify, critical_drift, grey_condition
from tools.numerics import log_one_minus_exp_neg, quad_checked, quad_complex

LAMBDA_INFINITY = math.inf

INITIAL_TABLE = (-4.0, 0.0, 4.0)
MAX_TABLE_EXTENSIONS = 60


@dataclass
class BackwardSolution:
    value: float
    absorbed: bool
    steps: int


class CumulantFlow:
    """Evaluator bundle for ϕ, φ and u_t(λ) of one mechanism"""

    def __init__(
        self,
        mech: BranchingMechanism,
        quad_rel_tol: float = settings.QUAD_REL_TOL,
        root_rel_tol: float = settings.ROOT_REL_TOL,
        ode_tol: float = settings.ODE_TOL,
    ):
        self.mech = mech
        self.quad_rel_tol = quad_rel_tol
        self.root_rel_tol = root_rel_tol
        self.ode_tol = ode_tol
        self._grey: Optional[bool] = None
        # (w, ϕ(e^w)) sorted by w; ϕ decreases along it
        self._table: List[Tuple[float, float]] = []
        self._table_lock = Lock()

    # ------------------------------------------------------------------
    # ϕ
    # ------------------------------------------------------------------

    def _require_grey(self):
        if self._grey is None:
            self._grey = grey_condition(self.mech)
        if not self._grey:
            raise GreyConditionError(
                f"{self.mech.variant}: ∫^∞ dξ/ψ(ξ) diverges, so ϕ and φ are undefined"
            )

    def _growth_at(self, log_lam: float) -> float:
        """Local exponent λψ'(λ)/ψ(λ)"""
        lam = math.exp(log_lam)
        return float(lam * self.mech.dpsi(lam) / self.mech.psi(lam))

    def _phi_quadrature(self, w: float) -> float:
        """∫_w^{V*} dv / (ψ(e^v)/e^v) plus a power-law tail beyond e^{V*}"""
        growth = self.mech.declared_growth or self._growth_at(max(w, 0.0) + 10.0)
        span = min(40.0 / max(growth - 1.0, 0.1), 600.0)
        v_star = min(max(w, 0.0) + span, 700.0)

        def integrand(v):
            return 1.0 / float(np.real(self.mech.psi_over_lambda_at_log(v)))

        points = [0.0] if w < 0.0 < v_star else None
        body = quad_checked(integrand, w, v_star, self.quad_rel_tol, points=points, what="ϕ quadrature")
        p = self._growth_at(v_star)
        tail = math.exp(v_star) / ((p - 1.0) * float(self.mech.psi(math.exp(v_star))))
        return body + tail

    def phi_at_log(self, w):
        """ϕ(e^w) for real w, or its continuation for complex w with |Im w| < π/2"""
        self._require_grey()
        closed = self.mech.phi_at_log(w)
        if closed is not None:
            return closed
        if np.iscomplexobj(w) and np.imag(w) != 0:
            return self._phi_complex(complex(w))
        return self._phi_quadrature(float(np.real(w)))

    def _phi_complex(self, w: complex) -> complex:
        """ϕ(λ) = ϕ(|λ|) + ∫_λ^{|λ|} dζ/ψ(ζ) along the straight segment"""
        lam = np.exp(w)
        modulus = abs(lam)
        step = modulus - lam

        def integrand(tau):
            return step / self.mech.psi(lam + tau * step)

        base = self._phi_quadrature(float(np.real(w)))
        return base + quad_complex(integrand, 0.0, 1.0, self.quad_rel_tol, what="ϕ continuation")

    def phi(self, z: float) -> float:
        if z <= 0:
            raise ValueError(f"ϕ is defined for z > 0, got {z}")
        if z == math.inf:
            return 0.0
        return float(np.real(self.phi_at_log(math.log(z))))

    # ------------------------------------------------------------------
    # φ = ϕ^{-1}
    # ------------------------------------------------------------------

    def _table_bracket(self, t: float) -> Tuple[float, float]:
        with self._table_lock:
            if not self._table:
                self._table = [(w, float(np.real(self.phi_at_log(w)))) for w in INITIAL_TABLE]
            extensions = 0
            while self._table[0][1] < t:
                span = self._table[-1][0] - self._table[0][0]
                w = self._table[0][0] - span
                self._table.insert(0, (w, float(np.real(self.phi_at_log(w)))))
                extensions += 1
                if extensions > MAX_TABLE_EXTENSIONS:
                    raise BracketingError(f"no w with ϕ(e^w) ≥ {t} down to w = {w:.4g}")
            while self._table[-1][1] > t:
                span = self._table[-1][0] - self._table[0][0]
                w = min(self._table[-1][0] + span, 700.0)
                if w <= self._table[-1][0]:
                    raise BracketingError(f"no w with ϕ(e^w) ≤ {t} below the overflow limit")
                self._table.append((w, float(np.real(self.phi_at_log(w)))))
                extensions += 1
                if extensions > MAX_TABLE_EXTENSIONS:
                    raise BracketingError(f"no w with ϕ(e^w) ≤ {t} up to w = {w:.4g}")
            if extensions:
                terminal_logger.add_log(
                    f"ϕ table extended to w ∈ [{self._table[0][0]:.4g}, {self._table[-1][0]:.4g}]",
                    "FLOW", "flow",
                )
            # ϕ decreases in w, so search on the negated values
            negated = [-value for _, value in self._table]
            k = bisect.bisect_left(negated, -t)
            k = min(max(k, 1), len(self._table) - 1)
            return self._table[k - 1][0], self._table[k][0]

    def log_varphi(self, t) -> float:
        """log φ(t) for t > 0"""
        if np.real(t) <= 0:
            raise ValueError(f"φ is defined for t > 0, got {t}")
        self._require_grey()
        if t == math.inf:
            return -math.inf
        closed = self.mech.log_varphi(t)
        if closed is not None:
            return closed
        lo, hi = self._table_bracket(float(t))
        f = lambda w: float(np.real(self.phi_at_log(w))) - t
        f_lo, f_hi = f(lo), f(hi)
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        if f_lo * f_hi > 0:
            raise BracketingError(f"ϕ(e^w) - {t} does not change sign on [{lo}, {hi}]")
        return brentq(f, lo, hi, xtol=self.root_rel_tol, rtol=4 * np.finfo(float).eps, maxiter=200)

    def varphi(self, t: float) -> float:
        return math.exp(self.log_varphi(t))

    # ------------------------------------------------------------------
    # u_t(λ)
    # ------------------------------------------------------------------

    def log_u(self, t: float, log_lam: float) -> float:
        """log u_t(e^{log λ}); log λ = +inf is the λ = ∞ sentinel"""
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        if log_lam == -math.inf:
            return -math.inf
        if t == 0:
            return log_lam
        if log_lam == math.inf:
            return self.log_varphi(t)
        return self.log_varphi(t + float(np.real(self.phi_at_log(log_lam))))

    def u(self, t: float, lam: float) -> float:
        if lam < 0:
            raise ValueError(f"λ must be nonnegative, got {lam}")
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        if t == 0:
            return lam
        if lam == 0:
            return 0.0
        if lam == LAMBDA_INFINITY:
            return self.varphi(t)
        return math.exp(self.log_u(t, math.log(lam)))

    def log_u_complex(self, t: float, log_lams) -> np.ndarray:
        """
        log u_t(λ) for an array of complex log λ with Re λ > 0.

        Without a closed form the flow is carried from φ(t) along the complex
        time segment [0, ϕ(λ)]: w' = -ϕ(λ)·ψ(e^w)/e^w on s ∈ [0, 1].
        """
        log_lams = np.atleast_1d(np.asarray(log_lams, dtype=complex))
        deltas = np.array([complex(self.phi_at_log(w)) for w in log_lams])
        closed = self.mech.log_varphi(t + deltas[0])
        if closed is not None:
            return np.array([self.mech.log_varphi(t + d) for d in deltas], dtype=complex)

        w0 = self.log_varphi(t)
        g = self.mech.psi_over_lambda_at_log

        def rhs(_, d):
            return -deltas * np.array([g(w0 + dk) for dk in d], dtype=complex)

        solution = solve_ivp(rhs, (0.0, 1.0), np.zeros(len(deltas), dtype=complex), method="DOP853",
                             rtol=self.ode_tol * 1e-2, atol=1e-12)
        if not solution.success:
            raise BracketingError(f"complex flow integration failed: {solution.message}")
        return w0 + solution.y[:, -1]

    def u_ode(self, t: float, lam: float) -> BackwardSolution:
        """Backward equation du/ds = -ψ(u), u(0) = λ, integrated in log u"""
        if lam <= 0:
            raise ValueError(f"u_ode needs λ > 0, got {lam}")
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        if t == 0:
            return BackwardSolution(value=lam, absorbed=False, steps=0)
        floor = math.log(settings.ABSORPTION_FLOOR)
        g = self.mech.psi_over_lambda_at_log

        def rhs(_, w):
            return [-float(np.real(g(w[0])))]

        def absorbed(_, w):
            return w[0] - floor

        absorbed.terminal = True
        absorbed.direction = -1

        solution = solve_ivp(rhs, (0.0, t), [math.log(lam)], method="DOP853",
                             rtol=self.ode_tol, atol=self.ode_tol, events=absorbed)
        if solution.status == 1:
            terminal_logger.add_log(f"backward ODE absorbed before t={t} (λ={lam})", "FLOW", "flow")
            return BackwardSolution(value=0.0, absorbed=True, steps=int(solution.nfev))
        if not solution.success:
            raise BracketingError(f"backward ODE failed: {solution.message}")
        return BackwardSolution(value=math.exp(solution.y[0, -1]), absorbed=False, steps=int(solution.nfev))

    def du_dlambda(self, t: float, lam: float) -> float:
        """∂u_t/∂λ = ψ(u_t(λ))/ψ(λ)"""
        if lam <= 0:
            raise ValueError("∂u/∂λ needs λ > 0 (ψ(0) = 0)")
        if t == 0:
            return 1.0
        return float(self.mech.psi(self.u(t, lam)) / self.mech.psi(lam))

    def forward_residual(self, t: float, lam: float, rel_step: float = 1e-5) -> float:
        """|∂u/∂t + ψ(λ)∂u/∂λ| / ψ(u) from central differences in both variables"""
        ht = rel_step * t
        hl = rel_step * lam
        du_dt = (self.u(t + ht, lam) - self.u(t - ht, lam)) / (2 * ht)
        du_dl = (self.u(t, lam + hl) - self.u(t, lam - hl)) / (2 * hl)
        scale = float(self.mech.psi(self.u(t, lam)))
        return abs(du_dt + float(self.mech.psi(lam)) * du_dl) / scale

    # ------------------------------------------------------------------
    # Survival and mean
    # ------------------------------------------------------------------

    def log_survival(self, t: float, x: float) -> float:
        if t <= 0 or x <= 0:
            raise ValueError("survival needs t > 0 and x > 0")
        return float(log_one_minus_exp_neg(math.log(x) + self.log_varphi(t)))

    def survival(self, t: float, x: float) -> float:
        """P_x(τ > t) = 1 - e^{-x φ(t)}"""
        value = math.exp(self.log_survival(t, x))
        if value == 0.0:
            raise SurvivalUnderflowError(
                f"P_{x}(τ > {t}) underflows (log = {self.log_survival(t, x):.6g}); use log_survival"
            )
        return value

    def log_fbar(self, t: float) -> float:
        return self.log_survival(t, 1.0)

    def fbar(self, t: float) -> float:
        return self.survival(t, 1.0)

    def mean(self, t: float, x: float) -> float:
        """E_x X_t = x e^{-ρt}"""
        if classify(self.mech) == Criticality.CRITICAL:
            return x
        rho = critical_drift(self.mech)
        return x * math.exp(-rho * t)
