"""
Regular-variation diagnostics: index estimation at 0 and ∞, the Karamata
checks on F̄ and ϕ, and the tail equivalence between ψ at zero and x²Λ(dx).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from config.terminal_logger import terminal_logger
from engines.flow import CumulantFlow
from engines.levy import LevyTriplet
from engines.mechanism import rv_index_at_zero

SLOWLY_VARYING_TOL = 0.02


@dataclass
class IndexEstimate:
    index: float
    standard_error: float
    grid_decades: int
    converged: bool
    at: str = "infinity"
    per_decade_slopes: List[float] = field(default_factory=list)
    least_squares_slope: float = math.nan

    @property
    def slowly_varying(self) -> bool:
        return self.converged and abs(self.index) < SLOWLY_VARYING_TOL


def _grid_args(at: str, grid: Tuple[float, float]) -> Tuple[float, int]:
    lo, hi = grid
    if not 0 < lo < hi:
        raise ValueError(f"index grid must satisfy 0 < lo < hi, got {grid}")
    decades = int(round(math.log10(hi / lo)))
    return (lo if at == "infinity" else hi), decades


def estimate_index(
    f: Callable[[float], float],
    at: str = "infinity",
    decades: int = 6,
    start: Optional[float] = None,
    points_per_decade: int = 4,
    log_values: bool = False,
    threshold: float = settings.INDEX_DRIFT_THRESHOLD,
) -> IndexEstimate:
    """
    Index p with f ∈ R_p at ∞ or at 0.

    Secant slopes of log f over each decade are extrapolated to the end of the
    grid in the variable Δlog log t / Δlog t, in which t^p (log t)^k has the
    exactly linear slope p + k·x; the drift between the last two decades is the
    reported error. At zero the estimate is minus the index of t ↦ f(1/t).
    With log_values, f already returns log f.
    """
    if at not in ("infinity", "zero"):
        raise ValueError(f"'at' must be 'infinity' or 'zero', got {at!r}")
    if decades < 3:
        raise ValueError(f"index estimation needs at least 3 decades, got {decades}")
    if start is None:
        start = settings.DEFAULT_INFINITY_GRID[0] if at == "infinity" else settings.DEFAULT_ZERO_GRID[1]
    t0 = start if at == "infinity" else 1.0 / start
    ts = t0 * np.logspace(0.0, decades, decades * points_per_decade + 1)
    args = ts if at == "infinity" else 1.0 / ts

    logs = []
    for t, arg in zip(ts, args):
        value = float(f(float(arg)))
        if log_values:
            if not np.isfinite(value):
                raise ValueError(f"log f({arg:.6g}) = {value} is not finite")
            logs.append(value)
        else:
            if not value > 0 or not np.isfinite(value):
                raise ValueError(f"f({arg:.6g}) = {value}: index estimation needs positive finite samples")
            logs.append(math.log(value))
    logs = np.asarray(logs)
    log_ts = np.log(ts)

    bounds = np.arange(0, decades * points_per_decade + 1, points_per_decade)
    slopes = [(logs[j] - logs[i]) / (log_ts[j] - log_ts[i]) for i, j in zip(bounds[:-1], bounds[1:])]
    least_squares = float(np.polyfit(log_ts, logs, 1)[0])

    index = slopes[-1]
    if t0 > 1.0:
        basis = [math.log(log_ts[j] / log_ts[i]) / (log_ts[j] - log_ts[i]) for i, j in zip(bounds[:-1], bounds[1:])]
        if basis[-2] != basis[-1]:
            index = slopes[-1] - basis[-1] * (slopes[-1] - slopes[-2]) / (basis[-1] - basis[-2])
    drift = abs(slopes[-1] - slopes[-2])
    sign = 1.0 if at == "infinity" else -1.0

    estimate = IndexEstimate(
        index=sign * float(index),
        standard_error=float(drift),
        grid_decades=decades,
        converged=bool(drift < threshold),
        at=at,
        per_decade_slopes=[sign * float(s) for s in slopes],
        least_squares_slope=sign * least_squares,
    )
    terminal_logger.add_log(
        f"index at {at}: {estimate.index:.5f} ± {estimate.standard_error:.2e} over {decades} decades"
        f"{'' if estimate.converged else ' (not converged)'}",
        "REGVAR", "regvar",
    )
    return estimate


def delta_growth_check(flow: CumulantFlow, alpha: float, delta: float,
                       t_grid: Sequence[float]) -> Tuple[List[float], List[float]]:
    """t^{1/α+δ} F̄(t) and t^{1/α-δ} F̄(t) over the grid"""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    upper, lower = [], []
    for t in t_grid:
        log_t = math.log(t)
        log_fbar = flow.log_fbar(t)
        upper.append(math.exp((1.0 / alpha + delta) * log_t + log_fbar))
        lower.append(math.exp((1.0 / alpha - delta) * log_t + log_fbar))
    return upper, lower


def karamata_phi_check(flow: CumulantFlow, z_grid: Sequence[float]) -> List[float]:
    """ϕ(z)·α·z^α·L(1/z), which tends to 1 as z ↓ 0"""
    alpha = rv_index_at_zero(flow.mech)
    if not alpha > 0:
        raise ValueError("the Karamata check on ϕ needs α > 0")
    ratios = []
    for z in z_grid:
        log_z = math.log(z)
        phi = float(np.real(flow.phi_at_log(log_z)))
        slowly = float(np.real(flow.mech.slowly_varying_at_log(-log_z)))
        ratios.append(phi * alpha * math.exp(alpha * log_z) * slowly)
    return ratios


@dataclass
class LevyTailReport:
    u_index: Optional[IndexEstimate]
    u_hat_index: Optional[IndexEstimate]
    trivial: bool = False
    finite_second_moment: bool = False

    def describe(self) -> dict:
        if self.trivial:
            return {"trivial": True}
        return {
            "trivial": False,
            "U_index_at_infinity": self.u_index.index,
            "U_hat_index_at_zero": self.u_hat_index.index,
            "finite_second_moment": self.finite_second_moment,
        }


def levy_tail_diagnostic(
    triplet: LevyTriplet,
    z_grid: Tuple[float, float] = settings.DEFAULT_INFINITY_GRID,
    theta_grid: Tuple[float, float] = settings.DEFAULT_ZERO_GRID,
) -> LevyTailReport:
    """Indices of U(z) = ∫_(0,z] x²Λ(dx) at ∞ and of Û(θ) = ∫ e^{-θx} x²Λ(dx) at 0"""
    if not triplet.has_measure:
        terminal_logger.add_log("Λ ≡ 0: no tail to diagnose", "REGVAR", "regvar")
        return LevyTailReport(u_index=None, u_hat_index=None, trivial=True,
                              finite_second_moment=True)

    z_start, z_decades = _grid_args("infinity", z_grid)
    theta_start, theta_decades = _grid_args("zero", theta_grid)
    u_index = estimate_index(triplet.u_cumulative, "infinity", z_decades, start=z_start)
    u_hat_index = estimate_index(lambda th: float(np.real(triplet.u_hat(th))), "zero", theta_decades,
                                 start=theta_start)
    density = triplet.density
    finite = density is None or density.weight == 0 or density.tail_exponent > 3.0
    return LevyTailReport(u_index=u_index, u_hat_index=u_hat_index, finite_second_moment=finite)
