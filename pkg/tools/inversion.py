"""
Numerical Laplace inversion of CDF transforms.

A probability transform h(θ) = ∫ e^{-θy} dH(y) is inverted through h(θ)/θ.
Three methods are available and the handle's analyticity decides which one is
admissible:

- fixed Talbot contour (default, 32 nodes) for transforms analytic in the
  plane cut along the negative axis
- Euler summation on a vertical line (Abate–Whitt) for transforms only known
  on Re θ > 0
- Gaver–Stehfest through mpmath for real-axis evaluators that accept
  extended-precision arguments
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np
from scipy.special import comb

from config import settings
from config.errors import InversionError
from config.terminal_logger import terminal_logger

CLAMP_EPS = 1e-6
DIVERGENCE_BAND = 0.05


class Analyticity(str, Enum):
    CUT_PLANE = "cut_plane"
    RIGHT_HALF_PLANE = "right_half_plane"
    REAL_AXIS = "real_axis"


class Method(str, Enum):
    TALBOT = "talbot"
    EULER = "euler"
    STEHFEST = "stehfest"


ADMISSIBLE = {
    Analyticity.CUT_PLANE: (Method.TALBOT, Method.EULER, Method.STEHFEST),
    Analyticity.RIGHT_HALF_PLANE: (Method.EULER, Method.STEHFEST),
    Analyticity.REAL_AXIS: (Method.STEHFEST,),
}


@dataclass(frozen=True)
class TransformHandle:
    """
    h(θ) of a sub-probability law.

    evaluator maps a numpy array of (complex) θ to h(θ); extended_evaluator,
    when given, maps one mpmath number to h(θ) at working precision and is the
    only route for the Gaver–Stehfest method.
    """

    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    total_mass: float = 1.0
    analyticity: Analyticity = Analyticity.CUT_PLANE
    extended_evaluator: Optional[Callable] = None
    label: str = ""

    def default_method(self) -> Method:
        return ADMISSIBLE[self.analyticity][0]


def _talbot(handle: TransformHandle, y: float, nodes: int) -> float:
    r = 2.0 * nodes / 5.0
    theta = np.pi * np.arange(1, nodes) / nodes
    cot = 1.0 / np.tan(theta)
    delta = np.concatenate(([r], r * theta * (cot + 1j)))
    gamma = np.concatenate(([0.5], 1.0 + 1j * theta * (1.0 + cot ** 2) - 1j * cot))
    p = delta / y
    transform = np.asarray(handle.evaluator(p), dtype=complex) / p
    terms = gamma * np.exp(delta) * transform
    terms[0] = terms[0].real
    return float(r / (nodes * y) * np.sum(terms.real))


def euler_weights(nodes: int) -> np.ndarray:
    xi = np.ones(2 * nodes + 1)
    xi[0] = 0.5
    xi[2 * nodes] = 2.0 ** -nodes
    for k in range(1, nodes):
        xi[2 * nodes - k] = xi[2 * nodes - k + 1] + 2.0 ** -nodes * comb(nodes, k, exact=False)
    signs = np.where(np.arange(2 * nodes + 1) % 2 == 0, 1.0, -1.0)
    return signs * xi


def _euler(handle: TransformHandle, y: float, nodes: int) -> float:
    beta = nodes * np.log(10.0) / 3.0 + 1j * np.pi * np.arange(2 * nodes + 1)
    p = beta / y
    transform = np.asarray(handle.evaluator(p), dtype=complex) / p
    return float(10.0 ** (nodes / 3.0) / y * np.sum(euler_weights(nodes) * transform.real))


def _stehfest(handle: TransformHandle, y: float, degree: int) -> float:
    if handle.extended_evaluator is None:
        raise InversionError(
            "Gaver–Stehfest needs an extended-precision evaluator; double-precision values "
            "cannot survive its weights",
            {"label": handle.label, "y": y},
        )
    value = mpmath.invertlaplace(lambda p: handle.extended_evaluator(p) / p, y,
                                 method="stehfest", degree=degree)
    return float(value)


def _resolve_method(handle: TransformHandle, method: Optional[Method]) -> Method:
    admissible = ADMISSIBLE[handle.analyticity]
    if method is None:
        return admissible[0]
    method = Method(method)
    if method not in admissible:
        fallback = admissible[0]
        terminal_logger.add_log(
            f"{method.value} needs more analyticity than '{handle.label}' declares "
            f"({handle.analyticity.value}); using {fallback.value}",
            "WARNING", "inversion",
        )
        return fallback
    return method


def invert_cdf_raw(handle: TransformHandle, y: float, method: Optional[Method] = None,
                   nodes: Optional[int] = None) -> float:
    """Unclamped H(y)"""
    if y <= 0:
        raise ValueError(f"inversion point must be positive, got {y}")
    chosen = _resolve_method(handle, method)
    if chosen == Method.TALBOT:
        return _talbot(handle, y, nodes or settings.TALBOT_NODES)
    if chosen == Method.EULER:
        return _euler(handle, y, nodes or settings.EULER_NODES)
    return _stehfest(handle, y, nodes or settings.STEHFEST_DEGREE)


def invert_cdf(handle: TransformHandle, y: float, method: Optional[Method] = None,
               nodes: Optional[int] = None) -> float:
    """H(y), clamped to [-ε, total_mass + ε]; wildly off values are an error"""
    raw = invert_cdf_raw(handle, y, method, nodes)
    mass = handle.total_mass
    if not np.isfinite(raw) or raw < -DIVERGENCE_BAND or raw > mass + DIVERGENCE_BAND:
        raise InversionError(
            f"inversion of '{handle.label}' at y={y} diverged (raw={raw})",
            {"label": handle.label, "y": y, "raw": raw,
             "method": _resolve_method(handle, method).value, "nodes": nodes},
        )
    return float(min(max(raw, -CLAMP_EPS), mass + CLAMP_EPS))


def sup_distance(f: Callable[[float], float], g: Callable[[float], float], grid: Sequence[float]) -> float:
    """max |F(y) - G(y)| over the grid"""
    if len(grid) == 0:
        raise ValueError("sup distance needs a nonempty grid")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("sup distance grid must be sorted")
    return float(max(abs(f(y) - g(y)) for y in grid))
