"""
Small numerical primitives shared by the engines: stable one-minus-exponential
in log form, checked quadrature, geometric grids and Aitken acceleration.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from config.errors import QuadratureError


def log_one_minus_exp_neg(a):
    """
    log(1 - exp(-exp(a))) for real or complex a.

    The argument is log v, so survival-type quantities 1 - e^{-v} stay accurate
    when v itself is far below the double-precision range.
    """
    a = np.asarray(a)
    v = np.exp(a)
    small = np.abs(v) < 1e-5
    with np.errstate(divide="ignore", invalid="ignore"):
        series = a - v / 2 + v * v / 24
        direct = np.log(-np.expm1(-np.where(small, 1.0, v)))
    out = np.where(small, series, direct)
    return out if out.ndim else out[()]


def one_minus_exp_neg(v):
    """1 - e^{-v} without cancellation for small v"""
    return -np.expm1(-np.asarray(v))


def geometric_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if lo <= 0 or hi <= 0:
        raise ValueError("geometric grid bounds must be positive")
    if n < 2:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, n)


def aitken(seq: Sequence[float]) -> float:
    """Aitken Δ² estimate from the last three terms; falls back to the last term"""
    if len(seq) < 3:
        return float(seq[-1])
    x0, x1, x2 = (float(v) for v in seq[-3:])
    denom = x2 - 2.0 * x1 + x0
    if denom == 0.0 or not np.isfinite(denom):
        return x2
    estimate = x2 - (x2 - x1) ** 2 / denom
    # a nearly flat sequence makes the correction meaningless
    if abs(estimate - x2) > 1e3 * abs(x2 - x1) + 1e-300:
        return x2
    return estimate


def quad_checked(
    func: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float,
    abs_tol: float = 0.0,
    limit: int = 200,
    points: Optional[Sequence[float]] = None,
    weight: Optional[str] = None,
    wvar=None,
    what: str = "integral",
) -> float:
    """
    scipy.integrate.quad with a hard failure instead of a warning.

    Roundoff-limited results are accepted as long as the reported error
    stays within a thousand times the requested relative tolerance.
    """
    kwargs = dict(epsabs=abs_tol, epsrel=max(rel_tol, 1e-14), limit=limit, full_output=1)
    if points is not None:
        kwargs["points"] = points
    if weight is not None:
        kwargs["weight"] = weight
        kwargs["wvar"] = wvar
    result = integrate.quad(func, a, b, **kwargs)
    value, abserr = result[0], result[1]
    if not np.isfinite(value):
        raise QuadratureError(f"{what}: non-finite value on [{a}, {b}]")
    if len(result) > 3:
        allowed = max(1e3 * rel_tol * abs(value), 1e3 * abs_tol, 1e-300)
        if abserr > allowed:
            raise QuadratureError(
                f"{what}: no convergence on [{a}, {b}] (value={value:.6g}, error={abserr:.3g}); "
                f"{result[3]}"
            )
    return float(value)


def quad_complex(
    func: Callable[[float], complex],
    a: float,
    b: float,
    rel_tol: float,
    what: str = "integral",
    **kwargs,
) -> complex:
    """
    Integrate a complex-valued integrand as two real quadratures.

    Either part may be close to zero, so both share an absolute tolerance
    taken from a coarse pass over the modulus.
    """
    magnitude = quad_checked(lambda s: float(abs(func(s))), a, b, 1e-6, what=f"{what} (modulus)", **kwargs)
    abs_tol = rel_tol * magnitude
    re = quad_checked(lambda s: float(np.real(func(s))), a, b, rel_tol, abs_tol=abs_tol,
                      what=f"{what} (re)", **kwargs)
    im = quad_checked(lambda s: float(np.imag(func(s))), a, b, rel_tol, abs_tol=abs_tol,
                      what=f"{what} (im)", **kwargs)
    return complex(re, im)
