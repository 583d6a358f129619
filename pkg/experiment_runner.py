"""
Experiment registry: each entry reproduces one convergence study and decides
pass or fail against its threshold.

Every run writes `<name>.csv` (TransformTable), `<name>.error-vs-t.dat` and,
for CDF experiments, `<name>.cdf-overlay.dat` into the output directory.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from config import settings
from config.errors import GreyConditionError
from config.terminal_logger import terminal_logger
from data.models import ExperimentConfig, NormingKind
from data.path_simulator import dump_samples, empirical_conditional, refine_stable_step, sample_feller_batch
from engines.flow import CumulantFlow
from engines.limits import (
    AlphaZeroScheme,
    ConditionalLaw,
    CustomNorming,
    ExponentialUnit,
    FbarNorming,
    LinnikType,
    PowerNorming,
    alpha0_limit_cdf,
    alpha0_normalized_cdf,
    conditional_cdf,
    conditioned_log_complement,
    conditioned_lt,
    limit_lt,
    linnik_cdf_real_axis,
    theorem42_timescale,
)
from engines.mechanism import (
    BranchingMechanism,
    General,
    LogBernstein,
    Quadratic,
    ReciprocalSum,
    Stable,
    StableSum,
    grey_condition,
    rv_index_at_zero,
)
from tools.inversion import invert_cdf
from tools.numerics import geometric_grid
from tools.regvar import estimate_index, karamata_phi_check, levy_tail_diagnostic
from tools.tables import TransformTable, emit_plotdata


@dataclass
class Verdict:
    passed: bool
    summary: str


@dataclass
class ExperimentContext:
    config: ExperimentConfig
    mech: BranchingMechanism
    flow: CumulantFlow
    table: TransformTable
    out_dir: Path

    def t_grid(self, default) -> List[float]:
        return list(self.config.t_grid) or list(default)

    def theta_grid(self, default=None) -> List[float]:
        if self.config.theta_grid:
            return list(self.config.theta_grid)
        return list(default if default is not None else geometric_grid(0.1, 10.0, settings.DEFAULT_THETA_GRID_SIZE))

    def y_grid(self, default) -> List[float]:
        return list(self.config.y_grid) or list(default)

    def threshold(self, default: float) -> float:
        return self.config.threshold if self.config.threshold is not None else default

    def paths(self, default: int) -> int:
        return self.config.paths if "paths" in self.config.model_fields_set else default


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    body: Callable[[ExperimentContext], Verdict]
    default_mechanism: Callable[[], BranchingMechanism]
    overlay_quantity: Optional[str] = None


EXPERIMENTS: Dict[str, Experiment] = {}


def register(name: str, description: str, default_mechanism: Callable[[], BranchingMechanism],
             overlay_quantity: Optional[str] = None):
    def decorator(body):
        EXPERIMENTS[name] = Experiment(name, description, body, default_mechanism, overlay_quantity)
        return body
    return decorator


@dataclass
class ExperimentResult:
    name: str
    verdict: Verdict
    table: TransformTable
    files: List[Path] = field(default_factory=list)

    @property
    def exit_status(self) -> int:
        return 0 if self.verdict.passed else 1


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------

DECADES = (1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)


def strictly_decreasing(values) -> bool:
    values = list(values)
    return all(b < a for a, b in zip(values, values[1:]))


def _norming(config: ExperimentConfig):
    if config.norming == NormingKind.FBAR:
        return FbarNorming()
    if config.norming == NormingKind.POWER:
        return PowerNorming(config.norming_value)
    if config.norming == NormingKind.UNIT:
        return CustomNorming(log_value=0.0)
    return CustomNorming.of(config.norming_value)


def _stable_constants(mech: BranchingMechanism):
    if isinstance(mech, Stable):
        return mech.c, mech.alpha
    if isinstance(mech, Quadratic):
        return mech.b, 1.0
    return None


def linear_limit(mech: BranchingMechanism, alpha: float, norming) -> LinnikType:
    """Limit law of the linearly normed conditioned process, where one is known in closed form"""
    if isinstance(norming, FbarNorming):
        return LinnikType(alpha)
    constants = _stable_constants(mech)
    if isinstance(norming, PowerNorming) and constants and abs(norming.exponent - 1.0 / alpha) < 1e-12:
        return LinnikType.for_power_norming(*constants)
    raise ValueError(
        f"no closed-form limit for {mech.variant} under {norming.name} norming; "
        f"use fbar, or power with exponent 1/α on a stable or quadratic mechanism"
    )


def _lt_rows(ctx: ExperimentContext, quantity: str, norming, limit, t_grid, theta_grid):
    for t in t_grid:
        law = ConditionalLaw(ctx.flow, t, ctx.config.x, norming)
        for theta in theta_grid:
            ctx.table.add_row(quantity, t, theta, conditioned_lt(law, theta), limit_lt(limit, theta))


def _convergence_verdict(ctx: ExperimentContext, quantity: str, threshold: float, label: str) -> Verdict:
    by_t = ctx.table.max_error_by_t(quantity)
    last = float(by_t.iloc[-1])
    trend = strictly_decreasing(by_t.values)
    passed = trend and last <= threshold
    summary = (f"{label}: sup error {last:.3e} at t={by_t.index[-1]:g} (threshold {threshold:g}), "
               f"trend {'decreasing' if trend else 'NOT decreasing'}")
    return Verdict(passed, summary)


def _combine(*verdicts: Verdict) -> Verdict:
    return Verdict(all(v.passed for v in verdicts), "; ".join(v.summary for v in verdicts))


# ----------------------------------------------------------------------
# Experiments
# ----------------------------------------------------------------------

FLOW_GRID = (0.1, 0.5, 1.0, 5.0, 10.0)


@register("flow-check", "u_t(λ) from ϕ/φ against the backward ODE and the semigroup identity",
          lambda: Stable(c=1.0, alpha=1.0))
def flow_check(ctx: ExperimentContext) -> Verdict:
    threshold = ctx.threshold(1e-8)
    worst_ode, worst_semigroup = 0.0, 0.0
    for t in ctx.t_grid(FLOW_GRID):
        for lam in ctx.theta_grid(FLOW_GRID):
            u = ctx.flow.u(t, lam)
            ode = ctx.flow.u_ode(t, lam).value
            ctx.table.add_row("u_vs_ode", t, lam, u, ode)
            worst_ode = max(worst_ode, abs(u - ode) / u)
            half = ctx.flow.u(t / 2.0, ctx.flow.u(t / 2.0, lam))
            ctx.table.add_row("semigroup", t, lam, u, half)
            worst_semigroup = max(worst_semigroup, abs(u - half) / u)
    passed = worst_ode <= threshold and worst_semigroup <= threshold
    return Verdict(passed, f"max relative |u - u_ode| {worst_ode:.3e}, semigroup {worst_semigroup:.3e} "
                           f"(threshold {threshold:g})")


@register("theorem32", "F̄-normed conditioned transform against the Linnik-type limit",
          lambda: Stable(c=1.0, alpha=1.0))
def theorem32(ctx: ExperimentContext) -> Verdict:
    alpha = rv_index_at_zero(ctx.mech)
    if alpha == 0.0:
        raise ValueError("theorem32 needs α > 0; run theorem42 or example5 for index-zero mechanisms")
    norming = _norming(ctx.config)
    limit = linear_limit(ctx.mech, alpha, norming)
    _lt_rows(ctx, "lt", norming, limit, ctx.t_grid((1e2, 1e4, 1e6)), ctx.theta_grid())
    return _convergence_verdict(ctx, "lt", ctx.threshold(1e-3), f"Linnik-type limit α={alpha:g}, c={limit.c:g}")


@register("theorem42", "α = 0 normalization L(F̄^{-1})V(X_t) against 1 - e^{-y}",
          lambda: LogBernstein(beta=1.0), overlay_quantity="cdf")
def theorem42(ctx: ExperimentContext) -> Verdict:
    scheme = AlphaZeroScheme(ctx.flow)
    t_grid = ctx.t_grid((1e2, 1e4, 1e6, 1e8))
    for t in t_grid:
        for y in ctx.y_grid((0.5, 1.0, 2.0)):
            ctx.table.add_row("cdf", t, y, alpha0_normalized_cdf(scheme, t, ctx.config.x, y), alpha0_limit_cdf(y))
        ctx.table.add_row("timescale", t, 0.0, theorem42_timescale(scheme, t), 1.0)
    cdf = _convergence_verdict(ctx, "cdf", ctx.threshold(0.1), "α=0 CDF")
    ratio = float(ctx.table.select("timescale")["finite_t_value"].iloc[-1])
    timescale = Verdict(0.8 <= ratio <= 1.2, f"V(1/F̄(t))/t = {ratio:.4f} at t={t_grid[-1]:g}")
    return _combine(cdf, timescale)


@register("example1", "stable mechanism normed by t^{-1/α}: constant (cα)^{1/α} in the limit",
          lambda: Stable(c=2.0, alpha=0.5))
def example1(ctx: ExperimentContext) -> Verdict:
    constants = _stable_constants(ctx.mech)
    if constants is None:
        raise ValueError("example1 needs a stable or quadratic mechanism")
    c, alpha = constants
    t_grid = ctx.t_grid((1e2, 1e4, 1e6))
    power = PowerNorming(1.0 / alpha)
    _lt_rows(ctx, "lt", power, LinnikType.for_power_norming(c, alpha), t_grid, ctx.theta_grid())
    _lt_rows(ctx, "lt_fbar", FbarNorming(), LinnikType(alpha), t_grid, ctx.theta_grid())
    fbar = ctx.table.max_error("lt_fbar")
    verdict = _convergence_verdict(ctx, "lt", ctx.threshold(1e-3), "t^(-1/α) norming, c'=(cα)^(1/α)")
    return Verdict(verdict.passed, f"{verdict.summary}; F̄ norming error {fbar:.3e}")


@register("example2", "Feller diffusion normed by 1/t against Exp(rate 2/σ)",
          lambda: Quadratic(b=1.0), overlay_quantity="cdf")
def example2(ctx: ExperimentContext) -> Verdict:
    sigma = ctx.mech.sigma
    if not math.isfinite(sigma):
        raise ValueError("example2 needs ψ''(0+) < ∞")
    rate = 2.0 / sigma
    norming = PowerNorming(1.0)
    t_grid = ctx.t_grid((1e1, 1e2, 1e3))
    for t in t_grid:
        law = ConditionalLaw(ctx.flow, t, ctx.config.x, norming)
        for theta in ctx.theta_grid():
            ctx.table.add_row("lt", t, theta, conditioned_lt(law, theta), rate / (rate + theta))
    law = ConditionalLaw(ctx.flow, t_grid[-1], ctx.config.x, norming)
    for y in ctx.y_grid(geometric_grid(0.1, 5.0, 15)):
        ctx.table.add_row("cdf", t_grid[-1], y, conditional_cdf(law, y), -math.expm1(-rate * y))
    threshold = ctx.threshold(1e-2)
    lt = _convergence_verdict(ctx, "lt", threshold, f"Exp(rate {rate:g}) transform")
    cdf_error = ctx.table.max_error("cdf")
    return _combine(lt, Verdict(cdf_error <= threshold, f"CDF sup error {cdf_error:.3e}"))


def _fbar_constant(ctx: ExperimentContext, alpha: float, label: str) -> Verdict:
    t_grid = ctx.t_grid(DECADES)
    for t in t_grid:
        ratio = math.exp(ctx.flow.log_fbar(t) + math.log(alpha * t) / alpha)
        ctx.table.add_row("fbar_constant", t, 0.0, ratio, 1.0)
    _lt_rows(ctx, "lt", FbarNorming(), LinnikType(alpha), [t for t in t_grid if t <= 1e6], ctx.theta_grid())
    last = float(ctx.table.select("fbar_constant")["finite_t_value"].iloc[-1])
    tolerance = ctx.threshold(0.05)
    return Verdict(abs(last - 1.0) <= tolerance,
                   f"{label} = {last:.5f} at t={t_grid[-1]:g} (window ±{tolerance:g}); "
                   f"Linnik transform error {ctx.table.max_error('lt'):.3e}")


@register("example3", "ReciprocalSum: F̄(t)(αt)^{1/α} → 1", lambda: ReciprocalSum(alpha=0.8, beta=0.2))
def example3(ctx: ExperimentContext) -> Verdict:
    return _fbar_constant(ctx, rv_index_at_zero(ctx.mech), "F̄(t)(αt)^(1/α)")


@register("example4", "StableSum: F̄(t)(γt)^{1/γ} → 1", lambda: StableSum(beta=1.0, gamma=0.5))
def example4(ctx: ExperimentContext) -> Verdict:
    return _fbar_constant(ctx, rv_index_at_zero(ctx.mech), "F̄(t)(γt)^(1/γ)")


@register("example5", "LogBernstein: -log F̄(t) ~ ((β+1)t)^{1/(β+1)} and the degenerate F̄-normed limit",
          lambda: LogBernstein(beta=1.0))
def example5(ctx: ExperimentContext) -> Verdict:
    if not isinstance(ctx.mech, LogBernstein):
        raise ValueError("example5 needs a log_bernstein mechanism")
    beta = ctx.mech.beta
    t_grid = ctx.t_grid(DECADES)
    gaps = []
    for t in t_grid:
        log_fbar = ctx.flow.log_fbar(t)
        ctx.table.add_row("log_fbar_ratio", t, 0.0, -log_fbar / ((beta + 1.0) * t) ** (1.0 / (beta + 1.0)), 1.0)
        law = ConditionalLaw(ctx.flow, t, ctx.config.x, FbarNorming())
        gaps.append(conditioned_log_complement(law, 1.0))
        ctx.table.add_row("fbar_normed_lt", t, 1.0, -math.expm1(gaps[-1]), 1.0)
    ratio = float(ctx.table.select("log_fbar_ratio")["finite_t_value"].iloc[-1])
    tolerance = ctx.threshold(0.1)
    return _combine(
        Verdict(abs(ratio - 1.0) <= tolerance, f"-log F̄/((β+1)t)^(1/(β+1)) = {ratio:.4f} at t={t_grid[-1]:g}"),
        Verdict(strictly_decreasing(gaps), f"F̄-normed transform at θ=1 rises towards 1: log(1 - h) = {gaps[-1]:.4g}"),
    )


@register("regvar", "regular-variation index of F̄ at ∞, the Karamata check on ϕ and Lévy tail indices",
          lambda: Stable(c=1.0, alpha=0.5))
def regvar(ctx: ExperimentContext) -> Verdict:
    alpha = rv_index_at_zero(ctx.mech)
    if alpha == 0.0:
        raise ValueError("F̄ is not regularly varying when α = 0; run example5 instead")
    general = isinstance(ctx.mech, General)
    verdicts = []
    if grey_condition(ctx.mech):
        verdicts.extend(_fbar_index_verdicts(ctx, alpha))
    elif general:
        terminal_logger.add_log(f"{ctx.mech.variant}: ∫^∞ dξ/ψ diverges, so F̄ ≡ 1; "
                                f"skipping the F̄ index and the Karamata check", "WARNING", "experiment_runner")
    else:
        raise GreyConditionError(f"{ctx.mech.variant}: ∫^∞ dξ/ψ(ξ) diverges")
    if general:
        verdicts.append(_levy_tail_verdict(ctx, alpha))
    return _combine(*verdicts)


def _fbar_index_verdicts(ctx: ExperimentContext, alpha: float) -> List[Verdict]:
    tolerance = ctx.threshold(0.02)
    estimate = estimate_index(ctx.flow.log_fbar, "infinity", ctx.config.decades, log_values=True)
    t_end = settings.DEFAULT_INFINITY_GRID[0] * 10 ** ctx.config.decades
    ctx.table.add_row("fbar_index", t_end, 0.0, estimate.index, -1.0 / alpha)
    verdicts = [Verdict(abs(estimate.index + 1.0 / alpha) <= tolerance,
                        f"index of F̄ {estimate.index:.5f} vs {-1.0 / alpha:.5f}"
                        f"{'' if estimate.converged else ' (slow convergence)'}")]

    z_grid = geometric_grid(1e-8, 1e-2, 7)
    for z, ratio in zip(z_grid, karamata_phi_check(ctx.flow, z_grid)):
        ctx.table.add_row("karamata_phi", 1.0 / z, z, ratio, 1.0)
    last = float(ctx.table.select("karamata_phi")["finite_t_value"].iloc[0])
    verdicts.append(Verdict(abs(last - 1.0) <= 0.01, f"ϕ(z)αz^αL(1/z) = {last:.5f} at z=1e-8"))
    return verdicts


def _levy_tail_verdict(ctx: ExperimentContext, alpha: float) -> Verdict:
    """index(U) at ∞ plus (1+α) from ψ at 0 must add up to 2"""
    report = levy_tail_diagnostic(ctx.mech.triplet)
    if report.trivial:
        return Verdict(True, "Λ ≡ 0: no Lévy tail")
    u_index = report.u_index.index
    z_end = settings.DEFAULT_INFINITY_GRID[1]
    ctx.table.add_row("U_index", z_end, 0.0, u_index, 1.0 - alpha)
    ctx.table.add_row("U_hat_index", settings.DEFAULT_ZERO_GRID[0], 0.0, report.u_hat_index.index, alpha - 1.0)
    ctx.table.add_row("tail_consistency", z_end, 0.0, u_index + 1.0 + alpha, 2.0)
    tolerance = ctx.threshold(0.05)
    gap = abs(u_index + 1.0 + alpha - 2.0)
    return Verdict(gap <= tolerance,
                   f"index of U at ∞ {u_index:.4f} + (1+α) = {u_index + 1.0 + alpha:.4f} vs 2 "
                   f"(tolerance {tolerance:g})")


def _survival_verdict(ctx: ExperimentContext, law, t: float, sigmas: float = 4.0, bias: float = 0.0) -> Verdict:
    exact = ctx.flow.survival(t, ctx.config.x)
    ctx.table.add_row("survival", t, 0.0, law.survival_fraction, exact)
    allowed = sigmas * law.survival_standard_error + bias
    return Verdict(abs(law.survival_fraction - exact) <= allowed,
                   f"survival {law.survival_fraction:.5f} vs {exact:.5f} within {allowed:.2e} "
                   f"({law.survivors} of {law.total} paths)")


@register("mc-feller", "exact Feller sampling: X_t/t given survival against Exp(rate 2/σ)",
          lambda: Quadratic(b=1.0), overlay_quantity="cdf")
def mc_feller(ctx: ExperimentContext) -> Verdict:
    if not isinstance(ctx.mech, Quadratic):
        raise ValueError("mc-feller needs a quadratic mechanism")
    t = ctx.t_grid((50.0,))[-1]
    rate = 2.0 / ctx.mech.sigma
    batch = sample_feller_batch(t, ctx.config.x, ctx.mech.b, ctx.paths(400_000), ctx.config.seed)
    if ctx.config.dump_samples:
        dump_samples(batch, ctx.out_dir / "mc-feller.samples.tsv")
    law = empirical_conditional(batch, t)
    reference = lambda y: -np.expm1(-rate * np.asarray(y))
    for y in ctx.y_grid(geometric_grid(0.02, 5.0, 40)):
        ctx.table.add_row("cdf", t, y, law.cdf(y), float(reference(y)))
    ks = law.ks_distance(reference)
    threshold = ctx.threshold(0.05)
    return _combine(Verdict(ks <= threshold, f"KS distance {ks:.4f} (threshold {threshold:g})"),
                    _survival_verdict(ctx, law, t))


@register("mc-stable", "Lamperti–Euler stable paths against the exact finite-t conditional CDF",
          lambda: Stable(c=1.0, alpha=0.5), overlay_quantity="cdf")
def mc_stable(ctx: ExperimentContext) -> Verdict:
    constants = _stable_constants(ctx.mech)
    if constants is None:
        raise ValueError("mc-stable needs a stable or quadratic mechanism")
    c, alpha = constants
    t = ctx.t_grid((20.0,))[-1]
    h = ctx.config.step or t / 200.0
    refinement = refine_stable_step(t, ctx.config.x, c, alpha, h, ctx.paths(50_000), ctx.config.seed)
    batch = refinement.fine
    if ctx.config.dump_samples:
        dump_samples(batch, ctx.out_dir / "mc-stable.samples.tsv")
    ctx.table.add_row("survival_step_halving", t, h, refinement.coarse.survival_fraction, batch.survival_fraction)
    q = t ** (-1.0 / alpha)
    law = empirical_conditional(batch, 1.0 / q)
    exact = ConditionalLaw(ctx.flow, t, ctx.config.x, PowerNorming(1.0 / alpha))
    for y in ctx.y_grid(geometric_grid(0.01, 10.0, 25)):
        ctx.table.add_row("cdf", t, y, law.cdf(y), conditional_cdf(exact, y))
    threshold = ctx.threshold(0.05)
    sup = ctx.table.max_error("cdf")
    survival = _survival_verdict(ctx, law, t, sigmas=3.0, bias=refinement.bias_bound)
    return _combine(Verdict(sup <= threshold, f"sup CDF distance {sup:.4f} on the y grid (threshold {threshold:g})"),
                    Verdict(survival.passed, f"{survival.summary}, step-halving bias bound {refinement.bias_bound:.2e}"))


@register("invert-check", "Laplace inversion against closed and real-axis CDFs",
          lambda: Stable(c=1.0, alpha=1.0), overlay_quantity="exponential")
def invert_check(ctx: ExperimentContext) -> Verdict:
    exponential = ExponentialUnit().handle()
    for y in ctx.y_grid(geometric_grid(0.1, 10.0, 50)):
        ctx.table.add_row("exponential", 0.0, y, invert_cdf(exponential, y), -math.expm1(-y))
    linnik = LinnikType(0.5).handle()
    for y in geometric_grid(0.1, 10.0, 12):
        ctx.table.add_row("linnik", 0.0, y, invert_cdf(linnik, y), linnik_cdf_real_axis(0.5, y))
    exp_error = ctx.table.max_error("exponential")
    linnik_error = ctx.table.max_error("linnik")
    threshold = ctx.threshold(1e-6)
    return _combine(Verdict(exp_error <= threshold, f"1/(1+θ) inversion error {exp_error:.2e}"),
                    Verdict(linnik_error <= 1e-4, f"H_0.5 inversion vs real-axis quadrature {linnik_error:.2e}"))


# ----------------------------------------------------------------------
# Runner
# ----------------------------------------------------------------------

def _metadata(config: ExperimentConfig, mech: BranchingMechanism) -> dict:
    return {
        "experiment": config.experiment,
        "mechanism": mech.describe(),
        "norming": config.norming.value,
        "norming_value": config.norming_value,
        "x": config.x,
        "seed": config.seed,
        "tolerances": {"quad_rel": settings.QUAD_REL_TOL, "root_rel": settings.ROOT_REL_TOL,
                       "ode": settings.ODE_TOL, "threshold": config.threshold},
        "config_hash": config.config_hash(),
    }


def run(config: ExperimentConfig) -> ExperimentResult:
    if config.experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment '{config.experiment}' (known: {', '.join(EXPERIMENTS)})")
    experiment = EXPERIMENTS[config.experiment]
    mech = config.mechanism.build() if config.mechanism is not None else experiment.default_mechanism()
    out_dir = config.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)

    terminal_logger.add_log(f"{experiment.name}: {experiment.description} [{mech.describe()}]",
                            "EXPERIMENT", "experiment_runner")
    table = TransformTable(name=experiment.name, metadata=_metadata(config, mech))
    ctx = ExperimentContext(config=config, mech=mech, flow=CumulantFlow(mech), table=table, out_dir=out_dir)
    verdict = experiment.body(ctx)

    files = [table.write_csv(out_dir / f"{experiment.name}.csv"),
             emit_plotdata(table, "error-vs-t", out_dir / f"{experiment.name}.error-vs-t.dat")]
    if experiment.overlay_quantity is not None:
        files.append(emit_plotdata(table, "cdf-overlay", out_dir / f"{experiment.name}.cdf-overlay.dat",
                                   quantity=experiment.overlay_quantity))

    terminal_logger.add_log(f"{experiment.name}: {'PASS' if verdict.passed else 'FAIL'}: {verdict.summary}",
                            "SUCCESS" if verdict.passed else "ERROR", "experiment_runner")
    return ExperimentResult(name=experiment.name, verdict=verdict, table=table, files=files)
