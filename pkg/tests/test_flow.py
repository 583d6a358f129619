import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from config.errors import GreyConditionError
from engines.flow import CumulantFlow
from engines.levy import ExponentialDensity, LevyTriplet
from engines.mechanism import General, LogBernstein, Quadratic, Stable, StableSum

GRID = (0.1, 0.5, 1.0, 5.0, 10.0)


@pytest.mark.parametrize("mech, closed", [
    (Stable(c=1.0, alpha=1.0), lambda t, lam: (lam ** -1.0 + t) ** -1.0),
    (Quadratic(b=1.0), lambda t, lam: lam / (1.0 + t * lam)),
])
def test_u_agrees_with_backward_ode_and_closed_form(mech, closed):
    flow = CumulantFlow(mech)
    for t in GRID:
        for lam in GRID:
            u = flow.u(t, lam)
            assert u == pytest.approx(flow.u_ode(t, lam).value, rel=1e-8)
            assert u == pytest.approx(closed(t, lam), rel=1e-12)


@pytest.mark.parametrize("c, alpha", [(1.0, 0.5), (2.0, 0.5), (1.0, 1.0), (3.0, 1.0)])
def test_phi_matches_stable_closed_form(c, alpha):
    flow = CumulantFlow(Stable(c=c, alpha=alpha))
    for lam in np.geomspace(1e-3, 1e3, 13):
        assert flow.phi(lam) == pytest.approx(lam ** -alpha / (c * alpha), rel=1e-10)


def test_varphi_inverts_phi_by_root_finding(reciprocal_flow):
    for t in (1e-2, 1.0, 1e3, 1e8):
        assert reciprocal_flow.phi(reciprocal_flow.varphi(t)) == pytest.approx(t, rel=1e-10)


def test_varphi_limits(stable_flow):
    assert stable_flow.u(2.0, math.inf) == pytest.approx(stable_flow.varphi(2.0))
    assert stable_flow.u(0.0, 3.0) == 3.0
    assert stable_flow.u(5.0, 0.0) == 0.0
    assert stable_flow.log_varphi(math.inf) == -math.inf


@given(s=st.floats(min_value=0.05, max_value=20.0), t=st.floats(min_value=0.05, max_value=20.0),
       lam=st.floats(min_value=1e-2, max_value=1e2))
def test_semigroup_identity(reciprocal_flow, s, t, lam):
    direct = reciprocal_flow.u(s + t, lam)
    composed = reciprocal_flow.u(t, reciprocal_flow.u(s, lam))
    assert composed == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("t, lam", [(0.5, 0.5), (1.0, 2.0), (10.0, 5.0)])
def test_du_dlambda_matches_finite_difference(reciprocal_flow, t, lam):
    h = 1e-5 * lam
    numeric = (reciprocal_flow.u(t, lam + h) - reciprocal_flow.u(t, lam - h)) / (2 * h)
    assert reciprocal_flow.du_dlambda(t, lam) == pytest.approx(numeric, rel=1e-6)


def test_forward_equation_residual_is_small():
    flow = CumulantFlow(Stable(c=1.0, alpha=0.5))
    assert flow.forward_residual(2.0, 1.5) < 1e-5


def test_survival_and_mean(feller_flow):
    # φ(t) = 1/(bt) for the Feller diffusion
    assert feller_flow.survival(50.0, 1.0) == pytest.approx(-math.expm1(-1.0 / 50.0), rel=1e-12)
    assert feller_flow.fbar(50.0) == feller_flow.survival(50.0, 1.0)
    assert feller_flow.mean(50.0, 2.5) == 2.5


def test_log_survival_stays_finite_far_out(log_bernstein_flow):
    log_fbar = log_bernstein_flow.log_fbar(1e8)
    assert math.isfinite(log_fbar)
    assert log_fbar < math.log(1e-12)


def test_complex_u_matches_real_u_on_the_axis(reciprocal_flow):
    log_lams = np.log(np.array([0.5, 2.0], dtype=complex))
    values = np.exp(reciprocal_flow.log_u_complex(3.0, log_lams))
    expected = np.array([reciprocal_flow.u(3.0, 0.5), reciprocal_flow.u(3.0, 2.0)])
    assert values.real == pytest.approx(expected, rel=1e-8)
    assert np.abs(values.imag).max() < 1e-10


def test_ode_solution_metadata():
    flow = CumulantFlow(Stable(c=1.0, alpha=1.0))
    solution = flow.u_ode(1.0, 1.0)
    assert not solution.absorbed
    assert solution.steps > 0
    assert flow.u_ode(0.0, 4.0).value == 4.0


def test_arguments_are_validated(stable_flow):
    with pytest.raises(ValueError):
        stable_flow.u(-1.0, 1.0)
    with pytest.raises(ValueError):
        stable_flow.phi(0.0)
    with pytest.raises(ValueError):
        stable_flow.survival(1.0, 0.0)


def test_grey_failure_is_a_hard_error():
    # one atom: ψ(λ) = e^{-λ} - 1 + λ grows linearly, so ∫^∞ dξ/ψ diverges
    flow = CumulantFlow(General(LevyTriplet(atoms=((1.0, 1.0),))))
    with pytest.raises(GreyConditionError):
        flow.varphi(1.0)


@pytest.fixture(scope="module")
def stable_sum_flow():
    return CumulantFlow(StableSum(beta=0.9, gamma=0.4))


@pytest.mark.parametrize("flow_name", ["stable_sum_flow", "log_bernstein_flow"])
def test_u_agrees_with_backward_ode_off_the_closed_forms(request, flow_name):
    flow = request.getfixturevalue(flow_name)
    for t in GRID:
        for lam in GRID:
            assert flow.u(t, lam) == pytest.approx(flow.u_ode(t, lam).value, rel=1e-8)


@pytest.mark.parametrize("flow_name", ["stable_sum_flow", "log_bernstein_flow"])
@given(s=st.floats(min_value=0.1, max_value=10.0), t=st.floats(min_value=0.1, max_value=10.0),
       lam=st.floats(min_value=0.1, max_value=10.0))
def test_semigroup_identity_off_the_closed_forms(request, flow_name, s, t, lam):
    flow = request.getfixturevalue(flow_name)
    direct = flow.u(s + t, lam)
    assert abs(flow.u(t, flow.u(s, lam)) - direct) <= 1e-9 * (1.0 + direct)


@given(t=st.floats(min_value=100.0, max_value=1e4), lam=st.floats(min_value=1e-2, max_value=1e2),
       x=st.floats(min_value=1e-2, max_value=10.0), y=st.floats(min_value=1e-2, max_value=10.0))
def test_branching_property_splits_the_initial_mass(reciprocal_flow, t, lam, x, y):
    # P_{x+y} is the law of two independent copies started from x and y
    u = reciprocal_flow.u(t, lam)
    assert math.exp(-(x + y) * u) == pytest.approx(math.exp(-x * u) * math.exp(-y * u), rel=1e-13)
    extinct_together = -math.expm1(reciprocal_flow.log_survival(t, x + y))
    extinct_apart = -math.expm1(reciprocal_flow.log_survival(t, x)) * -math.expm1(reciprocal_flow.log_survival(t, y))
    assert extinct_together == pytest.approx(extinct_apart, rel=1e-12)


@given(t=st.floats(min_value=100.0, max_value=1e4), x=st.floats(min_value=1e-2, max_value=10.0))
def test_survival_is_a_probability_monotone_in_t_and_x(reciprocal_flow, t, x):
    p = reciprocal_flow.survival(t, x)
    assert 0.0 < p < 1.0
    assert reciprocal_flow.log_survival(1.5 * t, x) < reciprocal_flow.log_survival(t, x)
    assert reciprocal_flow.log_survival(t, 1.5 * x) > reciprocal_flow.log_survival(t, x)


def test_log_bernstein_varphi_against_bisection(log_bernstein_flow):
    # ϕ decreases, so bisect log z between a point above and a point below t = 100
    lo, hi = math.log(1e-12), 0.0
    assert log_bernstein_flow.phi(math.exp(lo)) > 100.0 > log_bernstein_flow.phi(math.exp(hi))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if log_bernstein_flow.phi(math.exp(mid)) > 100.0:
            lo = mid
        else:
            hi = mid
    assert log_bernstein_flow.varphi(100.0) == pytest.approx(math.exp(0.5 * (lo + hi)), rel=1e-12)


def test_mean_of_a_critical_general_mechanism_is_conserved():
    flow = CumulantFlow(General(LevyTriplet(diffusion=1.0, density=ExponentialDensity())))
    assert flow.mean(1e12, 2.5) == 2.5
