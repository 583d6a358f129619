import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from config.errors import TooFewSurvivorsError
from data.models import PathSample, Scheme
from data.path_simulator import (
    MIN_SURVIVORS,
    block_generator,
    dump_samples,
    empirical_conditional,
    refine_stable_step,
    sample_feller,
    sample_feller_batch,
    sample_stable_batch,
    sample_stable_lamperti,
    seed_record,
    stable_increments,
)
from engines.flow import CumulantFlow
from engines.mechanism import Quadratic, Stable


def test_batches_are_reproducible_and_block_local():
    first = sample_feller_batch(1.0, 1.0, 1.0, 2048, seed=7)
    again = sample_feller_batch(1.0, 1.0, 1.0, 2048, seed=7)
    shorter = sample_feller_batch(1.0, 1.0, 1.0, 1024, seed=7)
    other = sample_feller_batch(1.0, 1.0, 1.0, 2048, seed=8)
    np.testing.assert_array_equal(first.terminal_mass, again.terminal_mass)
    np.testing.assert_array_equal(first.terminal_mass[:1024], shorter.terminal_mass)
    assert not np.array_equal(first.terminal_mass, other.terminal_mass)


def test_seed_records_name_block_and_offset():
    assert seed_record(5, 2, 17) == "philox-5-b2-p17"
    batch = sample_feller_batch(1.0, 1.0, 1.0, 1030, seed=5)
    records = batch.records()
    assert records[0] == "philox-5-b0-p0"
    assert records[1029] == "philox-5-b1-p5"
    sample = next(batch.samples())
    assert sample.scheme == Scheme.EXACT_FELLER


def test_single_path_sampler_uses_the_given_stream():
    a = sample_feller(2.0, 1.0, 1.0, block_generator(3, 0), record="r")
    b = sample_feller(2.0, 1.0, 1.0, block_generator(3, 0), record="r")
    assert a == b
    assert a.seed_record == "r"


def test_feller_mean_and_extinction_probability():
    n = 200_000
    batch = sample_feller_batch(1.0, 1.0, 1.0, n, seed=11)
    masses = batch.terminal_mass
    # E X_t = x, Var X_t = 2bxt
    assert abs(masses.mean() - 1.0) <= 4.0 * math.sqrt(2.0 / n)
    p_zero = math.exp(-1.0)
    assert abs((masses == 0).mean() - p_zero) <= 4.0 * math.sqrt(p_zero * (1 - p_zero) / n)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_feller_transform_matches_flow(lam):
    n = 100_000
    t, x = 2.0, 1.5
    batch = sample_feller_batch(t, x, 1.0, n, seed=21)
    draws = np.exp(-lam * batch.terminal_mass)
    exact = math.exp(-x * CumulantFlow(Quadratic(b=1.0)).u(t, lam))
    assert abs(draws.mean() - exact) <= 4.0 * draws.std() / math.sqrt(n)


def test_branching_property_in_distribution():
    n = 100_000
    joint = sample_feller_batch(3.0, 2.0, 1.0, n, seed=31).terminal_mass
    left = sample_feller_batch(3.0, 1.0, 1.0, n, seed=32).terminal_mass
    right = sample_feller_batch(3.0, 1.0, 1.0, n, seed=33).terminal_mass
    assert stats.ks_2samp(joint, left + right).statistic < 0.015


def test_stable_increments_have_unit_laplace_exponent():
    rng = block_generator(41, 0)
    draws = stable_increments(1.0, 100_000, rng)
    assert draws.var() == pytest.approx(2.0, rel=0.03)
    skewed = stable_increments(0.5, 200_000, block_generator(42, 0))
    # spectrally positive: the left tail is light
    assert np.quantile(skewed, 0.001) > -10.0
    assert np.quantile(skewed, 0.999) > 10.0


def test_lamperti_absorption_and_validation():
    rng = block_generator(1, 0)
    assert sample_stable_lamperti(10.0, 0.0, 1.0, 0.5, 0.1, rng).terminal_mass == 0.0
    with pytest.raises(ValueError):
        sample_stable_lamperti(10.0, 1.0, 1.0, 0.5, 2.0, rng)
    with pytest.raises(ValueError):
        sample_stable_lamperti(10.0, 1.0, 1.0, 1.5, 0.1, rng)
    with pytest.raises(ValueError):
        sample_feller(0.0, 1.0, 1.0, rng)


def test_empirical_law_of_identical_values():
    samples = [PathSample(terminal_mass=2.5, seed_record=f"s{i}", scheme=Scheme.EXACT_FELLER)
               for i in range(MIN_SURVIVORS + 20)]
    samples += [PathSample(terminal_mass=0.0, seed_record="dead", scheme=Scheme.EXACT_FELLER)] * 30
    law = empirical_conditional(samples, 2.5)
    assert law.cdf(0.999) == 0.0
    assert law.cdf(1.0) == 1.0
    assert law.survivors == MIN_SURVIVORS + 20
    assert law.survival_fraction == pytest.approx(120 / 150)


def test_too_few_survivors():
    batch = sample_feller_batch(1000.0, 0.01, 1.0, 1000, seed=3)
    with pytest.raises(TooFewSurvivorsError):
        empirical_conditional(batch, 1000.0)
    with pytest.raises(ValueError):
        empirical_conditional(batch, 0.0)


def test_dump_samples(tmp_path):
    batch = sample_feller_batch(1.0, 1.0, 1.0, 50, seed=9)
    path = dump_samples(batch, tmp_path / "dump" / "samples.tsv")
    frame = pd.read_csv(path, sep="\t")
    assert list(frame.columns) == ["seed_record", "terminal_mass", "survived"]
    assert len(frame) == 50
    assert (frame["survived"] == (frame["terminal_mass"] > 0).astype(int)).all()


@pytest.mark.slow
def test_feller_conditioned_law_is_near_exponential():
    t = 50.0
    batch = sample_feller_batch(t, 1.0, 1.0, 400_000, seed=20240601)
    law = empirical_conditional(batch, t)
    assert 7_000 < law.survivors < 8_800
    assert law.ks_distance(lambda y: -np.expm1(-np.asarray(y))) <= 0.05
    exact = CumulantFlow(Quadratic(b=1.0)).survival(t, 1.0)
    assert abs(law.survival_fraction - exact) <= 4.0 * law.survival_standard_error


@pytest.mark.slow
def test_lamperti_at_alpha_one_agrees_with_exact_feller():
    t, n = 10.0, 100_000
    exact = empirical_conditional(sample_feller_batch(t, 1.0, 1.0, n, seed=51), t)
    euler = empirical_conditional(sample_stable_batch(t, 1.0, 1.0, 1.0, t / 400.0, n, seed=52), t)
    assert exact.ks_two_sample(euler) <= 0.05



def test_step_refinement_halves_the_step():
    refinement = refine_stable_step(2.0, 1.0, 1.0, 0.5, 0.2, 2_000, seed=11)
    assert refinement.coarse.step == 0.2
    assert refinement.fine.step == 0.1
    assert len(refinement.fine) == 2_000
    gap = refinement.coarse.survival_fraction - refinement.fine.survival_fraction
    assert refinement.bias_bound == pytest.approx(abs(gap))
    with pytest.raises(ValueError):
        refine_stable_step(2.0, 1.0, 1.0, 0.5, 0.5, 100, seed=11)


@pytest.mark.slow
def test_lamperti_survival_within_sampling_error_and_step_bias():
    t = 20.0
    refinement = refine_stable_step(t, 1.0, 1.0, 0.5, t / 200.0, 50_000, seed=20240601)
    law = empirical_conditional(refinement.fine, t ** 2)
    # φ(t) = (cαt)^{-1/α} = 1/100
    exact = CumulantFlow(Stable(c=1.0, alpha=0.5)).survival(t, 1.0)
    assert exact == pytest.approx(-math.expm1(-0.01))
    allowed = 3.0 * law.survival_standard_error + refinement.bias_bound
    assert abs(law.survival_fraction - exact) <= allowed
