"""
Terminal-mass samplers for CB processes and empirical conditional laws.

Feller diffusions are drawn exactly as compound Poisson sums of exponentials;
stable mechanisms go through an Euler scheme for the Lamperti time change of
a spectrally positive stable process. Batches use one Philox stream per block
of paths, so a batch depends only on (seed, block_size), never on the order
blocks are produced in.
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from config.errors import TooFewSurvivorsError
from config.terminal_logger import terminal_logger
from data.models import PathSample, Scheme

MIN_SURVIVORS = 100
DEFAULT_BLOCK_SIZE = 1024
MAX_STEP_FRACTION = 0.1


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Stream `block` of `seed`: a Philox generator jumped block·2^128 draws ahead"""
    return np.random.Generator(np.random.Philox(key=seed).jumped(block))


def seed_record(seed: int, block: int, offset: int) -> str:
    return f"philox-{seed}-b{block}-p{offset}"


def stable_increments(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Spectrally positive (1+α)-stable draws S with E e^{-λS} = e^{λ^{1+α}}.

    α = 1 is the Gaussian N(0, 2).
    """
    if alpha == 1.0:
        return rng.normal(0.0, math.sqrt(2.0), size)
    a = 1.0 + alpha
    scale = abs(math.cos(math.pi * a / 2.0)) ** (1.0 / a)
    # scipy's default S1 parametrization: β = 1 is totally skewed to the right
    return stats.levy_stable.rvs(a, 1.0, scale=scale, size=size, random_state=rng)


# ----------------------------------------------------------------------
# Single paths
# ----------------------------------------------------------------------

def _check_feller(t: float, x: float, b: float):
    if not (t > 0 and x > 0 and b > 0):
        raise ValueError(f"Feller sampling needs t, x, b > 0, got t={t}, x={x}, b={b}")


def sample_feller(t: float, x: float, b: float, rng: np.random.Generator,
                  record: str = "unrecorded") -> PathSample:
    """Exact X_t for ψ(λ) = bλ²: N ~ Poisson(x/(bt)) exponentials of mean bt"""
    _check_feller(t, x, b)
    n = rng.poisson(x / (b * t))
    mass = float(rng.gamma(n, b * t)) if n > 0 else 0.0
    return PathSample(terminal_mass=mass, seed_record=record, scheme=Scheme.EXACT_FELLER)


def _lamperti_steps(t: float, h: float) -> int:
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if h > MAX_STEP_FRACTION * t:
        raise ValueError(f"step {h} is too coarse for t={t}; use h ≤ {MAX_STEP_FRACTION * t:g}")
    return int(math.ceil(t / h - 1e-9))


def _check_stable(t: float, x: float, c: float, alpha: float):
    if not (t > 0 and x >= 0 and c > 0):
        raise ValueError(f"stable sampling needs t, c > 0 and x ≥ 0, got t={t}, x={x}, c={c}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _lamperti_euler(masses: np.ndarray, t: float, c: float, alpha: float, h: float,
                    rng: np.random.Generator) -> np.ndarray:
    n_steps = _lamperti_steps(t, h)
    step = t / n_steps
    power = 1.0 / (1.0 + alpha)
    masses = masses.astype(float)
    for _ in range(n_steps):
        alive = np.flatnonzero(masses > 0)
        if alive.size == 0:
            break
        jumps = stable_increments(alpha, alive.size, rng)
        moved = masses[alive] + (c * masses[alive] * step) ** power * jumps
        masses[alive] = np.where(moved > 0, moved, 0.0)
    return masses


def sample_stable_lamperti(t: float, x: float, c: float, alpha: float, h: float,
                           rng: np.random.Generator, record: str = "unrecorded") -> PathSample:
    """X ← max(0, X + (cXh)^{1/(1+α)} S) until t; 0 is absorbing"""
    _check_stable(t, x, c, alpha)
    mass = _lamperti_euler(np.array([x]), t, c, alpha, h, rng)[0]
    return PathSample(terminal_mass=float(mass), seed_record=record, scheme=Scheme.LAMPERTI_EULER, step=h)


# ----------------------------------------------------------------------
# Batches
# ----------------------------------------------------------------------

@dataclass
class PathBatch:
    terminal_mass: np.ndarray
    seed: int
    block_size: int
    scheme: Scheme
    step: Optional[float] = None

    def __len__(self) -> int:
        return len(self.terminal_mass)

    @property
    def survived(self) -> np.ndarray:
        return self.terminal_mass > 0

    @property
    def survival_fraction(self) -> float:
        return float(self.survived.mean())

    def records(self) -> List[str]:
        return [seed_record(self.seed, i // self.block_size, i % self.block_size) for i in range(len(self))]

    def samples(self) -> Iterator[PathSample]:
        for record, mass in zip(self.records(), self.terminal_mass):
            yield PathSample(terminal_mass=float(mass), seed_record=record, scheme=self.scheme, step=self.step)


def _blocks(paths: int, block_size: int) -> Iterator[tuple]:
    if paths <= 0 or block_size <= 0:
        raise ValueError("paths and block_size must be positive")
    for block, first in enumerate(range(0, paths, block_size)):
        yield block, min(block_size, paths - first)


def sample_feller_batch(t: float, x: float, b: float, paths: int, seed: int,
                        block_size: int = DEFAULT_BLOCK_SIZE) -> PathBatch:
    _check_feller(t, x, b)
    out = []
    for block, n in _blocks(paths, block_size):
        rng = block_generator(seed, block)
        counts = rng.poisson(x / (b * t), n)
        masses = np.zeros(n)
        hit = counts > 0
        masses[hit] = rng.gamma(counts[hit], b * t)
        out.append(masses)
    batch = PathBatch(np.concatenate(out), seed, block_size, Scheme.EXACT_FELLER)
    terminal_logger.add_log(
        f"Feller b={b} t={t} x={x}: {int(batch.survived.sum())}/{paths} paths survive",
        "MONTECARLO", "path_simulator",
    )
    return batch


def sample_stable_batch(t: float, x: float, c: float, alpha: float, h: float, paths: int, seed: int,
                        block_size: int = DEFAULT_BLOCK_SIZE) -> PathBatch:
    _check_stable(t, x, c, alpha)
    _lamperti_steps(t, h)
    out = []
    for block, n in _blocks(paths, block_size):
        out.append(_lamperti_euler(np.full(n, float(x)), t, c, alpha, h, block_generator(seed, block)))
    batch = PathBatch(np.concatenate(out), seed, block_size, Scheme.LAMPERTI_EULER, step=h)
    terminal_logger.add_log(
        f"Lamperti–Euler c={c} α={alpha} h={h} t={t} x={x}: {int(batch.survived.sum())}/{paths} paths survive",
        "MONTECARLO", "path_simulator",
    )
    return batch


@dataclass
class StepRefinement:
    """Lamperti–Euler survival at steps h and h/2; their gap bounds the bias of the finer run"""

    coarse: PathBatch
    fine: PathBatch

    @property
    def bias_bound(self) -> float:
        return abs(self.coarse.survival_fraction - self.fine.survival_fraction)


def refine_stable_step(t: float, x: float, c: float, alpha: float, h: float, paths: int, seed: int,
                       block_size: int = DEFAULT_BLOCK_SIZE) -> StepRefinement:
    coarse = sample_stable_batch(t, x, c, alpha, h, paths, seed, block_size)
    fine = sample_stable_batch(t, x, c, alpha, h / 2.0, paths, seed, block_size)
    refinement = StepRefinement(coarse, fine)
    terminal_logger.add_log(
        f"step halving h={h:g} → {h / 2.0:g}: survival {coarse.survival_fraction:.5f} → "
        f"{fine.survival_fraction:.5f}, bias bound {refinement.bias_bound:.2e}",
        "MONTECARLO", "path_simulator",
    )
    return refinement


# ----------------------------------------------------------------------
# Empirical laws
# ----------------------------------------------------------------------

@dataclass
class EmpiricalLaw:
    """Sorted survivor values X_t / norming together with the path counts behind them"""

    values: np.ndarray
    total: int
    survivors: int
    norming: float = 1.0

    @property
    def survival_fraction(self) -> float:
        return self.survivors / self.total

    @property
    def survival_standard_error(self) -> float:
        p = self.survival_fraction
        return math.sqrt(p * (1.0 - p) / self.total)

    def cdf(self, y: float) -> float:
        return float(np.searchsorted(self.values, y, side="right")) / self.survivors

    def ks_distance(self, reference: Callable) -> float:
        """sup |F_n - F| against a vectorized reference CDF"""
        return float(stats.kstest(self.values, reference).statistic)

    def ks_two_sample(self, other: "EmpiricalLaw") -> float:
        return float(stats.ks_2samp(self.values, other.values).statistic)


def empirical_conditional(samples: Union[PathBatch, Sequence[PathSample]], norming: float) -> EmpiricalLaw:
    """Survivors' X_t / norming, sorted"""
    if not norming > 0:
        raise ValueError(f"norming must be positive, got {norming}")
    if isinstance(samples, PathBatch):
        masses = samples.terminal_mass
    else:
        masses = np.array([s.terminal_mass for s in samples], dtype=float)
    survivors = masses[masses > 0]
    if survivors.size < MIN_SURVIVORS:
        raise TooFewSurvivorsError(
            f"only {survivors.size} of {masses.size} paths survived (need {MIN_SURVIVORS}); "
            f"increase the number of paths or shorten t"
        )
    return EmpiricalLaw(values=np.sort(survivors / norming), total=int(masses.size),
                        survivors=int(survivors.size), norming=norming)


def dump_samples(samples: PathBatch, path: Union[str, Path]) -> Path:
    """One row per path: seed record, terminal mass, survived flag"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "seed_record": samples.records(),
        "terminal_mass": samples.terminal_mass,
        "survived": samples.survived.astype(int),
    })
    frame.to_csv(path, sep="\t", index=False, float_format="%.17g")
    return path
