"""
Universal rejection sampler driven by the characteristic function.

    repeat
        draw U1, U2 (U2 uniform on [-1, 1)); if U1 > alpha then U2 := 1/U2
        X := Round(m + sigma U2)
        draw U3
    until U3 h(X) <= p_X(X)

Points with p_X(X) = 0 are never returned, even when U3 = 0.

When the p.f. is computed by inversion, a proposal whose level U3 * h(X)
already exceeds a cheap upper bound on p_X(X) is rejected without
inverting. The accept/reject decision is the same either way.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cf_sampler.distributions import DistributionSpec
from cf_sampler.envelope import Envelope, MRule, envelope_for, round_half_away
from cf_sampler.quadrature import DEFAULT_TOL, PfEvaluator

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
MAX_REJECTIONS = 1_000_000
TAIL_U_GUARD = 1e-13
OFFSET_GUARD = 1e12
BUFFER_SIZE = 4096


class IterationLimitError(RuntimeError):
    """Too many consecutive rejections: the envelope or the c.f. is broken."""


class UniformStream:
    """Uniforms on [0, 1) from numpy's PCG64 generator, drawn in blocks."""

    def __init__(self, seed: Optional[int] = DEFAULT_SEED, buffer_size: int = BUFFER_SIZE):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._size = buffer_size
        self._buffer = self._rng.random(self._size)
        self._pos = 0

    def next_unit(self) -> float:
        if self._pos == self._size:
            self._buffer = self._rng.random(self._size)
            self._pos = 0
        u = float(self._buffer[self._pos])
        self._pos += 1
        return u

    @property
    def generator(self) -> np.random.Generator:
        return self._rng


@dataclass
class SampleReport:
    samples: np.ndarray
    iterations: int
    guard_rejections: int = 0

    @property
    def acceptance_rate(self) -> float:
        return len(self.samples) / self.iterations if self.iterations else float("nan")

    @property
    def mean_iterations(self) -> float:
        return self.iterations / len(self.samples) if len(self.samples) else float("nan")

    def iterations_standard_error(self, big_a: float) -> float:
        """Standard error of iterations/n; iterations per variate are geometric with mean A."""
        return math.sqrt(big_a * (big_a - 1.0) / len(self.samples))


def propose(env: Envelope, stream: UniformStream) -> Optional[int]:
    """One draw from p_Z, or None when the tail draw hits the overflow guard."""
    u1 = stream.next_unit()
    u2 = 2.0 * stream.next_unit() - 1.0
    if u1 > env.alpha:
        if abs(u2) < TAIL_U_GUARD:
            return None
        u2 = 1.0 / u2
    offset = env.sigma * u2
    if abs(offset) > OFFSET_GUARD:
        return None
    return round_half_away(env.m + offset)


def proposals(env: Envelope, stream: UniformStream, n: int) -> np.ndarray:
    """n proposal draws, pre-acceptance; guarded draws are dropped."""
    out = []
    for _ in range(n):
        z = propose(env, stream)
        if z is not None:
            out.append(z)
    return np.asarray(out, dtype=np.int64)


def _hat_at(env: Envelope, x: int) -> float:
    d = x - env.m
    if abs(d) <= env.sigma:
        return env.c
    return env.k_m / (d * d - 0.25)


@dataclass
class _Counter:
    iterations: int = 0
    guard_rejections: int = 0


def sample_one(env: Envelope, pf: PfEvaluator, stream: UniformStream,
               counter: Optional[_Counter] = None) -> int:
    if counter is None:
        counter = _Counter()
    for _ in range(MAX_REJECTIONS + 1):
        counter.iterations += 1
        x = propose(env, stream)
        u3 = stream.next_unit()
        if x is None:
            counter.guard_rejections += 1
            continue
        level = u3 * _hat_at(env, x)
        bound = pf.upper_bound(x)
        if bound is not None and level > bound:
            continue
        p = pf(x)
        if level <= p and p > 0.0:
            return x
    raise IterationLimitError(
        f"{MAX_REJECTIONS} consecutive rejections for {pf.spec} (m={env.m}, A={env.big_a:.4g}); "
        "check the characteristic function and its derivatives")


def sample_n(env: Envelope, pf: PfEvaluator, stream: UniformStream, n: int) -> SampleReport:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    counter = _Counter()
    samples = np.empty(n, dtype=np.int64)
    for i in range(n):
        samples[i] = sample_one(env, pf, stream, counter)
    report = SampleReport(samples=samples, iterations=counter.iterations,
                          guard_rejections=counter.guard_rejections)
    logger.info(f"Drew {n} variates from {pf.spec} in {report.iterations} iterations "
                f"(acceptance {report.acceptance_rate:.4f}, 1/A = {1.0 / env.big_a:.4f})")
    if report.guard_rejections:
        logger.debug(f"{report.guard_rejections} proposals hit the tail guard")
    return report


@dataclass
class UniversalSampler:
    """A distribution with its envelope, p.f. evaluator and uniform stream."""

    spec: DistributionSpec
    envelope: Envelope
    pf: PfEvaluator
    stream: UniformStream = field(default_factory=UniformStream)

    @classmethod
    def from_spec(cls, spec: DistributionSpec, m_rule: MRule = "star",
                  seed: Optional[int] = DEFAULT_SEED, tol: float = DEFAULT_TOL) -> "UniversalSampler":
        env = envelope_for(spec, m_rule, tol)
        return cls(spec=spec, envelope=env, pf=PfEvaluator(spec, tol), stream=UniformStream(seed))

    def sample_one(self) -> int:
        return sample_one(self.envelope, self.pf, self.stream)

    def sample(self, n: int) -> SampleReport:
        return sample_n(self.envelope, self.pf, self.stream, n)
