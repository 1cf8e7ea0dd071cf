#!/usr/bin/env python3
"""
Tests for the rejection sampler: proposals, acceptance, statistics and
distributional correctness on fixed seeds.
"""

import os
import sys
import unittest
from collections import deque
from unittest.mock import patch

import numpy as np
from scipy import stats

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cf_sampler.bench import gof_chi_square
from cf_sampler.distributions import POINT_MASS_AT_ZERO, DistributionSpec
from cf_sampler.envelope import Envelope, envelope_for, pz
from cf_sampler.quadrature import PfEvaluator
from cf_sampler.sampler import (
    IterationLimitError,
    SampleReport,
    UniformStream,
    UniversalSampler,
    propose,
    proposals,
    sample_n,
    sample_one,
)

SEEDS = (42, 7, 1234, 2024, 99)


class ScriptedStream:
    """Replays fixed uniforms."""

    def __init__(self, values):
        self.values = deque(values)

    def next_unit(self):
        return self.values.popleft()


class ConstantPf:
    spec = "constant"

    def __init__(self, value):
        self.value = value

    def __call__(self, x):
        return self.value

    def upper_bound(self, x):
        return None


class TestProposal(unittest.TestCase):

    def setUp(self):
        # sigma = 2.5, alpha = 2.5 / 4.1
        self.env = Envelope.from_constants(0, 0.5, 2.0)

    def test_centre_branch(self):
        self.assertEqual(propose(self.env, ScriptedStream([0.1, 0.5])), 0)
        self.assertEqual(propose(self.env, ScriptedStream([0.1, 0.95])), 2)
        self.assertEqual(propose(self.env, ScriptedStream([0.1, 0.05])), -2)

    def test_tail_branch(self):
        # U2 = 0.5 -> 1/U2 = 2 -> Round(5.0)
        self.assertEqual(propose(self.env, ScriptedStream([0.99, 0.75])), 5)
        self.assertIsNone(propose(self.env, ScriptedStream([0.99, 0.5])))

    def test_uniform_stream_reproducible(self):
        a, b = UniformStream(5, buffer_size=7), UniformStream(5, buffer_size=7)
        first = [a.next_unit() for _ in range(20)]
        self.assertEqual(first, [b.next_unit() for _ in range(20)])
        self.assertTrue(all(0.0 <= u < 1.0 for u in first))

    def test_proposal_law(self):
        env = envelope_for(DistributionSpec.poisson(10.0))
        draws = proposals(env, UniformStream(42), 1_000_000)

        # conditional law on a window around m
        window = np.abs(draws - env.m) <= 200
        inside = draws[window]
        lo, hi = env.m - 200, env.m + 200
        probs = pz(env, np.arange(lo, hi + 1))
        probs = probs / probs.sum()
        observed = np.bincount(inside - lo, minlength=hi - lo + 1)
        expected = probs * inside.size
        keep = expected >= 5
        obs, exp = observed[keep], expected[keep]
        if (~keep).any():
            obs = np.append(obs, observed[~keep].sum())
            exp = np.append(exp, expected[~keep].sum())
        exp = exp * obs.sum() / exp.sum()
        self.assertGreater(stats.chisquare(obs, exp).pvalue, 0.001)


class TestSampling(unittest.TestCase):

    def test_point_mass(self):
        spec = DistributionSpec.from_triple(POINT_MASS_AT_ZERO)
        with self.assertWarns(Warning):
            sampler = UniversalSampler.from_spec(spec)
        report = sampler.sample(1000)
        self.assertTrue(np.all(report.samples == 0))
        self.assertEqual(report.iterations, 1000)

    def test_determinism(self):
        first = UniversalSampler.from_spec(DistributionSpec.poisson(3.0), seed=7).sample(500)
        second = UniversalSampler.from_spec(DistributionSpec.poisson(3.0), seed=7).sample(500)
        np.testing.assert_array_equal(first.samples, second.samples)
        self.assertEqual(first.iterations, second.iterations)

    def test_iteration_limit(self):
        env = Envelope.from_constants(0, 0.5, 2.0)
        with patch("cf_sampler.sampler.MAX_REJECTIONS", 50):
            with self.assertRaises(IterationLimitError):
                sample_one(env, ConstantPf(0.0), UniformStream(1))

    def test_acceptance_boundary(self):
        env = Envelope.from_constants(0, 0.5, 2.0)
        # centre draw x = 0 with level U3 * c = 0.5 = p
        self.assertEqual(sample_one(env, ConstantPf(0.5), ScriptedStream([0.1, 0.5, 1.0])), 0)
        with patch("cf_sampler.sampler.MAX_REJECTIONS", 0):
            with self.assertRaises(IterationLimitError):
                sample_one(env, ConstantPf(0.0), ScriptedStream([0.1, 0.5, 0.0]))

    def test_bad_n(self):
        env = Envelope.from_constants(0, 0.5, 2.0)
        with self.assertRaises(ValueError):
            sample_n(env, ConstantPf(0.0), UniformStream(1), 0)

    def test_report_statistics(self):
        report = SampleReport(samples=np.zeros(4, dtype=np.int64), iterations=8)
        self.assertEqual(report.acceptance_rate, 0.5)
        self.assertEqual(report.mean_iterations, 2.0)
        self.assertAlmostEqual(report.iterations_standard_error(2.0), np.sqrt(2.0 / 4), places=14)

    def test_bound_pretest_keeps_stream(self):
        spec = DistributionSpec.poisson_tweedie(0.5, 1.0, 0.5)
        env = envelope_for(spec)
        with_bound = sample_n(env, PfEvaluator(spec), UniformStream(11), 3000)
        with patch.object(PfEvaluator, "upper_bound", return_value=None):
            without = sample_n(env, PfEvaluator(spec), UniformStream(11), 3000)
        np.testing.assert_array_equal(with_bound.samples, without.samples)
        self.assertEqual(with_bound.iterations, without.iterations)


class TestDistributionalCorrectness(unittest.TestCase):
    """n = 100000 per seed; p > 0.001 and acceptance within 3 s.e. on at least 4 of 5 seeds."""

    def check(self, spec):
        env = envelope_for(spec)
        pf = PfEvaluator(spec)
        gof_passes = acceptance_passes = 0
        for seed in SEEDS:
            report = sample_n(env, pf, UniformStream(seed), 100_000)
            gof_passes += gof_chi_square(report.samples, pf).p_value > 0.001
            se = report.iterations_standard_error(env.big_a)
            acceptance_passes += abs(report.mean_iterations - env.big_a) <= 3 * se
        self.assertGreaterEqual(gof_passes, 4, msg=f"GOF for {spec}")
        self.assertGreaterEqual(acceptance_passes, 4, msg=f"acceptance for {spec}")

    def test_poisson_1(self):
        self.check(DistributionSpec.poisson(1.0))

    def test_poisson_10(self):
        self.check(DistributionSpec.poisson(10.0))

    def test_binomial(self):
        self.check(DistributionSpec.binomial(20, 0.3))

    def test_negative_binomial(self):
        self.check(DistributionSpec.negative_binomial(3.0, 0.4))

    def test_poisson_tweedie(self):
        self.check(DistributionSpec.poisson_tweedie(0.5, 1.0, 0.5))


if __name__ == "__main__":
    unittest.main()
