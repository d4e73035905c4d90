import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, strategies as st
from rest_framework.test import APISimpleTestCase
from scipy import stats

from apps.common.exceptions import DomainError, InvalidParameterError
from apps.common.testing import NoNetworkMixin
from apps.signal.services import Hypothesis, NoisePower, SnrSpec, generate_frame, empirical_energy
from .services import (
    TargetFalseAlarm, Decision, RateRow, q_function, q_inverse, np_threshold, detect,
    theoretical_pd, monte_carlo_rates, simulate_statistics, rates_from_statistics,
    binomial_half_width, trial_seed, rate_csv, parse_rate_csv, RATE_CSV_HEADER,
)

REFERENCE_NOISE = NoisePower.from_dbm(-100)
UNIT_NOISE = NoisePower.from_linear(1.0)


def exact_exceedance(eta_over_power, n):
    """P(mean of n unit exponentials >= eta_over_power), the exact energy-statistic tail"""
    return float(stats.gamma.sf(n * eta_over_power, a=n))


def binomial_se(p, trials):
    return math.sqrt(p * (1 - p) / trials)


class QFunctionTests(NoNetworkMixin, SimpleTestCase):

    def test_median(self):
        self.assertEqual(q_function(0.0), 0.5)

    def test_far_tail(self):
        self.assertLess(q_function(8.0), 1e-15)

    def test_five_percent_point(self):
        self.assertAlmostEqual(q_function(1.6448536270), 0.05, delta=1e-9)

    def test_vectorized(self):
        values = q_function(np.array([0.0, 1.0]))
        self.assertEqual(values.shape, (2,))
        self.assertAlmostEqual(values[1], 0.15865525393145707, places=12)


class QInverseTests(NoNetworkMixin, SimpleTestCase):

    def test_known_values(self):
        self.assertEqual(q_inverse(0.5), 0.0)
        self.assertAlmostEqual(q_inverse(0.05), 1.6448536270, delta=1e-9)
        self.assertAlmostEqual(q_inverse(0.95), -1.6448536270, delta=1e-9)

    def test_round_trip_at_two_and_a_half(self):
        self.assertAlmostEqual(q_inverse(q_function(2.5)), 2.5, delta=1e-9)

    def test_round_trip_grid(self):
        for x in np.round(np.arange(-6.0, 6.0 + 1e-9, 0.01), 2):
            # below about -5.4, Q(x) is within a few ulps of 1 and the round trip is
            # limited by that rounding rather than by the inverse
            density = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
            tolerance = max(1e-9, 4.4e-16 / density)
            self.assertAlmostEqual(q_inverse(q_function(x)), x, delta=tolerance, msg=f"x={x}")

    @given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_inverse_contract(self, p):
        self.assertAlmostEqual(q_function(q_inverse(p)), p, delta=1e-12)

    def test_domain(self):
        for p in (0.0, 1.0, -0.1, 1.5):
            with self.assertRaises(DomainError):
                q_inverse(p)


class ThresholdTests(NoNetworkMixin, SimpleTestCase):

    def test_reference_settings(self):
        threshold = np_threshold(TargetFalseAlarm(0.5), 50, REFERENCE_NOISE)
        self.assertAlmostEqual(threshold.eta_mw, 1e-10, delta=1e-22)
        self.assertFalse(threshold.always_present)

    def test_ten_percent(self):
        threshold = np_threshold(TargetFalseAlarm(0.1), 50, UNIT_NOISE)
        self.assertAlmostEqual(threshold.eta_mw, 1.1812386, delta=1e-6)

    def test_formula(self):
        threshold = np_threshold(TargetFalseAlarm(0.05), 10, UNIT_NOISE)
        expected = (1 + q_inverse(0.05) / math.sqrt(10)) * UNIT_NOISE.linear_mw
        self.assertLessEqual(abs(threshold.eta_mw - expected), 1e-12 * expected)

    def test_negative_threshold_declares_present(self):
        threshold = np_threshold(TargetFalseAlarm(0.999), 1, UNIT_NOISE)
        self.assertLess(threshold.eta_mw, 0)
        self.assertTrue(threshold.always_present)
        self.assertIs(detect(0.0, threshold), Decision.PRESENT)

    def test_invalid_target(self):
        with self.assertRaises(InvalidParameterError):
            TargetFalseAlarm(1.0)
        with self.assertRaises(InvalidParameterError):
            np_threshold(TargetFalseAlarm(0.5), 0, UNIT_NOISE)


class DetectTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.threshold = np_threshold(TargetFalseAlarm(0.1), 50, UNIT_NOISE)

    def test_tie_is_present(self):
        self.assertIs(detect(self.threshold.eta_mw, self.threshold), Decision.PRESENT)

    def test_zero_is_absent(self):
        self.assertIs(detect(0.0, self.threshold), Decision.ABSENT)

    def test_double_is_present(self):
        self.assertIs(detect(2 * self.threshold.eta_mw, self.threshold), Decision.PRESENT)

    def test_negative_statistic_rejected(self):
        with self.assertRaises(InvalidParameterError):
            detect(-1.0, self.threshold)

    def test_decision_maps_to_hypothesis(self):
        self.assertIs(Decision.PRESENT.hypothesis, Hypothesis.H1)
        self.assertIs(Decision.ABSENT.hypothesis, Hypothesis.H0)


class TheoreticalPdTests(NoNetworkMixin, SimpleTestCase):

    def test_reference_curve(self):
        pf = TargetFalseAlarm(0.5)
        self.assertAlmostEqual(theoretical_pd(SnrSpec.from_db(-20), 50, pf), 0.528, delta=0.001)
        self.assertAlmostEqual(theoretical_pd(SnrSpec.from_db(-10), 50, pf), 0.740, delta=0.001)
        self.assertAlmostEqual(theoretical_pd(SnrSpec.from_db(-6), 50, pf), 0.922, delta=0.001)
        self.assertAlmostEqual(theoretical_pd(SnrSpec.from_db(0), 50, pf), 0.9998, delta=0.0002)

    def test_monotone_in_snr_and_n(self):
        for pf_value in (0.05, 0.1, 0.5, 0.9):
            pf = TargetFalseAlarm(pf_value)
            for n in (10, 50, 200):
                values = [theoretical_pd(SnrSpec.from_db(db), n, pf) for db in range(-25, 3, 3)]
                self.assertTrue(all(b > a for a, b in zip(values, values[1:])), (pf_value, n))
            for db in (-20, -10, -6):
                values = [theoretical_pd(SnrSpec.from_db(db), n, pf) for n in (5, 10, 20, 50, 100)]
                self.assertTrue(all(b > a for a, b in zip(values, values[1:])), (pf_value, db))

    def test_beats_chance_when_threshold_positive(self):
        for pf_value in (0.05, 0.1, 0.5, 0.9):
            pf = TargetFalseAlarm(pf_value)
            for n in (2, 10, 50, 200):
                for db in (-30, -20, -10, 0, 10):
                    self.assertGreaterEqual(theoretical_pd(SnrSpec.from_db(db), n, pf), pf_value)

    def test_close_to_exact_distribution(self):
        pf = TargetFalseAlarm(0.5)
        for db in (-20, -10, -6, 0):
            snr = SnrSpec.from_db(db)
            exact = exact_exceedance(1.0 / (1.0 + snr.linear), 50)
            self.assertLessEqual(abs(theoretical_pd(snr, 50, pf) - exact), 0.02, msg=f"{db} dB")


class MonteCarloTests(NoNetworkMixin, SimpleTestCase):

    def test_false_alarm_calibration(self):
        trials = 100_000
        for n in (10, 50, 200):
            statistics = simulate_statistics(Hypothesis.H0, REFERENCE_NOISE, None, n, trials, seed=2024)
            for pf_value in (0.05, 0.1, 0.5, 0.9):
                threshold = np_threshold(TargetFalseAlarm(pf_value), n, REFERENCE_NOISE)
                empirical = float(np.mean(statistics >= threshold.eta_mw))
                exact = exact_exceedance(threshold.eta_mw / REFERENCE_NOISE.linear_mw, n)
                self.assertLessEqual(abs(empirical - exact), 4 * binomial_se(exact, trials), (n, pf_value))
                # the Gaussian threshold carries an O(1/sqrt(N)) skew bias
                self.assertLessEqual(abs(exact - pf_value), 0.05, (n, pf_value))

    def test_reference_detection_curve(self):
        pf = TargetFalseAlarm(0.5)
        trials = 100_000
        for db in (-20, -10, -6, 0):
            snr = SnrSpec.from_db(db)
            rates = monte_carlo_rates(REFERENCE_NOISE, snr, 50, pf, trials, seed=99)
            exact = exact_exceedance(1.0 / (1.0 + snr.linear), 50)
            self.assertLessEqual(abs(rates.pd - exact), 4 * binomial_se(exact, trials) + 1e-4, f"{db} dB")
            if db == 0:
                self.assertGreaterEqual(rates.pd, 0.999)

    def test_single_trial(self):
        rates = monte_carlo_rates(UNIT_NOISE, SnrSpec.from_db(0), 50, TargetFalseAlarm(0.5), 1, seed=1)
        self.assertIn(rates.pd, (0.0, 1.0))
        self.assertIn(rates.pf, (0.0, 1.0))
        self.assertAlmostEqual(rates.half_width, 0.98)

    def test_zero_trials_rejected(self):
        with self.assertRaises(InvalidParameterError):
            monte_carlo_rates(UNIT_NOISE, SnrSpec.from_db(0), 50, TargetFalseAlarm(0.5), 0, seed=1)

    def test_deterministic(self):
        args = (UNIT_NOISE, SnrSpec.from_db(-6), 50, TargetFalseAlarm(0.1), 5000)
        self.assertEqual(monte_carlo_rates(*args, seed=5), monte_carlo_rates(*args, seed=5))

    def test_workers_match_sequential(self):
        sequential = simulate_statistics(Hypothesis.H1, UNIT_NOISE, SnrSpec.from_db(-6), 20, 3000, seed=8,
                                         workers=1, batch_size=512)
        parallel = simulate_statistics(Hypothesis.H1, UNIT_NOISE, SnrSpec.from_db(-6), 20, 3000, seed=8,
                                       workers=4, batch_size=512)
        np.testing.assert_array_equal(sequential, parallel)

    def test_trial_frames_are_regenerable(self):
        snr = SnrSpec.from_db(-10)
        statistics = simulate_statistics(Hypothesis.H1, UNIT_NOISE, snr, 50, 5, seed=13)
        frame = generate_frame(Hypothesis.H1, UNIT_NOISE, snr, 50, trial_seed(13, Hypothesis.H1, 3))
        self.assertAlmostEqual(statistics[3], empirical_energy(frame), places=12)

    def test_rates_from_statistics(self):
        threshold = np_threshold(TargetFalseAlarm(0.5), 4, UNIT_NOISE)
        rates = rates_from_statistics(np.array([0.5, 1.5]), np.array([1.0, 2.0, 0.1, 3.0]), threshold)
        self.assertEqual(rates.pf, 0.5)
        self.assertEqual(rates.pd, 0.75)
        self.assertEqual(rates.trials, 4)
        self.assertAlmostEqual(rates.half_width, binomial_half_width(4))


class RateCsvTests(NoNetworkMixin, SimpleTestCase):

    def test_header_and_order(self):
        rows = [
            RateRow(0.0, 50, 0.5, 'llm', 1.0, 0.5, 20, 0.2),
            RateRow(-20.0, 50, 0.5, 'llm', 0.5, 0.5, 20, 0.2),
            RateRow(0.0, 50, 0.5, 'energy', 1.0, 0.48, 100, 0.1),
        ]
        text = rate_csv(rows)
        lines = text.splitlines()
        self.assertEqual(lines[0], ','.join(RATE_CSV_HEADER))
        self.assertEqual(lines[0], 'snr_db,n,pf_target,method,pd,pf,trials,half_width')
        self.assertTrue(lines[1].startswith('-20.0,50,0.5,llm'))
        self.assertTrue(lines[2].startswith('0.0,50,0.5,energy'))
        self.assertEqual(parse_rate_csv(text)[2].method, 'llm')


class ThresholdApiTests(NoNetworkMixin, APISimpleTestCase):

    def test_threshold_endpoint(self):
        response = self.client.get('/detector/threshold', {'pf_target': 0.1, 'n': 50, 'noise_dbm': 0, 'snr_db': 0})
        self.assertEqual(response.status_code, 200)
        data = response.json()['data']
        self.assertAlmostEqual(data['threshold']['eta_mw'], 1.1812386, delta=1e-6)
        self.assertIn('theoretical_pd', data)

    def test_invalid_query(self):
        response = self.client.get('/detector/threshold', {'pf_target': 1.0, 'n': 50})
        self.assertEqual(response.status_code, 400)
        self.assertFalse(response.json()['success'])
