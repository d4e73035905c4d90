import json
import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import InvalidParameterError, ValidationFailure
from apps.common.testing import NoNetworkMixin
from .serializers import frame_to_json, frame_from_dict
from .services import (
    Hypothesis, NoisePower, SnrSpec, SensingFrame,
    dbm_to_linear, linear_to_dbm, generate_frame, generate_samples,
    empirical_energy, derive_seed, derive_seeds,
)

UNIT_NOISE = NoisePower.from_linear(1.0)
UNIT_SNR = SnrSpec.from_db(0.0)


class UnitConversionTests(NoNetworkMixin, SimpleTestCase):

    def test_dbm_to_linear(self):
        self.assertEqual(dbm_to_linear(0), 1.0)
        self.assertAlmostEqual(dbm_to_linear(-100), 1e-10, delta=1e-22)
        self.assertAlmostEqual(dbm_to_linear(10), 10.0, places=12)

    def test_non_finite_dbm_rejected(self):
        with self.assertRaises(InvalidParameterError):
            dbm_to_linear(float('nan'))

    @given(st.floats(min_value=-200, max_value=100))
    def test_noise_power_consistency(self, dbm):
        noise = NoisePower.from_dbm(dbm)
        self.assertLessEqual(abs(noise.linear_mw - 10 ** (dbm / 10)), 1e-12 * noise.linear_mw)
        self.assertAlmostEqual(linear_to_dbm(noise.linear_mw), dbm, places=9)

    def test_nonpositive_power_rejected(self):
        with self.assertRaises(InvalidParameterError):
            NoisePower.from_linear(0.0)
        with self.assertRaises(InvalidParameterError):
            SnrSpec(db=0.0, linear=-1.0)


class GenerateFrameTests(NoNetworkMixin, SimpleTestCase):

    def test_h0_mean_energy(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 100_000, seed=7)
        energy = empirical_energy(frame)
        self.assertGreaterEqual(energy, 0.99)
        self.assertLessEqual(energy, 1.01)

    def test_h1_mean_energy(self):
        frame = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 100_000, seed=7)
        energy = empirical_energy(frame)
        self.assertGreaterEqual(energy, 1.98)
        self.assertLessEqual(energy, 2.02)

    def test_h0_energy_is_exponential(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 100_000, seed=11)
        energies = frame.energies()
        self.assertAlmostEqual(float(np.var(energies)), 1.0, delta=0.05)

    def test_components_are_centered(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 100_000, seed=3)
        stderr = math.sqrt(0.5 / frame.n)
        self.assertLess(abs(float(np.mean(frame.samples.real))), 3 * stderr)
        self.assertLess(abs(float(np.mean(frame.samples.imag))), 3 * stderr)

    def test_deterministic(self):
        first = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 64, seed=42)
        second = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 64, seed=42)
        self.assertEqual(first.samples.tobytes(), second.samples.tobytes())

    def test_seed_changes_samples(self):
        first = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 16, seed=1)
        second = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 16, seed=2)
        self.assertFalse(first.same_samples(second))

    def test_shorter_frames_share_prefix(self):
        short = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 10, seed=5)
        long = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 50, seed=5)
        self.assertEqual(short.samples.tobytes(), long.samples[:10].tobytes())

    def test_batch_rows_match_single_frames(self):
        seeds = derive_seeds(9, 0, 4)
        batch = generate_samples(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 20, seeds)
        for row, seed in zip(batch, seeds):
            frame = generate_frame(Hypothesis.H1, UNIT_NOISE, UNIT_SNR, 20, int(seed))
            np.testing.assert_allclose(row, frame.samples, rtol=1e-12, atol=0)

    def test_derived_seeds_agree(self):
        seeds = derive_seeds(123, 1, 3)
        self.assertEqual(int(seeds[2]), derive_seed(123, 1, 2))

    def test_h0_frame_drops_snr(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, UNIT_SNR, 4, seed=0)
        self.assertIsNone(frame.snr)

    def test_invalid_parameters(self):
        with self.assertRaises(InvalidParameterError):
            generate_frame(Hypothesis.H0, UNIT_NOISE, None, 0, seed=0)
        with self.assertRaises(InvalidParameterError):
            generate_frame(Hypothesis.H1, UNIT_NOISE, None, 8, seed=0)
        with self.assertRaises(InvalidParameterError):
            generate_frame(Hypothesis.H0, UNIT_NOISE, None, 8, seed=-1)


class EmpiricalEnergyTests(NoNetworkMixin, SimpleTestCase):

    def _frame(self, samples):
        return SensingFrame(samples=samples, truth=Hypothesis.H0, noise=UNIT_NOISE, snr=None, seed=0)

    def test_zero_samples(self):
        self.assertEqual(empirical_energy(self._frame([0j, 0j, 0j])), 0.0)

    def test_unit_sample(self):
        self.assertEqual(empirical_energy(self._frame([1 + 0j])), 1.0)

    def test_two_samples(self):
        self.assertEqual(empirical_energy(self._frame([1 + 0j, 2j])), 2.5)

    def test_frame_is_read_only(self):
        frame = self._frame([1 + 0j])
        with self.assertRaises(ValueError):
            frame.samples[0] = 2.0


class FrameExportTests(NoNetworkMixin, SimpleTestCase):

    def test_export_field_order(self):
        frame = generate_frame(Hypothesis.H1, NoisePower.from_dbm(-100), SnrSpec.from_db(-6), 3, seed=17)
        data = json.loads(frame_to_json(frame))
        self.assertEqual(list(data), ['truth', 'noise_dbm', 'snr_db', 'seed', 'samples'])
        self.assertEqual(data['truth'], 'H1')
        self.assertEqual(len(data['samples']), 3)

    def test_h0_exports_null_snr(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 2, seed=1)
        self.assertIn('"snr_db": null', frame_to_json(frame))

    def test_import_reproduces_samples(self):
        frame = generate_frame(Hypothesis.H1, NoisePower.from_dbm(-100), SnrSpec.from_db(-10), 8, seed=21)
        restored = frame_from_dict(json.loads(frame_to_json(frame)))
        self.assertTrue(restored.same_samples(frame))

    def test_tampered_import_rejected(self):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, 4, seed=2)
        data = json.loads(frame_to_json(frame))
        data['samples'][0][0] += 1.0
        with self.assertRaises(ValidationFailure):
            frame_from_dict(data)

    def test_last_digit_tampering_rejected(self):
        frame = generate_frame(Hypothesis.H1, NoisePower.from_dbm(-100), SnrSpec.from_db(-6), 4, seed=5)
        data = json.loads(frame_to_json(frame))
        data['samples'][2][1] *= 1.0 + 1e-12
        with self.assertRaises(ValidationFailure):
            frame_from_dict(data)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 64 - 1), st.integers(min_value=1, max_value=32))
    def test_export_round_trip_any_seed(self, seed, n):
        frame = generate_frame(Hypothesis.H0, UNIT_NOISE, None, n, seed=seed)
        restored = frame_from_dict(json.loads(frame_to_json(frame)), verify=False)
        self.assertTrue(restored.same_samples(frame))
