import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, strategies as st
from rest_framework.test import APISimpleTestCase

from apps.common.exceptions import ConfigError, InvalidParameterError, LengthMismatchError
from apps.common.testing import NoNetworkMixin
from .serializers import proposal_from_dict
from .services import (
    SubcarrierCnrs, PowerBudget, Allocation, VerdictKind, waterfill, capacity, kkt_check,
    validate_external_solution, uniform_allocation, cnrs_from_gains, random_instance,
)

TOL = 1e-8


def grid_capacity(cnrs, budget, steps=1000):
    """Best capacity over allocations on a grid of budget/steps, for up to three subcarriers"""
    c = cnrs.as_array()
    units = np.arange(steps + 1)
    if len(c) == 1:
        shares = np.array([[steps]])
    elif len(c) == 2:
        shares = np.stack([units, steps - units], axis=1)
    else:
        a, b = np.meshgrid(units, units, indexing='ij')
        keep = a + b <= steps
        shares = np.stack([a[keep], b[keep], steps - a[keep] - b[keep]], axis=1)
    powers = shares * (budget.total_mw / steps)
    return float(np.max(np.sum(np.log1p(powers * c), axis=1)) / math.log(2.0))


class WaterfillTests(NoNetworkMixin, SimpleTestCase):

    def test_equal_channels(self):
        allocation = waterfill(SubcarrierCnrs((1, 1, 1, 1)), PowerBudget(4))
        np.testing.assert_allclose(allocation.powers_mw, [1, 1, 1, 1], rtol=1e-12)
        self.assertAlmostEqual(allocation.capacity_bits, 4.0, places=12)

    def test_two_channels(self):
        allocation = waterfill(SubcarrierCnrs((2.0, 1.0)), PowerBudget(1))
        np.testing.assert_allclose(allocation.powers_mw, [0.75, 0.25], rtol=1e-12)
        self.assertAlmostEqual(allocation.water_level, 1.25, places=12)
        self.assertAlmostEqual(allocation.capacity_bits, 1.643856, delta=1e-5)

    def test_boundary_channel_stays_off(self):
        allocation = waterfill(SubcarrierCnrs((1.0, 0.5)), PowerBudget(1))
        self.assertEqual(allocation.powers_mw, (1.0, 0.0))
        self.assertEqual(allocation.water_level, 2.0)

    def test_tied_channels_share_power(self):
        allocation = waterfill(SubcarrierCnrs((4.0, 1.0, 1.0)), PowerBudget(2))
        self.assertAlmostEqual(allocation.powers_mw[1], allocation.powers_mw[2], places=14)
        self.assertTrue(kkt_check(allocation, SubcarrierCnrs((4.0, 1.0, 1.0)), PowerBudget(2), TOL))

    def test_invalid_inputs(self):
        with self.assertRaises(InvalidParameterError):
            SubcarrierCnrs((1.0, 0.0))
        with self.assertRaises(InvalidParameterError):
            SubcarrierCnrs(())
        with self.assertRaises(InvalidParameterError):
            PowerBudget(0)

    def test_random_instances_satisfy_kkt(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            cnrs, budget = random_instance(rng, k_max=8)
            allocation = waterfill(cnrs, budget)
            self.assertTrue(kkt_check(allocation, cnrs, budget, TOL), (cnrs, budget))
            self.assertAlmostEqual(sum(allocation.powers_mw), budget.total_mw,
                                   delta=1e-9 * budget.total_mw)
            self.assertTrue(all(p >= 0.0 for p in allocation.powers_mw))

    @given(
        st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=8),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_kkt_property(self, values, total):
        cnrs, budget = SubcarrierCnrs(tuple(values)), PowerBudget(total)
        self.assertTrue(kkt_check(waterfill(cnrs, budget), cnrs, budget, TOL))

    def test_matches_grid_search(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            cnrs, budget = random_instance(rng, k_max=3)
            self.assertAlmostEqual(waterfill(cnrs, budget).capacity_bits, grid_capacity(cnrs, budget),
                                   delta=1e-3)

    def test_beats_uniform_split(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            cnrs, budget = random_instance(rng)
            optimum = waterfill(cnrs, budget).capacity_bits
            self.assertGreaterEqual(optimum, uniform_allocation(cnrs, budget).capacity_bits - 1e-12)

    def test_capacity_grows_with_budget(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            cnrs, _ = random_instance(rng)
            values = [waterfill(cnrs, PowerBudget(total)).capacity_bits for total in np.logspace(-3, 3, 10)]
            self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            cnrs, budget = random_instance(rng)
            permutation = rng.permutation(len(cnrs))
            permuted = SubcarrierCnrs(tuple(cnrs.values[i] for i in permutation))
            base, moved = waterfill(cnrs, budget), waterfill(permuted, budget)
            np.testing.assert_allclose(moved.powers_mw, np.asarray(base.powers_mw)[permutation],
                                       rtol=1e-9, atol=1e-12 * budget.total_mw)
            self.assertAlmostEqual(moved.capacity_bits, base.capacity_bits, delta=1e-9)
            self.assertAlmostEqual(moved.water_level, base.water_level, delta=1e-9 * base.water_level)


class CapacityTests(NoNetworkMixin, SimpleTestCase):

    def test_values(self):
        self.assertEqual(capacity([0.0, 0.0], SubcarrierCnrs((1.0, 2.0))), 0.0)
        self.assertAlmostEqual(capacity([1.0], SubcarrierCnrs((1.0,))), 1.0, places=14)
        self.assertAlmostEqual(capacity([3.0], SubcarrierCnrs((1.0,))), 2.0, places=14)

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            capacity([1.0, 2.0], SubcarrierCnrs((1.0,)))


class KktCheckTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.cnrs = SubcarrierCnrs((2.0, 1.0))
        self.budget = PowerBudget(1.0)

    def test_solver_output(self):
        self.assertTrue(kkt_check(waterfill(self.cnrs, self.budget), self.cnrs, self.budget, TOL))

    def test_uniform_split_fails(self):
        self.assertFalse(kkt_check(uniform_allocation(self.cnrs, self.budget), self.cnrs, self.budget, TOL))

    def test_budget_violation_fails(self):
        solved = waterfill(self.cnrs, self.budget)
        over = Allocation.from_powers([solved.powers_mw[0] + 2 * TOL, solved.powers_mw[1]], self.cnrs)
        self.assertFalse(kkt_check(over, self.cnrs, self.budget, TOL))

    def test_tolerance_does_not_grow_with_budget(self):
        cnrs, budget = SubcarrierCnrs((1e-3, 1e-3)), PowerBudget(1000.0)
        solved = waterfill(cnrs, budget)
        np.testing.assert_allclose(solved.powers_mw, [500.0, 500.0], rtol=1e-15)
        self.assertTrue(kkt_check(solved, cnrs, budget, TOL))

        off_level = Allocation.from_powers([500.0 + 5e-6, 500.0 - 5e-6], cnrs)
        self.assertFalse(kkt_check(off_level, cnrs, budget, TOL))
        over_budget = Allocation.from_powers([500.0 + 2.5e-6, 500.0 + 2.5e-6], cnrs)
        self.assertFalse(kkt_check(over_budget, cnrs, budget, TOL))


class ValidateExternalSolutionTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.cnrs = SubcarrierCnrs((2.0, 1.0))
        self.budget = PowerBudget(1.0)

    def test_internal_solution_is_optimal(self):
        solved = waterfill(self.cnrs, self.budget)
        verdict = validate_external_solution(solved.powers_mw, self.cnrs, self.budget, TOL)
        self.assertIs(verdict.kind, VerdictKind.OPTIMAL)

    def test_uniform_split_is_suboptimal(self):
        verdict = validate_external_solution([0.5, 0.5], self.cnrs, self.budget, TOL)
        self.assertIs(verdict.kind, VerdictKind.SUBOPTIMAL)
        # log2(2.5 * 1.25) - log2(2 * 1.5)
        self.assertAlmostEqual(verdict.gap_bits, 0.0588937, delta=1e-6)

    def test_negative_entry_is_infeasible(self):
        verdict = validate_external_solution([1.1, -0.1], self.cnrs, self.budget, TOL)
        self.assertIs(verdict.kind, VerdictKind.INFEASIBLE)
        self.assertEqual(verdict.violation, 'nonnegativity')
        self.assertAlmostEqual(verdict.magnitude, 0.1)

    def test_budget_violation_is_infeasible(self):
        verdict = validate_external_solution([0.75, 0.5], self.cnrs, self.budget, TOL)
        self.assertEqual(verdict.as_dict(), {'verdict': 'infeasible', 'violation': 'budget', 'magnitude': 0.25})

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            validate_external_solution([1.0], self.cnrs, self.budget, TOL)


class ConversionTests(NoNetworkMixin, SimpleTestCase):

    def test_cnrs_from_gains(self):
        self.assertEqual(cnrs_from_gains([2.0, 4.0], 2.0).values, (1.0, 2.0))
        with self.assertRaises(InvalidParameterError):
            cnrs_from_gains([1.0], 0.0)

    def test_proposal_file(self):
        self.assertEqual(proposal_from_dict({'powers_mw': [0.5, 0.5], 'tol': 1e-6}), ([0.5, 0.5], 1e-6))
        self.assertEqual(proposal_from_dict({'powers_mw': [1]}), ([1.0], None))
        with self.assertRaises(ConfigError):
            proposal_from_dict({'powers': [1.0]})


class WaterfillApiTests(NoNetworkMixin, APISimpleTestCase):

    def test_solve(self):
        response = self.client.post('/waterfill/solve', {'cnrs': [2.0, 1.0], 'budget_mw': 1.0}, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['data']['powers_mw'], [0.75, 0.25])

    def test_solve_rejects_nonpositive_cnr(self):
        response = self.client.post('/waterfill/solve', {'cnrs': [0.0], 'budget_mw': 1.0}, format='json')
        self.assertEqual(response.status_code, 400)

    def test_validate(self):
        response = self.client.post('/waterfill/validate',
                                    {'cnrs': [2.0, 1.0], 'budget_mw': 1.0, 'powers_mw': [0.5, 0.5]},
                                    format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['data']['verdict'], 'suboptimal')

    def test_validate_length_mismatch(self):
        response = self.client.post('/waterfill/validate',
                                    {'cnrs': [2.0, 1.0], 'budget_mw': 1.0, 'powers_mw': [1.0]},
                                    format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('powers_mw', response.json()['error']['details'])
