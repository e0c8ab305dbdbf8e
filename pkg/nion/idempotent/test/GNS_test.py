# standard libraries
import logging
import math
import unittest

# third party libraries
import numpy

# local libraries
from nion.idempotent import Channels
from nion.idempotent import GNS
from nion.idempotent import Oracle
from nion.idempotent import States
from nion.idempotent import Validator


def _depolarized_rotation(theta: float, weight: float) -> Channels.Superoperator:
    r = numpy.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    depolarizing = Channels.Superoperator.from_function(2, lambda x: numpy.trace(x) * numpy.eye(2) / 2)
    return Channels.Superoperator.unitary(r).mix(depolarizing, weight)


class TestGNS(unittest.TestCase):

    def setUp(self) -> None:
        self.dephasing = Channels.BlockIdempotent.dephasing(2).to_superoperator()
        self.phi = Channels.Superoperator.identity(2).mix(self.dephasing, 0.5)
        self.tau = States.DensityMatrix.maximally_mixed(2)

    def tearDown(self) -> None:
        pass

    def test_mixture_is_gns_symmetric(self) -> None:
        symmetric, residual = GNS.is_gns_symmetric(self.phi, self.tau)
        self.assertTrue(symmetric)
        self.assertLess(residual, 1e-12)

    def test_depolarized_rotation_is_not_gns_symmetric(self) -> None:
        phi = _depolarized_rotation(math.pi / 8, 0.5)
        symmetric, residual = GNS.is_gns_symmetric(phi, self.tau)
        self.assertFalse(symmetric)
        self.assertGreater(residual, 1e-3)
        with self.assertRaisesRegex(Validator.ValidationError, "not GNS-symmetric"):
            GNS.iterate_bounds(phi, self.dephasing, self.tau, 1)

    def test_invariant_state_must_be_full_rank_and_invariant(self) -> None:
        with self.assertRaisesRegex(Validator.ValidationError, "full rank"):
            GNS.gns_residual(self.phi, numpy.diag([1.0, 0.0]))
        with self.assertRaisesRegex(Validator.ValidationError, "not invariant"):
            GNS.gns_residual(_depolarized_rotation(math.pi / 8, 0.5), numpy.diag([0.75, 0.25]))

    def test_spectral_decompose_of_mixture(self) -> None:
        spectral = GNS.spectral_decompose(self.phi)
        self.assertAlmostEqual(spectral.mu, 0.5)
        self.assertTrue(spectral.gns_symmetric)
        numpy.testing.assert_allclose(numpy.sort(numpy.abs(spectral.eigenvalues))[::-1], [1.0, 1.0, 0.5, 0.5], atol=1e-12)
        numpy.testing.assert_allclose(spectral.peripheral_projection.transfer, self.dephasing.transfer, atol=1e-10)
        numpy.testing.assert_allclose(spectral.invariant_state.matrix, numpy.eye(2) / 2, atol=1e-12)

    def test_peripheral_projection_check(self) -> None:
        spectral = GNS.spectral_decompose(self.phi)
        GNS.check_peripheral_projection(self.phi, spectral.peripheral_projection)
        doubled = Channels.Superoperator(2.0 * self.dephasing.transfer)
        with self.assertRaisesRegex(Validator.ValidationError, "not idempotent"):
            GNS.check_peripheral_projection(self.phi, doubled)
        # dephasings in mutually unbiased bases commute
        c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
        rotated = Channels.BlockIdempotent.dephasing(2, numpy.array([[c, -s], [s, c]]))
        with self.assertRaisesRegex(Validator.ValidationError, "does not commute"):
            GNS.check_peripheral_projection(self.phi, rotated)
        with self.assertRaisesRegex(Validator.ValidationError, "does not match"):
            GNS.check_peripheral_projection(self.phi, Channels.Superoperator.identity(3))

    def test_bit_flip_periphery_includes_minus_one(self) -> None:
        flip = Channels.Superoperator.unitary(numpy.array([[0.0, 1.0], [1.0, 0.0]]))
        spectral = GNS.spectral_decompose(flip)
        self.assertEqual(spectral.mu, 0.0)
        self.assertTrue(spectral.gns_symmetric)
        numpy.testing.assert_allclose(spectral.peripheral_projection.transfer, numpy.eye(4), atol=1e-10)
        numpy.testing.assert_allclose(GNS.even_power(flip, 2).transfer, numpy.eye(4), atol=1e-12)

    def test_even_power_rejects_odd_powers(self) -> None:
        with self.assertRaisesRegex(Validator.ValidationError, "odd"):
            GNS.even_power(self.phi, 3)
        with self.assertRaises(Validator.ValidationError):
            GNS.even_power(self.phi, -2)
        numpy.testing.assert_allclose(GNS.even_power(self.phi, 0).transfer, numpy.eye(4), atol=1e-12)

    def test_mixing_constants(self) -> None:
        for k in (1, 2, 3):
            with self.subTest(k=k):
                constants = GNS.mixing_epsilon(self.phi, k)
                self.assertAlmostEqual(constants.dcb_bits, 1.0)
                self.assertAlmostEqual(constants.epsilon, 2.0 ** (-2 * k))
                self.assertEqual(constants.threshold_2k, 0.0)
                self.assertTrue(constants.above_threshold)
        with self.assertRaises(Validator.ValidationError):
            GNS.mixing_epsilon(self.phi, 0)

    def test_cp_mixing_residuals_are_nonnegative(self) -> None:
        spectral = GNS.spectral_decompose(self.phi)
        for k in (1, 2, 3):
            with self.subTest(k=k):
                upper, lower = GNS.cp_mixing_residuals(self.phi, GNS.mixing_epsilon(self.phi, k, spectral), spectral)
                self.assertGreaterEqual(upper, -1e-8)
                self.assertGreaterEqual(lower, -1e-8)

    def test_iterate_bracket_contains_middle_and_shrinks(self) -> None:
        previous_width = math.inf
        for k in (1, 2, 3):
            with self.subTest(k=k):
                bounds = GNS.iterate_bounds(self.phi, self.dephasing, self.tau, k, middle=True)
                self.assertTrue(bounds.valid)
                self.assertTrue(bounds.inclusion)
                self.assertAlmostEqual(bounds.limit_bits, 0.0, places=9)
                middle = bounds.middle_bits
                assert middle is not None
                self.assertLessEqual(bounds.lower_bits, middle + 1e-9)
                self.assertLessEqual(middle, bounds.upper_bits + 1e-9)
                self.assertAlmostEqual(middle, math.log2(1 + 2.0 ** (-2 * k)), places=7)
                width = bounds.upper_bits - bounds.lower_bits
                self.assertLessEqual(width, math.log2(1 + 2.0 ** (-2 * k)) + 1e-9)
                self.assertLess(width, previous_width)
                previous_width = width

    def test_iterate_bounds_without_nested_periphery_are_infinite(self) -> None:
        bounds = GNS.iterate_bounds(self.phi, Channels.Superoperator.identity(2), self.tau, 1)
        self.assertFalse(bounds.inclusion)
        self.assertFalse(bounds.valid)
        self.assertEqual(bounds.lower_bits, math.inf)
        self.assertEqual(bounds.upper_bits, math.inf)

    def test_strong_converse_bracket(self) -> None:
        bounds = GNS.iterate_bounds(self.phi, self.dephasing, self.tau, 1)
        self.assertEqual(bounds.stein, (bounds.lower_bits, bounds.upper_bits))
        self.assertEqual(bounds.chernoff, bounds.stein)
        lower, upper = bounds.strong_converse(bounds.upper_bits + 1.0)
        assert lower is not None and upper is not None
        self.assertAlmostEqual(lower, 1.0)
        self.assertLessEqual(lower, upper)
        lower, upper = bounds.strong_converse((bounds.lower_bits + bounds.upper_bits) / 2)
        self.assertIsNone(lower)
        self.assertIsNotNone(upper)
        self.assertEqual(bounds.strong_converse(bounds.lower_bits - 1.0), (None, None))

    def test_diamond_decay_is_decreasing(self) -> None:
        cfg = Oracle.OptimizerConfig(restarts=2, max_iters=80, seed=3)
        decay = GNS.diamond_decay(self.phi, [1, 2], cfg)
        self.assertEqual(len(decay), 2)
        self.assertGreater(decay[0], decay[1])
        self.assertLessEqual(decay[0], 2.0 * 0.25 + 1e-6)


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
