# standard libraries
import logging
import math
import unittest

# third party libraries
import numpy

# local libraries
from nion.idempotent import Matrix
from nion.idempotent import States
from nion.idempotent import Validator

ZERO = numpy.diag([1.0, 0.0])
ONE = numpy.diag([0.0, 1.0])
PLUS = numpy.full((2, 2), 0.5)
MIXED = numpy.eye(2) / 2


class TestStates(unittest.TestCase):

    def setUp(self) -> None:
        self.rng = numpy.random.default_rng(11)

    def tearDown(self) -> None:
        pass

    def test_density_matrix_checks_trace_and_positivity(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            States.DensityMatrix(numpy.eye(2))
        with self.assertRaises(Validator.ValidationError):
            States.DensityMatrix(numpy.diag([1.5, -0.5]))
        rho = States.DensityMatrix.from_vector([1.0, 1.0])
        self.assertTrue(numpy.allclose(rho.matrix, PLUS))
        self.assertEqual(rho.dim, 2)
        self.assertFalse(rho.matrix.flags.writeable)

    def test_umegaki_values(self) -> None:
        rho = Matrix.random_density(3, self.rng)
        self.assertAlmostEqual(States.umegaki(rho, rho), 0.0, places=10)
        self.assertAlmostEqual(States.umegaki(ZERO, MIXED), 1.0, places=10)
        self.assertEqual(States.umegaki(MIXED, ZERO), math.inf)

    def test_petz_renyi_values(self) -> None:
        rho = Matrix.random_density(3, self.rng)
        for alpha in (0.3, 0.5, 2.0):
            with self.subTest(alpha=alpha):
                self.assertAlmostEqual(States.petz_renyi(rho, rho, alpha), 0.0, places=9)
        self.assertAlmostEqual(States.petz_renyi(ZERO, PLUS, 0.5), 2.0, places=9)
        with self.assertRaises(Validator.ValidationError):
            States.petz_renyi(rho, rho, 1.0)

    def test_petz_renyi_approaches_umegaki(self) -> None:
        rho, sigma = Matrix.random_density(3, self.rng), Matrix.random_density(3, self.rng)
        reference = States.umegaki(rho, sigma)
        for alpha in (1 - 1e-5, 1 + 1e-5):
            with self.subTest(alpha=alpha):
                self.assertAlmostEqual(States.petz_renyi(rho, sigma, alpha), reference, delta=1e-4)

    def test_sandwiched_values(self) -> None:
        rho = Matrix.random_density(3, self.rng)
        self.assertAlmostEqual(States.sandwiched(rho, rho, 2.0), 0.0, places=9)
        self.assertAlmostEqual(States.sandwiched(MIXED, numpy.diag([0.25, 0.75]), 2.0), math.log2(4 / 3), places=10)
        self.assertEqual(States.sandwiched(MIXED, ZERO, 2.0), math.inf)

    def test_max_and_min_divergences(self) -> None:
        self.assertAlmostEqual(States.dmax(ZERO, MIXED), 1.0, places=10)
        rho = Matrix.random_density(3, self.rng)
        self.assertAlmostEqual(States.dmin(rho, rho), 0.0, places=10)
        self.assertEqual(States.dmin(ZERO, ONE), math.inf)
        self.assertEqual(States.dmax(PLUS, ZERO), math.inf)

    def test_divergence_chain_on_random_pairs(self) -> None:
        for d in (2, 3, 4):
            rho, sigma = Matrix.random_density(d, self.rng), Matrix.random_density(d, self.rng)
            chain = [States.dmin(rho, sigma), States.petz_renyi(rho, sigma, 0.5), States.umegaki(rho, sigma),
                     States.sandwiched(rho, sigma, 2.0), States.dmax(rho, sigma)]
            with self.subTest(d=d):
                for lower, upper in zip(chain, chain[1:]):
                    self.assertGreaterEqual(upper - lower, -1e-9)

    def test_hypothesis_testing_of_identical_states(self) -> None:
        for epsilon in (0.1, 0.5):
            with self.subTest(epsilon=epsilon):
                value, test = States.hypothesis_testing(MIXED, MIXED, epsilon)
                self.assertAlmostEqual(value, -math.log2(1 - epsilon), places=6)
                self.assertAlmostEqual(test.type_one_success(MIXED), 1 - epsilon, places=6)
                self.assertFalse(test.infinite)

    def test_hypothesis_testing_classical_limit(self) -> None:
        value, test = States.hypothesis_testing(ZERO, MIXED, 1e-9)
        self.assertAlmostEqual(value, 1.0, places=6)
        self.assertAlmostEqual(test.type_two_error(MIXED), 0.5, places=6)

    def test_hypothesis_testing_outside_support_is_infinite(self) -> None:
        value, test = States.hypothesis_testing(ZERO, ONE, 0.1)
        self.assertEqual(value, math.inf)
        self.assertTrue(test.infinite)
        self.assertAlmostEqual(test.type_two_error(ONE), 0.0)

    def test_one_shot_bounds_bracket_hypothesis_testing(self) -> None:
        for _ in range(5):
            rho, sigma = Matrix.random_density(3, self.rng), Matrix.random_density(3, self.rng)
            value, _ = States.hypothesis_testing(rho, sigma, 0.1)
            lower, upper = States.one_shot_bounds(rho, sigma, 0.1)
            self.assertLessEqual(lower, value + 1e-9)
            self.assertLessEqual(value, upper + 1e-9)

    def test_chernoff_values(self) -> None:
        rho = Matrix.random_density(2, self.rng)
        self.assertAlmostEqual(States.chernoff(rho, rho), 0.0, places=6)
        self.assertAlmostEqual(States.chernoff(ZERO, PLUS), 1.0, places=6)
        self.assertAlmostEqual(States.chernoff(ZERO, MIXED), 1.0, places=6)
        self.assertEqual(States.chernoff(ZERO, ONE), math.inf)

    def test_helstrom_error_values(self) -> None:
        self.assertAlmostEqual(States.helstrom_error(MIXED, MIXED), 0.5)
        self.assertAlmostEqual(States.helstrom_error(ZERO, ONE), 0.0)
        self.assertAlmostEqual(States.helstrom_error(ZERO, PLUS), (1 - 1 / math.sqrt(2)) / 2)

    def test_divergence_kind(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            States.DivergenceKind("sandwiched")
        with self.assertRaises(Validator.ValidationError):
            States.DivergenceKind("relative")
        kind = States.DivergenceKind("sandwiched", 2.0)
        self.assertTrue(kind.needs_support)
        self.assertFalse(States.DivergenceKind("dmin").needs_support)
        self.assertFalse(States.DivergenceKind("petz", 0.5).needs_support)
        self.assertAlmostEqual(kind.evaluate(MIXED, numpy.diag([0.25, 0.75])), math.log2(4 / 3), places=10)

    def test_support_warnings(self) -> None:
        self.assertEqual(States.support_warnings(MIXED, MIXED), list())
        nearly_singular = numpy.diag([1 - 1e-9, 1e-9])
        warnings = States.support_warnings(nearly_singular, MIXED)
        self.assertEqual(len(warnings), 1)
        self.assertIn("rho", warnings[0])


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
