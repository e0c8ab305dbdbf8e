# standard libraries
import logging
import math
import unittest

# third party libraries
import numpy

# local libraries
from nion.idempotent import Matrix
from nion.idempotent import Validator


class TestMatrix(unittest.TestCase):

    def setUp(self) -> None:
        self.rng = numpy.random.default_rng(7)

    def tearDown(self) -> None:
        pass

    def test_as_matrix_rejects_bad_shapes(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Matrix.as_matrix([1.0, 2.0])
        with self.assertRaises(Validator.ValidationError):
            Matrix.as_matrix([[1.0, 2.0]])
        with self.assertRaises(Validator.ValidationError):
            Matrix.as_matrix([[float("nan")]])
        self.assertEqual(Matrix.as_matrix([[1.0, 2.0]], square=False).shape, (1, 2))

    def test_check_dimension_cap(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Matrix.check_dimension(0)
        with self.assertRaises(Validator.ValidationError):
            Matrix.check_dimension(Matrix.MAX_DIMENSION + 1)
        self.assertEqual(Matrix.check_dimension(Matrix.MAX_DIMENSION), Matrix.MAX_DIMENSION)

    def test_hermitize_rejects_non_hermitian(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Matrix.hermitize([[1.0, 1.0], [0.0, 1.0]])
        h = Matrix.hermitize([[1.0, 1j], [-1j, 2.0]])
        self.assertTrue(numpy.allclose(h, h.conj().T))

    def test_eigenvalues_are_descending_and_reconstruct(self) -> None:
        h = Matrix.random_hermitian(5, self.rng)
        e = Matrix.eig_hermitian(h)
        self.assertTrue(numpy.all(numpy.diff(e.eigenvalues) <= 0))
        self.assertTrue(numpy.allclose(e.reconstruct(), h))

    def test_rank_and_support_projection(self) -> None:
        rho = Matrix.random_density(4, self.rng, rank=2)
        self.assertEqual(Matrix.rank(rho), 2)
        p = Matrix.support_projection(rho)
        self.assertTrue(numpy.allclose(p @ p, p))
        self.assertAlmostEqual(numpy.trace(p).real, 2.0)
        self.assertTrue(numpy.allclose(p @ rho, rho))

    def test_psd_power_keeps_kernel(self) -> None:
        rho = numpy.diag([0.5, 0.5, 0.0]).astype(numpy.complex128)
        inverse = Matrix.psd_power(rho, -1.0)
        self.assertTrue(numpy.allclose(inverse, numpy.diag([2.0, 2.0, 0.0])))

    def test_mat_fn_rejects_undefined_values(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Matrix.mat_fn(numpy.diag([1.0, 0.0]), numpy.log2)

    def test_log2m_of_diagonal(self) -> None:
        self.assertTrue(numpy.allclose(Matrix.log2m(numpy.diag([4.0, 0.5])), numpy.diag([2.0, -1.0])))

    def test_partial_trace_of_product(self) -> None:
        a = Matrix.random_density(2, self.rng)
        b = Matrix.random_density(3, self.rng)
        ab = Matrix.tensor(a, b)
        self.assertTrue(numpy.allclose(Matrix.partial_trace(ab, [2, 3], [0]), a))
        self.assertTrue(numpy.allclose(Matrix.partial_trace(ab, [2, 3], [1]), b))
        self.assertTrue(numpy.allclose(Matrix.partial_trace(ab, [2, 3], []), [[1.0]]))
        with self.assertRaises(Validator.ValidationError):
            Matrix.partial_trace(ab, [2, 2], [0])

    def test_ky_fan_partial_sums(self) -> None:
        h = numpy.diag([3.0, 1.0, 2.0])
        self.assertAlmostEqual(Matrix.ky_fan(h, 1), 3.0)
        self.assertAlmostEqual(Matrix.ky_fan(h, 2), 5.0)
        self.assertAlmostEqual(Matrix.ky_fan(h, 3), 6.0)
        with self.assertRaises(Validator.ValidationError):
            Matrix.ky_fan(h, 4)

    def test_schatten_norms(self) -> None:
        m = numpy.diag([3.0, -4.0])
        self.assertAlmostEqual(Matrix.trace_norm(m), 7.0)
        self.assertAlmostEqual(Matrix.schatten_norm(m, 2), 5.0)
        self.assertAlmostEqual(Matrix.schatten_norm(m, math.inf), 4.0)
        with self.assertRaises(Validator.ValidationError):
            Matrix.schatten_norm(m, 0.5)

    def test_tensor_and_direct_sum_shapes(self) -> None:
        self.assertEqual(Matrix.tensor(numpy.eye(2), numpy.eye(3)).shape, (6, 6))
        s = Matrix.direct_sum(numpy.eye(2), 2 * numpy.eye(1))
        self.assertTrue(numpy.allclose(s, numpy.diag([1.0, 1.0, 2.0])))

    def test_random_unitary_and_density(self) -> None:
        u = Matrix.random_unitary(4, self.rng)
        self.assertTrue(Matrix.is_unitary(u))
        rho = Matrix.random_density(4, self.rng)
        self.assertAlmostEqual(numpy.trace(rho).real, 1.0)
        self.assertTrue(Matrix.is_psd(rho))
        self.assertEqual(Matrix.rank(rho), 4)

    def test_maximally_entangled_vector(self) -> None:
        v = Matrix.maximally_entangled_vector(3)
        self.assertAlmostEqual(float(numpy.linalg.norm(v)), 1.0)
        reduced = Matrix.partial_trace(Matrix.projector(v), [3, 3], [1])
        self.assertTrue(numpy.allclose(reduced, numpy.eye(3) / 3))

    def test_orthonormal_range_of_coordinate_projection(self) -> None:
        p = numpy.diag([0.0, 1.0, 0.0, 1.0])
        v = Matrix.orthonormal_range(p, 2)
        self.assertTrue(numpy.allclose(v, numpy.eye(4)[:, [1, 3]]))
        self.assertEqual(Matrix.orthonormal_range(p, 0).shape, (4, 0))


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
