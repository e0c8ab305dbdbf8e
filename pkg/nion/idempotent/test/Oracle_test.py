# standard libraries
import logging
import math
import unittest

# third party libraries
import numpy

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Constants
from nion.idempotent import Matrix
from nion.idempotent import Oracle
from nion.idempotent import States
from nion.idempotent import Validator

FAST = Oracle.OptimizerConfig(restarts=2, max_iters=60, seed=1)


def _two_block_example() -> Channels.ThreeLayer:
    return Channels.ThreeLayer(Constants.COUNTEREXAMPLE_A, Constants.COUNTEREXAMPLE_B, Constants.COUNTEREXAMPLE_C,
                               Constants.counterexample_delta(), Constants.counterexample_omega())


class TestOracle(unittest.TestCase):

    def setUp(self) -> None:
        self.rng = numpy.random.default_rng(17)

    def tearDown(self) -> None:
        pass

    def test_optimizer_config_validation(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Oracle.OptimizerConfig(restarts=-1)
        with self.assertRaises(Validator.ValidationError):
            Oracle.OptimizerConfig(workers=0)
        with self.assertRaises(Validator.ValidationError):
            Oracle.OptimizerConfig(fd_step=0.0)
        self.assertEqual(Oracle.OptimizerConfig().to_dict()["restarts"], 64)

    def test_equal_channels_have_zero_divergence(self) -> None:
        q = Channels.random_block_idempotent(self.rng, max_blocks=2, max_d_a=1, max_d_b=2)
        for kind in (States.DivergenceKind("dmax"), States.DivergenceKind("umegaki"), States.DivergenceKind("sandwiched", 2.0)):
            with self.subTest(kind=kind.name):
                result = Oracle.maximize_channel_divergence(kind, q, q, 1, FAST)
                self.assertAlmostEqual(result.value_bits, 0.0, places=8)

    def test_identity_against_dephasing_with_reference(self) -> None:
        result = Oracle.maximize_channel_divergence(States.DivergenceKind("dmax"), Channels.BlockIdempotent.identity(2),
                                                    Channels.BlockIdempotent.dephasing(2), 2, FAST)
        self.assertAlmostEqual(result.value_bits, 1.0, places=6)
        self.assertEqual(result.state.dim, 4)
        self.assertEqual(result.seed, 1)

    def test_oracle_never_exceeds_closed_form(self) -> None:
        q = Channels.random_block_idempotent(self.rng, max_blocks=2, max_d_a=2, max_d_b=2)
        identity = Channels.BlockIdempotent.identity(q.total_dim)
        formula = ClosedForm.d_idq(q)
        result = Oracle.maximize_channel_divergence(States.DivergenceKind("umegaki"), identity, q, 1, FAST)
        self.assertLessEqual(result.value_bits, formula + 1e-6)

    def test_seeded_oracle_reaches_closed_form(self) -> None:
        q = Channels.random_block_idempotent(self.rng, max_blocks=2, max_d_a=2, max_d_b=2)
        identity = Channels.BlockIdempotent.identity(q.total_dim)
        seed = ClosedForm.optimal_vector_idq(q, cb=True)
        cfg = Oracle.OptimizerConfig(restarts=0, max_iters=20)
        result = Oracle.maximize_channel_divergence(States.DivergenceKind("dmin"), identity, q, q.total_dim, cfg, [seed])
        self.assertAlmostEqual(result.value_bits, ClosedForm.d_idq_cb(q), delta=1e-6)
        self.assertEqual(result.achieved_by, "seeded")

    def test_infinite_divergence_returns_early(self) -> None:
        reset = Channels.Superoperator.from_kraus([numpy.array([[1.0, 0.0], [0.0, 0.0]]), numpy.array([[0.0, 1.0], [0.0, 0.0]])])
        result = Oracle.maximize_channel_divergence(States.DivergenceKind("umegaki"), Channels.Superoperator.identity(2), reset, 1, FAST)
        self.assertEqual(result.value_bits, math.inf)

    def test_dimension_mismatch_is_rejected(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Oracle.maximize_channel_divergence(States.DivergenceKind("dmax"), Channels.BlockIdempotent.identity(2),
                                               Channels.BlockIdempotent.dephasing(3), 1, FAST)

    def test_choi_dmax_matches_closed_forms(self) -> None:
        for _ in range(3):
            q = Channels.random_block_idempotent(self.rng, max_blocks=2, max_d_a=2, max_d_b=2)
            self.assertAlmostEqual(Oracle.choi_dmax_cb(Channels.BlockIdempotent.identity(q.total_dim), q), ClosedForm.d_idq_cb(q), delta=1e-8)
            t = Channels.random_three_layer(self.rng)
            self.assertAlmostEqual(Oracle.choi_dmax_cb(t.p_channel(), t.q_channel()), ClosedForm.d_pq_common_cb(t)[0], delta=1e-8)

    def test_grid_simplex_matches_closed_forms(self) -> None:
        self.assertAlmostEqual(Oracle.grid_simplex_optimum("softmax", [0.0, 0.0]), 1.0, places=9)
        self.assertAlmostEqual(Oracle.grid_simplex_optimum("harmonic", [1.0, 1.0]), 0.5, places=9)
        self.assertAlmostEqual(Oracle.grid_simplex_optimum("hoelder", [3.0, 3.0], alpha=2.0), math.log2(6.0), places=9)
        for kind, alpha in (("softmax", None), ("harmonic", None), ("hoelder", 2.5)):
            c = self.rng.uniform(0.2, 3.0, size=3).tolist()
            with self.subTest(kind=kind):
                closed, _ = ClosedForm.simplex_optimum(kind, c, alpha)
                self.assertAlmostEqual(Oracle.grid_simplex_optimum(kind, c, 200, alpha), closed, delta=Constants.SIMPLEX_TOLERANCE)

    def test_grid_simplex_limits(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Oracle.grid_simplex_optimum("softmax", [0.0] * 5)
        with self.assertRaises(Validator.ValidationError):
            Oracle.grid_simplex_optimum("softmax", [0.0, 1.0], resolution=0)
        self.assertAlmostEqual(Oracle.grid_simplex_optimum("softmax", [2.0]), 2.0)

    def test_diamond_lower_identity_against_dephasing(self) -> None:
        value = Oracle.diamond_lower(Channels.BlockIdempotent.identity(2), Channels.BlockIdempotent.dephasing(2), FAST)
        self.assertAlmostEqual(value, Constants.ID_VS_DEPHASING_DIAMOND, places=6)

    def test_finite_n_error_trend(self) -> None:
        identity, dephasing = Channels.BlockIdempotent.identity(2), Channels.BlockIdempotent.dephasing(2)
        dcb = ClosedForm.d_idq_cb(dephasing)
        reports = [Oracle.finite_n_perr(identity, dephasing, n, FAST) for n in (1, 2)]
        self.assertAlmostEqual(reports[0].p_err, 0.25, places=6)
        self.assertAlmostEqual(reports[0].exponent, 2.0, places=6)
        for report in reports:
            self.assertGreaterEqual(report.prior_free_exponent, -1e-9)
            self.assertLessEqual(report.prior_free_exponent, dcb + 1e-6)
        self.assertGreaterEqual(reports[1].prior_free_exponent, reports[0].prior_free_exponent - 1e-6)
        with self.assertRaises(Validator.ValidationError):
            Oracle.finite_n_perr(identity, dephasing, 3, FAST)

    def test_rank_nondecreasing_check(self) -> None:
        dephasing = Channels.BlockIdempotent.dephasing(3)
        self.assertTrue(Oracle.rank_nondecreasing_check(dephasing, 10, self.rng))
        mixture = Channels.Superoperator.identity(3).mix(dephasing.to_superoperator(), 0.3)
        self.assertTrue(Oracle.rank_nondecreasing_check(mixture, 10, self.rng))
        with self.assertRaisesRegex(Validator.ValidationError, "unital"):
            Oracle.rank_nondecreasing_check(Channels.BlockIdempotent.replacer(numpy.diag([0.75, 0.25])), 5, self.rng)

    def test_block_divergences_of_two_block_example(self) -> None:
        t = _two_block_example()
        cfg = Oracle.OptimizerConfig(restarts=8, max_iters=300, seed=0)
        values = Oracle.block_divergence_table(t, States.DivergenceKind("sandwiched", Constants.COUNTEREXAMPLE_ALPHA), cfg=cfg)
        expected = math.log2(Constants.COUNTEREXAMPLE_BLOCK_LINEAR)
        for l in range(t.L):
            with self.subTest(l=l):
                self.assertAlmostEqual(float(values[0, l]), expected, delta=1e-5)

    def test_full_divergence_of_two_block_example(self) -> None:
        t = _two_block_example()
        kind = States.DivergenceKind("sandwiched", Constants.COUNTEREXAMPLE_ALPHA)
        seeds = Oracle.structured_seeds([4, 4], 1)
        result = Oracle.maximize_channel_divergence(kind, t.p_channel(), t.q_channel(), 1, Oracle.OptimizerConfig(restarts=4, max_iters=300), seeds)
        self.assertAlmostEqual(result.value_bits, Constants.COUNTEREXAMPLE_VALUE_BITS, delta=1e-6)
        self.assertGreater(Constants.COUNTEREXAMPLE_BOUND_BITS - result.value_bits, 0.04)

    def test_block_divergence_rejects_empty_piece(self) -> None:
        dephasing = Channels.BlockIdempotent.dephasing(2)
        t = Channels.three_layer_decompose(dephasing, dephasing, self.rng)
        k, l = next((k, l) for k in range(t.K) for l in range(t.L) if t.b[k, l] == 0)
        with self.assertRaises(Validator.ValidationError):
            Oracle.block_divergence(t, k, l, States.DivergenceKind("dmax"))

    def test_structured_seeds(self) -> None:
        seed = Oracle.structured_seeds([2, 3], 1)[0]
        self.assertAlmostEqual(float(numpy.linalg.norm(seed)), 1.0)
        self.assertTrue(numpy.allclose(seed, (Matrix.ket(5, 0) + Matrix.ket(5, 2)) / math.sqrt(2)))

    def test_parallel_restarts_match_serial(self) -> None:
        q = Channels.random_block_idempotent(self.rng, max_blocks=2, max_d_a=1, max_d_b=2)
        identity = Channels.BlockIdempotent.identity(q.total_dim)
        kind = States.DivergenceKind("dmax")
        serial = Oracle.maximize_channel_divergence(kind, identity, q, 1, Oracle.OptimizerConfig(restarts=3, max_iters=40, seed=4))
        parallel = Oracle.maximize_channel_divergence(kind, identity, q, 1, Oracle.OptimizerConfig(restarts=3, max_iters=40, seed=4, workers=2))
        self.assertEqual(serial.value_bits, parallel.value_bits)


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
