# standard libraries
import json
import logging
import math
import os
import pathlib
import tempfile
import typing
import unittest

# third party libraries
import numpy
import numpy.typing

# local libraries
from nion.idempotent import Channels
from nion.idempotent import Command
from nion.idempotent import Constants
from nion.idempotent import Converter
from nion.idempotent import States
from nion.idempotent import Validator

HADAMARD = numpy.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)


class TestCommand(unittest.TestCase):

    def setUp(self) -> None:
        self.__directory = tempfile.TemporaryDirectory()
        self.path = pathlib.Path(self.__directory.name)
        self.rng = numpy.random.default_rng(5)

    def tearDown(self) -> None:
        self.__directory.cleanup()

    def _write(self, name: str, value: typing.Any) -> str:
        path = self.path / name
        path.write_text(json.dumps(value), encoding="utf-8")
        return str(path)

    def _write_channel(self, name: str, channel: Channels.ChannelLike) -> str:
        return self._write(name, Converter.ChannelToDictConverter().convert(channel))

    def _write_state(self, name: str, matrix: numpy.typing.ArrayLike) -> str:
        return self._write(name, Converter.DensityMatrixToDictConverter().convert(States.DensityMatrix(matrix)))

    def test_state_divergence(self) -> None:
        rho = self._write_state("rho.json", numpy.diag([0.75, 0.25]))
        sigma = self._write_state("sigma.json", numpy.eye(2) / 2)
        result = Command.cmd_divergence(Command.RunConfig("divergence", (rho, sigma), kind="dmax"))
        self.assertAlmostEqual(result.body["value_bits"], math.log2(1.5))
        self.assertEqual(result.rows[0]["name"], "dmax")

    def test_hypothesis_testing_requires_epsilon(self) -> None:
        rho = self._write_state("rho.json", numpy.diag([0.75, 0.25]))
        sigma = self._write_state("sigma.json", numpy.eye(2) / 2)
        with self.assertRaisesRegex(Validator.ValidationError, "epsilon"):
            Command.cmd_divergence(Command.RunConfig("divergence", (rho, sigma), kind="hypothesis_testing"))
        result = Command.cmd_divergence(Command.RunConfig("divergence", (rho, sigma), kind="hypothesis_testing", epsilon=0.1))
        lower, upper = result.body["one_shot_bounds"]
        self.assertLessEqual(lower, result.body["value_bits"] + 1e-9)
        self.assertLessEqual(result.body["value_bits"], upper + 1e-9)

    def test_formula_identity_route(self) -> None:
        p = self._write_channel("p.json", Channels.BlockIdempotent.identity(2))
        q = self._write_channel("q.json", Channels.BlockIdempotent.dephasing(2))
        result = Command.cmd_formula(Command.RunConfig("formula", (p, q)))
        self.assertEqual(result.body["route"], "identity")
        self.assertAlmostEqual(result.body["value_bits"], Constants.ID_VS_DEPHASING_DCB_BITS)
        self.assertAlmostEqual(result.body["oracle_bits"], Constants.ID_VS_DEPHASING_DCB_BITS, places=8)
        self.assertEqual(result.body["exponents"]["stein_bits"], result.body["value_bits"])

    def test_formula_inclusion_failure_is_infinite(self) -> None:
        p = self._write_channel("p.json", Channels.BlockIdempotent.dephasing(2))
        q = self._write_channel("q.json", Channels.BlockIdempotent.dephasing(2, HADAMARD))
        result = Command.cmd_formula(Command.RunConfig("formula", (p, q)))
        self.assertEqual(result.body["route"], "inclusion_failure")
        self.assertEqual(result.body["value_bits"], "inf")
        self.assertTrue(result.body["exponents"]["perfect_discrimination"])

    def test_formula_common_route_matches_choi(self) -> None:
        replacer = Channels.BlockIdempotent([Channels.Block(1, 2, numpy.eye(2) / 2)])
        p = self._write_channel("p.json", Channels.BlockIdempotent.dephasing(2))
        q = self._write_channel("q.json", replacer)
        result = Command.cmd_formula(Command.RunConfig("formula", (p, q)))
        self.assertEqual(result.body["route"], "common")
        self.assertAlmostEqual(result.body["value_bits"], 1.0, places=8)
        self.assertAlmostEqual(result.body["value_bits"], result.body["oracle_bits"], places=8)

    def test_formula_rejects_non_idempotent_input(self) -> None:
        mixture = Channels.Superoperator.identity(2).mix(Channels.BlockIdempotent.dephasing(2).to_superoperator(), 0.5)
        p = self._write_channel("p.json", mixture)
        q = self._write_channel("q.json", Channels.BlockIdempotent.dephasing(2))
        code, text = Command.run(Command.RunConfig("formula", (p, q)))
        self.assertEqual(code, Command.EXIT_INVALID)
        self.assertIn("not idempotent", text)

    def test_counterexample_values(self) -> None:
        result = Command.cmd_counterexample(Command.RunConfig("counterexample"))
        body = result.body
        self.assertAlmostEqual(body["value_bits"], Constants.COUNTEREXAMPLE_VALUE_BITS, places=9)
        self.assertAlmostEqual(body["bound_bits"], Constants.COUNTEREXAMPLE_BOUND_BITS, places=6)
        self.assertTrue(body["strict_gap"])
        self.assertFalse(body["exact"])
        self.assertAlmostEqual(body["p_star"], Constants.COUNTEREXAMPLE_OPTIMAL_P)
        self.assertEqual(body["q_star"], [Constants.COUNTEREXAMPLE_OPTIMAL_Q] * 2)
        numpy.testing.assert_allclose(body["block_linear"], [Constants.COUNTEREXAMPLE_BLOCK_LINEAR] * 2, atol=1e-6)
        self.assertEqual(len(result.rows), 2)

    def test_counterexample_report_is_reproducible(self) -> None:
        config = Command.RunConfig("counterexample", seed=3)
        first = json.loads(Command.run(config)[1])
        second = json.loads(Command.run(config)[1])
        self.assertEqual(first["report"], second["report"])
        self.assertEqual(first["header"]["config_hash"], second["header"]["config_hash"])
        self.assertEqual(first["header"]["seed"], 3)

    def test_verify_suites_pass(self) -> None:
        cfg = Command.RunConfig("verify", restarts=2, max_iters=80).optimizer()
        suites = {
            "ordering": Command.suite_ordering(self.rng, trials=10),
            "additivity": Command.suite_additivity(self.rng, trials=2),
            "infinite": Command.suite_infinite(self.rng),
            "collapse": Command.suite_collapse(self.rng, cfg, trials=1),
            "simplex": Command.suite_simplex(self.rng, trials=3),
            "gns": Command.suite_gns(),
        }
        for suite, results in suites.items():
            with self.subTest(suite=suite):
                self.assertTrue(results)
                failed = [r.name for r in results if not r.passed]
                self.assertEqual(failed, [])
                self.assertTrue(all(r.suite == suite for r in results))

    def test_additivity_compares_product_channels(self) -> None:
        results = Command.suite_additivity(self.rng, trials=2)
        choi = [r for r in results if r.name.endswith("choi")]
        self.assertEqual(len(choi), 4)
        self.assertTrue(all(r.passed for r in choi))

    def test_infinite_suite_on_input_pair(self) -> None:
        p = Channels.BlockIdempotent.dephasing(2)
        q = Channels.BlockIdempotent.dephasing(2, HADAMARD)
        results = Command.suite_infinite(self.rng, channels=(p, q))
        self.assertEqual([r.name for r in results], ["input rank", "input umegaki"])
        self.assertTrue(all(r.passed for r in results))
        self.assertEqual(results[1].residual, math.inf)
        with self.assertRaisesRegex(Validator.ValidationError, "inclusion"):
            Command.suite_infinite(self.rng, channels=(Channels.BlockIdempotent.identity(2), p))

    def test_verify_infinite_suite(self) -> None:
        code, text = Command.run(Command.RunConfig("verify", suite="infinite", seed=2))
        self.assertEqual(code, Command.EXIT_OK)
        report = json.loads(text)["report"]
        self.assertEqual(len(report["checks"]), 2 * Constants.INFINITE_TRIALS)

    def test_verify_exit_code_and_body(self) -> None:
        code, text = Command.run(Command.RunConfig("verify", suite="gns"))
        self.assertEqual(code, Command.EXIT_OK)
        report = json.loads(text)["report"]
        self.assertTrue(report["passed"])
        self.assertEqual(report["failures"], 0)

    def test_verify_rejects_unknown_suite(self) -> None:
        code, text = Command.run(Command.RunConfig("verify", suite="everything"))
        self.assertEqual(code, Command.EXIT_INVALID)

    def test_malformed_json_reports_position(self) -> None:
        bad = self.path / "bad.json"
        bad.write_text("{\n  \"dims\": [2, 2],\n  oops\n}", encoding="utf-8")
        sigma = self._write_state("sigma.json", numpy.eye(2) / 2)
        code, text = Command.run(Command.RunConfig("divergence", (str(bad), sigma)))
        self.assertEqual(code, Command.EXIT_INVALID)
        self.assertIn("line 3", text)

    def test_missing_file_is_invalid_input(self) -> None:
        sigma = self._write_state("sigma.json", numpy.eye(2) / 2)
        code, text = Command.run(Command.RunConfig("divergence", (str(self.path / "missing.json"), sigma)))
        self.assertEqual(code, Command.EXIT_INVALID)
        self.assertIn("cannot read input", text)

    def test_wrong_input_count(self) -> None:
        sigma = self._write_state("sigma.json", numpy.eye(2) / 2)
        code, _ = Command.run(Command.RunConfig("divergence", (sigma,)))
        self.assertEqual(code, Command.EXIT_INVALID)

    def test_seed_environment_variable_overrides_flag(self) -> None:
        args = Command.build_parser().parse_args(["counterexample", "--seed", "1"])
        self.assertEqual(Command.config_from_args(args, dict()).seed, 1)
        self.assertEqual(Command.config_from_args(args, {Command.SEED_VARIABLE: "9"}).seed, 9)
        with self.assertRaises(Validator.ValidationError):
            Command.config_from_args(args, {Command.SEED_VARIABLE: "nine"})

    def test_config_hash_ignores_output_path(self) -> None:
        a = Command.RunConfig("counterexample", output="a.json")
        b = Command.RunConfig("counterexample", output="b.json")
        self.assertEqual(a.to_dict(), b.to_dict())
        self.assertNotIn("output", a.to_dict())

    def test_csv_output_has_commented_header(self) -> None:
        code, text = Command.run(Command.RunConfig("counterexample", format="csv"))
        self.assertEqual(code, Command.EXIT_OK)
        lines = text.splitlines()
        comments = [line for line in lines if line.startswith("# ")]
        self.assertEqual([line.split(":")[0] for line in comments], ["# config_hash", "# seed", "# tool", "# version", "# wall_clock_s"])
        self.assertEqual(lines[len(comments)], "k,l,d_A,d_B,value")
        self.assertEqual(len(lines), len(comments) + 3)

    def test_main_writes_output_file(self) -> None:
        out = self.path / "report.json"
        environ = dict(os.environ)
        os.environ.pop(Command.SEED_VARIABLE, None)
        try:
            code = Command.main(["counterexample", "--seed", "4", "--out", str(out)])
        finally:
            os.environ.clear()
            os.environ.update(environ)
        self.assertEqual(code, Command.EXIT_OK)
        parsed = json.loads(out.read_text(encoding="utf-8"))
        self.assertEqual(parsed["header"]["tool"], "idemchan")
        self.assertEqual(parsed["header"]["seed"], 4)

    def test_run_config_validation(self) -> None:
        with self.assertRaises(Validator.ValidationError):
            Command.RunConfig("counterexample", format="xml")
        with self.assertRaises(Validator.ValidationError):
            Command.RunConfig("counterexample", seed=-1)


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
