# standard libraries
import json
import logging
import math
import unittest

# third party libraries
import numpy

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Report
from nion.idempotent import States


class TestReport(unittest.TestCase):

    def setUp(self) -> None:
        pass

    def tearDown(self) -> None:
        pass

    def test_canonical_json_sorts_keys_without_whitespace(self) -> None:
        self.assertEqual(Report.canonical_json({"b": 1, "a": [1, 2]}), '{"a":[1,2],"b":1}')

    def test_config_hash_is_deterministic_and_order_independent(self) -> None:
        a = Report.config_hash({"seed": 1, "restarts": 16})
        b = Report.config_hash({"restarts": 16, "seed": 1})
        self.assertEqual(a, b)
        self.assertEqual(len(a), 64)
        self.assertNotEqual(a, Report.config_hash({"seed": 2, "restarts": 16}))

    def test_extended_reals(self) -> None:
        self.assertEqual(Report.extended(math.inf), "inf")
        self.assertEqual(Report.extended(-math.inf), "-inf")
        self.assertEqual(Report.extended(1.5), 1.5)
        self.assertIsNone(Report.extended(None))

    def test_divergence_report_to_dict(self) -> None:
        state = States.DensityMatrix.maximally_mixed(2)
        report = Report.DivergenceReport("D", 1.0, alpha=2.0, achieving_state=state, oracle_bits=0.99, extra={"route": "common"})
        d = report.to_dict()
        self.assertEqual(d["name"], "D")
        self.assertEqual(d["value_bits"], 1.0)
        self.assertFalse(d["infinite"])
        self.assertEqual(d["alpha"], 2.0)
        self.assertEqual(d["oracle_bits"], 0.99)
        self.assertEqual(d["route"], "common")
        self.assertEqual(d["achieving_state"]["dims"], [2, 2])
        self.assertEqual(d["warnings"], [])

    def test_infinite_report_omits_optional_fields(self) -> None:
        d = Report.DivergenceReport("D_cb(P||Q)", math.inf).to_dict()
        self.assertTrue(d["infinite"])
        self.assertEqual(d["value_bits"], "inf")
        self.assertNotIn("alpha", d)
        self.assertNotIn("oracle_bits", d)
        self.assertNotIn("achieving_state", d)
        json.dumps(d, allow_nan=False)

    def test_check_result_to_dict(self) -> None:
        d = Report.CheckResult("ordering", "petz <= umegaki", True, 0.0).to_dict()
        self.assertEqual(d, {"suite": "ordering", "name": "petz <= umegaki", "passed": True, "residual": 0.0, "detail": ""})

    def test_exponent_dict(self) -> None:
        d = Report.exponent_dict(ClosedForm.exponents(1.0), [1.5, 2.0])
        self.assertEqual(d["stein_bits"], 1.0)
        self.assertTrue(d["additive"])
        self.assertFalse(d["perfect_discrimination"])
        self.assertEqual([row["value"] for row in d["strong_converse"]], [0.5, 1.0])
        infinite = Report.exponent_dict(ClosedForm.exponents(math.inf))
        self.assertEqual(infinite["dcb_bits"], "inf")
        self.assertTrue(infinite["perfect_discrimination"])

    def test_block_rows_skip_empty_pieces(self) -> None:
        t = Channels.ThreeLayer((1, 1), ((1, 1), (0, 1)), (1, 1), [numpy.eye(1), numpy.eye(1)], [numpy.eye(1), numpy.eye(2) / 2])
        rows = Report.block_rows(t, [[0.25, 0.5], [0.0, 1.0]])
        self.assertEqual([(row["k"], row["l"]) for row in rows], [(0, 0), (0, 1), (1, 1)])
        self.assertEqual([row["value"] for row in rows], [0.25, 0.5, 1.0])
        self.assertEqual(rows[0]["d_A"], 1)
        self.assertEqual(rows[0]["d_B"], 1)

    def test_render_json_has_header_and_report(self) -> None:
        header = Report.header(7, {"seed": 7}, 0.5)
        self.assertEqual(header["tool"], "idemchan")
        self.assertEqual(header["seed"], 7)
        text = Report.render_json(header, {"value_bits": 1.0})
        parsed = json.loads(text)
        self.assertEqual(parsed["header"]["config_hash"], Report.config_hash({"seed": 7}))
        self.assertEqual(parsed["report"], {"value_bits": 1.0})

    def test_render_csv(self) -> None:
        text = Report.render_csv([{"a": 1, "b": "x"}, {"a": 2, "b": "y", "c": 3}])
        self.assertEqual(text, "a,b\n1,x\n2,y\n")
        self.assertEqual(Report.render_csv([], ["a"]), "a\n")


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
