"""
Report records and their JSON and CSV renderings.
"""

from __future__ import annotations

# standard libraries
import csv
import dataclasses
import hashlib
import importlib.metadata
import io
import json
import typing

# third party libraries
import numpy
import numpy.typing

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Converter
from nion.idempotent import States

JsonDict = typing.Dict[str, typing.Any]

_extended_real = Converter.ExtendedRealToJsonConverter()


def tool_version() -> str:
    try:
        return importlib.metadata.version("nionidempotent")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def canonical_json(value: typing.Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: typing.Mapping[str, typing.Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def extended(value: typing.Optional[float]) -> typing.Any:
    return _extended_real.convert(value)


@dataclasses.dataclass
class DivergenceReport:
    """A named value in bits with the input that achieves it and an optional oracle cross-check."""
    name: str
    value_bits: float
    alpha: typing.Optional[float] = None
    achieving_state: typing.Optional[States.DensityMatrix] = None
    oracle_bits: typing.Optional[float] = None
    warnings: typing.List[str] = dataclasses.field(default_factory=list)
    extra: JsonDict = dataclasses.field(default_factory=dict)

    @property
    def infinite(self) -> bool:
        return self.value_bits == float("inf")

    def to_dict(self) -> JsonDict:
        d: JsonDict = {"name": self.name, "value_bits": extended(self.value_bits), "infinite": self.infinite, "warnings": list(self.warnings)}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.achieving_state is not None:
            d["achieving_state"] = Converter.DensityMatrixToDictConverter().convert(self.achieving_state)
        if self.oracle_bits is not None:
            d["oracle_bits"] = extended(self.oracle_bits)
        d.update(self.extra)
        return d


@dataclasses.dataclass(frozen=True)
class CheckResult:
    """One verification check with its measured residual."""
    suite: str
    name: str
    passed: bool
    residual: float
    detail: str = str()

    def to_dict(self) -> JsonDict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed, "residual": extended(self.residual), "detail": self.detail}


def exponent_dict(report: ClosedForm.ExponentReport, rates: typing.Sequence[float] = ()) -> JsonDict:
    return {
        "stein_bits": extended(report.stein_bits),
        "chernoff_bits": extended(report.chernoff_bits),
        "dcb_bits": extended(report.dcb_bits),
        "additive": report.additive,
        "exact": report.exact,
        "perfect_discrimination": report.perfect_discrimination,
        "strong_converse": [{"r": r, "value": extended(report.strong_converse(r))} for r in rates],
    }


def block_rows(t: Channels.ThreeLayer, values: numpy.typing.ArrayLike) -> typing.List[JsonDict]:
    """(k, l, d_A, d_B, value) rows for every nonempty piece."""
    table = numpy.asarray(values, dtype=float)
    return [{"k": k, "l": l, "d_A": t.a[l], "d_B": int(t.b[k, l]), "value": extended(float(table[k, l]))} for k, l in t.pieces()]


def header(seed: int, config: typing.Mapping[str, typing.Any], wall_clock_s: float) -> JsonDict:
    return {"tool": "idemchan", "version": tool_version(), "seed": seed, "config_hash": config_hash(config), "wall_clock_s": wall_clock_s}


def render_json(header_dict: JsonDict, body: typing.Any) -> str:
    return json.dumps({"header": header_dict, "report": body}, indent=2, sort_keys=True)


def render_csv(rows: typing.Sequence[typing.Mapping[str, typing.Any]], fieldnames: typing.Optional[typing.Sequence[str]] = None) -> str:
    fields = list(fieldnames) if fieldnames is not None else (list(rows[0].keys()) if rows else list())
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()
