"""
Command line entry point for the idemchan tool.

Sub-commands evaluate state divergences, closed-form channel divergences, verification suites,
the built-in two-block counterexample and the GNS iterate bracket. Reports go to stdout or
--out as JSON (default) or CSV. Exit codes: 0 success, 1 verification failure, 2 invalid input.
"""

from __future__ import annotations

# standard libraries
import argparse
import dataclasses
import json
import logging
import math
import os
import pathlib
import sys
import time
import typing

# third party libraries
import numpy

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Constants
from nion.idempotent import Converter
from nion.idempotent import GNS
from nion.idempotent import Matrix
from nion.idempotent import Oracle
from nion.idempotent import Report
from nion.idempotent import States
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

SEED_VARIABLE = "IDEM_SEED"
STATE_KINDS = States.DIVERGENCE_KINDS + ("hypothesis_testing", "chernoff")
SUITES = ("ordering", "collapse", "additivity", "infinite", "pinching", "simplex", "gns")
FORMATS = ("json", "csv")

JsonDict = typing.Dict[str, typing.Any]


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: typing.Tuple[str, ...] = ()
    seed: int = 0
    restarts: int = 16
    max_iters: int = 500
    workers: int = 1
    kind: str = "umegaki"
    alpha: typing.Optional[float] = None
    epsilon: typing.Optional[float] = None
    ref_dim: typing.Optional[int] = None
    k: int = 2
    suite: typing.Optional[str] = None
    cb: bool = False
    oracle: bool = False
    output: typing.Optional[str] = None
    format: str = "json"

    def __post_init__(self) -> None:
        Validator.ChoiceValidator("format", FORMATS).validate(self.format)
        Validator.IntegerRangeValidator("seed", 0).validate(self.seed)

    def optimizer(self) -> Oracle.OptimizerConfig:
        return Oracle.OptimizerConfig(restarts=self.restarts, max_iters=self.max_iters, seed=self.seed, workers=self.workers)

    def to_dict(self) -> JsonDict:
        """Everything that determines the result; the output path is excluded."""
        d = dataclasses.asdict(self)
        d.pop("output")
        d["inputs"] = list(self.inputs)
        return d


@dataclasses.dataclass
class CommandResult:
    body: JsonDict
    rows: typing.List[JsonDict]
    exit_code: int = EXIT_OK


def _read_json(path: str) -> typing.Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_state(path: str) -> States.DensityMatrix:
    return typing.cast(States.DensityMatrix, Converter.DensityMatrixToDictConverter(path).convert_back(_read_json(path)))


def load_channel(path: str, rng: typing.Optional[numpy.random.Generator] = None) -> Channels.ChannelLike:
    return typing.cast(Channels.ChannelLike, Converter.ChannelToDictConverter(path, rng).convert_back(_read_json(path)))


def _require_inputs(config: RunConfig, count: int, names: str) -> None:
    if len(config.inputs) != count:
        raise Validator.ValidationError("{} expects {} input file(s): {}".format(config.command, count, names))


def _is_identity(ch: Channels.ChannelLike) -> bool:
    t = Channels.as_superoperator(ch).transfer
    return bool(numpy.max(numpy.abs(t - numpy.eye(t.shape[0]))) <= 1e-9)


def _rates(dcb_bits: float) -> typing.List[float]:
    return [dcb_bits + 0.5, dcb_bits + 1.0] if math.isfinite(dcb_bits) else list()


def cmd_divergence(config: RunConfig) -> CommandResult:
    _require_inputs(config, 2, "rho sigma")
    rho, sigma = load_state(config.inputs[0]), load_state(config.inputs[1])
    if rho.dim != sigma.dim:
        raise Validator.ValidationError("states have dimensions {} and {}".format(rho.dim, sigma.dim))
    kind = Validator.ChoiceValidator("kind", STATE_KINDS).validate(config.kind)
    extra: JsonDict = dict()
    if kind == "hypothesis_testing":
        if config.epsilon is None:
            raise Validator.ValidationError("hypothesis_testing requires --epsilon")
        epsilon = Validator.epsilon_validator.validate(config.epsilon)
        value, test = States.hypothesis_testing(rho, sigma, epsilon)
        lower, upper = States.one_shot_bounds(rho, sigma, epsilon)
        extra = {"epsilon": epsilon, "threshold": Report.extended(test.threshold), "gamma": test.gamma,
                 "one_shot_bounds": [Report.extended(lower), Report.extended(upper)]}
    elif kind == "chernoff":
        value = States.chernoff(rho, sigma)
        extra = {"helstrom_error": States.helstrom_error(rho, sigma)}
    else:
        value = States.DivergenceKind(kind, config.alpha).evaluate(rho, sigma)
    report = Report.DivergenceReport(kind, value, config.alpha, warnings=States.support_warnings(rho, sigma), extra=extra)
    return CommandResult(report.to_dict(), [{"name": kind, "alpha": config.alpha, "value_bits": Report.extended(value)}])


def cmd_formula(config: RunConfig) -> CommandResult:
    _require_inputs(config, 2, "P Q")
    rng = numpy.random.default_rng(config.seed)
    p, q = load_channel(config.inputs[0], rng), load_channel(config.inputs[1], rng)
    if p.dim != q.dim:
        raise Validator.ValidationError("channels have dimensions {} and {}".format(p.dim, q.dim))
    for name, ch in (("P", p), ("Q", q)):
        idempotent, residual = Channels.is_idempotent(ch)
        if not idempotent:
            raise Validator.ValidationError("{} is not idempotent (residual {:.3e})".format(name, residual))
        if not isinstance(ch, Channels.BlockIdempotent):
            raise Validator.ValidationError("{} is idempotent but has no block form with full-rank unit image".format(name))
    q_block = typing.cast(Channels.BlockIdempotent, q)
    rows: typing.List[JsonDict] = list()
    if _is_identity(p):
        dcb = ClosedForm.d_idq_cb(q_block)
        exponents = ClosedForm.exponents(dcb, exact=True)
        extra: JsonDict = {"route": "identity", "plain_bits": Report.extended(ClosedForm.d_idq(q_block)), "exact": True, "additive": True}
        report = Report.DivergenceReport("D_cb(id||Q)", dcb, achieving_state=ClosedForm.optimal_input_idq(q_block, cb=True),
                                         oracle_bits=Oracle.choi_dmax_cb(p, q), extra=extra)
    elif not Channels.inclusion_holds(p, q):
        exponents = ClosedForm.exponents(math.inf, exact=True)
        witness = ClosedForm.infinite_divergence_witness(p, q)
        extra = {"route": "inclusion_failure", "exact": True, "additive": True}
        report = Report.DivergenceReport("D_cb(P||Q)", math.inf, achieving_state=witness, extra=extra)
    else:
        t = Channels.three_layer_decompose(p, q, rng)
        if t.common_invariant:
            dcb, kstar = ClosedForm.d_pq_common_cb(t)
            blocks = ClosedForm.block_divergences_common(t, cb=True)
            exponents = ClosedForm.exponents(dcb, exact=True)
            extra = {"route": "common", "kstar": kstar, "plain_bits": Report.extended(ClosedForm.d_pq_common(t)[0]), "exact": True, "additive": True}
            report = Report.DivergenceReport("D_cb(P||Q)", dcb, achieving_state=ClosedForm.optimal_input_pq(t, cb=True),
                                             oracle_bits=Oracle.choi_dmax_cb(p, q), extra=extra)
        else:
            if config.alpha is None:
                raise Validator.ValidationError("P and Q share no full-rank invariant state; the block bound requires --alpha")
            alpha = Validator.alpha_above_one_validator.validate(config.alpha)
            kind = States.DivergenceKind("sandwiched", alpha)
            blocks = Oracle.block_divergence_table(t, kind, config.cb, config.optimizer())
            bound = ClosedForm.general_upper_bound(t, alpha, blocks)
            ref_dim = config.ref_dim if config.ref_dim is not None else (p.dim if config.cb else 1)
            full = Oracle.maximize_channel_divergence(kind, p, q, ref_dim, config.optimizer())
            exponents = ClosedForm.exponents(bound.value_bits, exact=bound.exact)
            extra = {"route": "general", "kstar": bound.kstar, "exact": bound.exact, "additive": bound.exact, "achieved_by": full.achieved_by}
            name = "D~_alpha_cb(P||Q) bound" if config.cb else "D~_alpha(P||Q) bound"
            report = Report.DivergenceReport(name, bound.value_bits, alpha, full.state, full.value_bits, extra=extra)
        report.extra["blocks"] = Report.block_rows(t, blocks)
        rows = report.extra["blocks"]
    report.extra["exponents"] = Report.exponent_dict(exponents, _rates(exponents.dcb_bits))
    if not rows:
        rows = [{"name": report.name, "value_bits": Report.extended(report.value_bits)}]
    return CommandResult(report.to_dict(), rows)


def _check(results: typing.List[Report.CheckResult], suite: str, name: str, residual: float, passed: bool, detail: str = str()) -> None:
    if not passed:
        _logger.warning("check failed: %s/%s (residual %.3e) %s", suite, name, residual, detail)
    results.append(Report.CheckResult(suite, name, passed, residual, detail))


def suite_ordering(rng: numpy.random.Generator, trials: int = Constants.ORDERING_TRIALS) -> typing.List[Report.CheckResult]:
    results: typing.List[Report.CheckResult] = list()
    chain_slack = math.inf
    one_shot_slack = math.inf
    a1, a2, a3, a4 = Constants.ORDERING_ALPHAS
    for _ in range(trials):
        d = int(rng.integers(2, 5))
        rho, sigma = Matrix.random_density(d, rng), Matrix.random_density(d, rng)
        chain = [States.dmin(rho, sigma), States.petz_renyi(rho, sigma, a1), States.petz_renyi(rho, sigma, a2), States.umegaki(rho, sigma),
                 States.sandwiched(rho, sigma, a3), States.sandwiched(rho, sigma, a4), States.dmax(rho, sigma)]
        chain_slack = min(chain_slack, min(b - a for a, b in zip(chain, chain[1:])))
        value, _ = States.hypothesis_testing(rho, sigma, Constants.ONE_SHOT_EPSILON)
        lower, upper = States.one_shot_bounds(rho, sigma, Constants.ONE_SHOT_EPSILON)
        one_shot_slack = min(one_shot_slack, value - lower, upper - value)
    _check(results, "ordering", "divergence chain", chain_slack, chain_slack >= -1e-9)
    _check(results, "ordering", "one-shot sandwich", one_shot_slack, one_shot_slack >= -1e-9)
    return results


def _collapse_identity(results: typing.List[Report.CheckResult], q: Channels.BlockIdempotent, cfg: Oracle.OptimizerConfig, label: str) -> None:
    formula = ClosedForm.d_idq_cb(q)
    identity = Channels.BlockIdempotent.identity(q.total_dim)
    choi_gap = abs(Oracle.choi_dmax_cb(identity, q) - formula)
    _check(results, "collapse", "{} choi".format(label), choi_gap, choi_gap <= 1e-8)
    seed = ClosedForm.optimal_vector_idq(q, cb=True)
    for name in ("dmin", "umegaki", "dmax"):
        found = Oracle.maximize_channel_divergence(States.DivergenceKind(name), identity, q, q.total_dim, cfg, [seed])
        gap = abs(found.value_bits - formula)
        _check(results, "collapse", "{} {}".format(label, name), gap, gap <= 1e-6)


def _collapse_common(results: typing.List[Report.CheckResult], t: Channels.ThreeLayer, label: str) -> None:
    formula, _ = ClosedForm.d_pq_common_cb(t)
    gap = abs(Oracle.choi_dmax_cb(t.p_channel(), t.q_channel()) - formula)
    _check(results, "collapse", "{} choi".format(label), gap, gap <= 1e-8)


def _sample_block_idempotent(rng: numpy.random.Generator, max_dim: int) -> Channels.BlockIdempotent:
    while True:
        q = Channels.random_block_idempotent(rng, max_blocks=3, max_d_a=3, max_d_b=3)
        if q.total_dim <= max_dim:
            return q


def _sample_three_layer(rng: numpy.random.Generator, max_dim: int, max_l: int = 2) -> Channels.ThreeLayer:
    while True:
        t = Channels.random_three_layer(rng, max_k=2, max_l=max_l, max_dim=2)
        if t.total_dim <= max_dim:
            return t


def suite_collapse(rng: numpy.random.Generator, cfg: Oracle.OptimizerConfig, trials: int = Constants.COLLAPSE_TRIALS,
                   channels: typing.Optional[typing.Tuple[Channels.ChannelLike, Channels.ChannelLike]] = None) -> typing.List[Report.CheckResult]:
    results: typing.List[Report.CheckResult] = list()
    if channels is not None:
        p, q = channels
        if _is_identity(p):
            _collapse_identity(results, ClosedForm.as_block_idempotent(q), cfg, "input")
        else:
            t = Channels.three_layer_decompose(p, q, rng)
            if not t.common_invariant:
                raise Validator.ValidationError("collapse suite needs a common full-rank invariant state for P and Q")
            _collapse_common(results, t, "input")
        return results
    # up to three blocks with d_A, d_B <= 3; total dimension capped for the sphere ascent
    for trial in range(trials):
        _collapse_identity(results, _sample_block_idempotent(rng, Constants.COLLAPSE_MAX_DIM), cfg, "id vs Q #{}".format(trial))
        _collapse_common(results, _sample_three_layer(rng, Constants.COLLAPSE_MAX_DIM, max_l=3), "P vs Q #{}".format(trial))
    return results


def _additivity_identity(results: typing.List[Report.CheckResult], q: Channels.BlockIdempotent, label: str) -> None:
    single = ClosedForm.d_idq_cb(q)
    squared = Channels.tensor_power(q, 2)
    gap = abs(ClosedForm.d_idq_cb(squared) - 2 * single)
    _check(results, "additivity", "{} formula".format(label), gap, gap <= 1e-8)
    identity = Channels.BlockIdempotent.identity(squared.total_dim)
    gap = abs(Oracle.choi_dmax_cb(identity, squared) - 2 * single)
    _check(results, "additivity", "{} choi".format(label), gap, gap <= 1e-8)


def _additivity_common(results: typing.List[Report.CheckResult], t: Channels.ThreeLayer, label: str) -> None:
    if not t.common_invariant:
        raise Validator.ValidationError("additivity suite needs a common full-rank invariant state for P and Q")
    single, _ = ClosedForm.d_pq_common_cb(t)
    gap = abs(ClosedForm.d_pq_common_cb(t.tensor(t))[0] - 2 * single)
    _check(results, "additivity", "{} formula".format(label), gap, gap <= 1e-8)
    p = Channels.as_superoperator(t.p_channel())
    q = Channels.as_superoperator(t.q_channel())
    gap = abs(Oracle.choi_dmax_cb(p.kron(p), q.kron(q)) - 2 * single)
    _check(results, "additivity", "{} choi".format(label), gap, gap <= 1e-8)


def suite_additivity(rng: numpy.random.Generator, trials: int = Constants.ADDITIVITY_TRIALS,
                     channels: typing.Optional[typing.Tuple[Channels.ChannelLike, Channels.ChannelLike]] = None) -> typing.List[Report.CheckResult]:
    """Two-copy values against twice the single-copy closed form.

    The formula on the product instance is checked, and so is the Choi max-divergence of the
    product channels, which does not go through the block structure.
    """
    results: typing.List[Report.CheckResult] = list()
    if channels is not None:
        p, q = channels
        if _is_identity(p):
            _additivity_identity(results, ClosedForm.as_block_idempotent(q), "id vs Q^2 input")
        else:
            _additivity_common(results, Channels.three_layer_decompose(p, q, rng), "P^2 vs Q^2 input")
        return results
    for trial in range(trials):
        _additivity_identity(results, _sample_block_idempotent(rng, Constants.ADDITIVITY_MAX_DIM), "id vs Q^2 #{}".format(trial))
        _additivity_common(results, _sample_three_layer(rng, Constants.ADDITIVITY_MAX_DIM), "P^2 vs Q^2 #{}".format(trial))
    return results


def _infinite_pair(rng: numpy.random.Generator, trial: int) -> typing.Tuple[Channels.BlockIdempotent, Channels.BlockIdempotent]:
    d = 2 + (trial // 3) % 3
    family = trial % 3
    if family == 0:
        return Channels.BlockIdempotent.dephasing(d, Matrix.random_unitary(d, rng)), Channels.BlockIdempotent.identity(d)
    if family == 1:
        p = Channels.BlockIdempotent.dephasing(d, Matrix.random_unitary(d, rng))
    else:
        p = Channels.BlockIdempotent([Channels.Block(1, d, Matrix.random_density(d, rng))])
    return p, Channels.BlockIdempotent.dephasing(d, Matrix.random_unitary(d, rng))


def _infinite_check(results: typing.List[Report.CheckResult], p: Channels.ChannelLike, q: Channels.ChannelLike, label: str) -> None:
    if Channels.inclusion_holds(p, q):
        raise Validator.ValidationError("infinite suite needs a pair whose fixed-point inclusion fails")
    witness = ClosedForm.infinite_divergence_witness(p, q)
    if witness is None:
        _check(results, "infinite", "{} witness".format(label), math.inf, False, "no rank witness found")
        return
    p_out = Channels.apply(p, witness)
    q_out = Channels.apply(q, witness)
    rank_gap = Matrix.rank(p_out.matrix) - Matrix.rank(q_out.matrix)
    _check(results, "infinite", "{} rank".format(label), float(rank_gap), rank_gap > 0)
    value = States.umegaki(p_out, q_out)
    _check(results, "infinite", "{} umegaki".format(label), value, value == math.inf)


def suite_infinite(rng: numpy.random.Generator, trials: int = Constants.INFINITE_TRIALS,
                   channels: typing.Optional[typing.Tuple[Channels.ChannelLike, Channels.ChannelLike]] = None) -> typing.List[Report.CheckResult]:
    """Pairs whose fixed-point inclusion fails have a witness state separating them perfectly."""
    results: typing.List[Report.CheckResult] = list()
    if channels is not None:
        _infinite_check(results, channels[0], channels[1], "input")
        return results
    for trial in range(trials):
        p, q = _infinite_pair(rng, trial)
        _infinite_check(results, p, q, "#{}".format(trial))
    return results


def suite_pinching(rng: numpy.random.Generator, cfg: Oracle.OptimizerConfig, trials: int = Constants.PINCHING_TRIALS) -> typing.List[Report.CheckResult]:
    results: typing.List[Report.CheckResult] = list()
    worst = 0.0
    for _ in range(trials):
        count = int(rng.integers(1, 4))
        dims = [(int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(count)]
        total = sum(a * b for a, b in dims)
        index = ClosedForm.pimsner_popa(Channels.BlockIdempotent.conditional_expectation(dims, Matrix.random_unitary(total, rng)))
        expected = sum(min(a, b) * b for a, b in dims)
        expected_cb = sum(b * b for _, b in dims)
        worst = max(worst, abs(index.linear - expected), abs(index.linear_cb - expected_cb))
    _check(results, "pinching", "trace-preserving index formulas", worst, worst <= 1e-8)
    for trial in range(Constants.CERTIFICATE_TRIALS):
        q = Channels.random_block_idempotent(rng, max_blocks=2, max_d_a=2, max_d_b=2)
        identity = Channels.BlockIdempotent.identity(q.total_dim)
        factor = 2.0 ** ClosedForm.d_idq_cb(q)
        holds, smallest = Channels.cp_order_holds(identity, q, factor)
        tight, _ = Channels.cp_order_holds(identity, q, factor - 1e-3)
        _check(results, "pinching", "certificate #{}".format(trial), smallest, holds and not tight)
    for n in (2, 3, 4):
        dephasing = Channels.BlockIdempotent.dephasing(n)
        found = Oracle.maximize_channel_divergence(States.DivergenceKind("dmax"), Channels.BlockIdempotent.identity(n), dephasing, 1, cfg)
        brute = 2.0 ** found.value_bits
        gap = max(abs(brute - n), abs(ClosedForm.pimsner_popa(dephasing).linear - n))
        _check(results, "pinching", "dephasing on M_{}".format(n), gap, gap <= 1e-4)
    return results


def suite_simplex(rng: numpy.random.Generator, trials: int = Constants.SIMPLEX_TRIALS,
                  resolution: int = Constants.SIMPLEX_RESOLUTION) -> typing.List[Report.CheckResult]:
    results: typing.List[Report.CheckResult] = list()
    for kind in ClosedForm.SIMPLEX_KINDS:
        worst = 0.0
        for _ in range(trials):
            n = int(rng.integers(2, 5))
            c = rng.uniform(-2.0, 2.0, size=n) if kind == "softmax" else rng.uniform(0.2, 3.0, size=n)
            alpha = float(rng.uniform(1.5, 4.0)) if kind == "hoelder" else None
            closed, _ = ClosedForm.simplex_optimum(kind, c.tolist(), alpha)
            grid = Oracle.grid_simplex_optimum(kind, c.tolist(), resolution, alpha)
            worst = max(worst, abs(grid - closed))
        _check(results, "simplex", kind, worst, worst <= Constants.SIMPLEX_TOLERANCE)
    return results


def gns_mixture() -> typing.Tuple[Channels.Superoperator, Channels.Superoperator, States.DensityMatrix]:
    """Φ = s·id + (1 − s)·Δ and Ψ = Δ on a qubit with τ = I/2."""
    dephasing = Channels.BlockIdempotent.dephasing(2).to_superoperator()
    phi = Channels.Superoperator.identity(2).mix(dephasing, 1.0 - Constants.GNS_MIXTURE_WEIGHT)
    return phi, dephasing, States.DensityMatrix.maximally_mixed(2)


def suite_gns() -> typing.List[Report.CheckResult]:
    results: typing.List[Report.CheckResult] = list()
    phi, psi, tau = gns_mixture()
    previous_width = math.inf
    for k in Constants.GNS_SUITE_KS:
        bounds = GNS.iterate_bounds(phi, psi, tau, k, middle=True)
        middle = typing.cast(float, bounds.middle_bits)
        inside = min(middle - bounds.lower_bits, bounds.upper_bits - middle)
        _check(results, "gns", "bracket 2k={}".format(2 * k), inside, bounds.valid and inside >= -1e-9)
        width = bounds.upper_bits - bounds.lower_bits
        limit = math.log2(1 + 2.0 ** (-2 * k))
        _check(results, "gns", "width 2k={}".format(2 * k), width - limit, width <= limit + 1e-9 and width < previous_width)
        previous_width = width
        upper, lower = GNS.cp_mixing_residuals(phi, bounds.phi)
        _check(results, "gns", "cp mixing 2k={}".format(2 * k), min(upper, lower), min(upper, lower) >= -1e-8)
    return results


def cmd_verify(config: RunConfig) -> CommandResult:
    suite = Validator.ChoiceValidator("suite", SUITES).validate(config.suite or str())
    rng = numpy.random.default_rng(config.seed)
    channels = None
    if config.inputs:
        _require_inputs(config, 2, "P Q")
        channels = (load_channel(config.inputs[0], rng), load_channel(config.inputs[1], rng))
    cfg = config.optimizer()
    if suite == "ordering":
        results = suite_ordering(rng)
    elif suite == "collapse":
        results = suite_collapse(rng, cfg, channels=channels)
    elif suite == "additivity":
        results = suite_additivity(rng, channels=channels)
    elif suite == "infinite":
        results = suite_infinite(rng, channels=channels)
    elif suite == "pinching":
        results = suite_pinching(rng, cfg)
    elif suite == "simplex":
        results = suite_simplex(rng)
    else:
        results = suite_gns()
    failed = [r for r in results if not r.passed]
    body = {"suite": suite, "passed": not failed, "failures": len(failed), "checks": [r.to_dict() for r in results]}
    return CommandResult(body, [r.to_dict() for r in results], EXIT_FAILED if failed else EXIT_OK)


def counterexample_three_layer() -> Channels.ThreeLayer:
    return Channels.ThreeLayer(Constants.COUNTEREXAMPLE_A, Constants.COUNTEREXAMPLE_B, Constants.COUNTEREXAMPLE_C,
                               Constants.counterexample_delta(), Constants.counterexample_omega())


def counterexample_input(t: Channels.ThreeLayer, weights: typing.Sequence[float], q: typing.Sequence[float]) -> Matrix.ComplexArray:
    """Σ_l √p_l (√q_l|0⟩ + √(1−q_l)|1⟩)_{B_l} ⊗ |0⟩_C as a vector on the full space."""
    v = numpy.zeros(t.total_dim, dtype=numpy.complex128)
    for l, (p_l, q_l) in enumerate(zip(weights, q)):
        columns = t.piece_isometry(0, l)
        c = t.c[0]
        v += math.sqrt(p_l) * (math.sqrt(q_l) * columns[:, 0] + math.sqrt(1.0 - q_l) * columns[:, c])
    return typing.cast(Matrix.ComplexArray, v)


def _input_value(kind: States.DivergenceKind, p: Channels.ChannelLike, q: Channels.ChannelLike, v: Matrix.ComplexArray) -> float:
    rho = Matrix.projector(v)
    return kind.evaluate(p.apply(rho), q.apply(rho))


def cmd_counterexample(config: RunConfig) -> CommandResult:
    t = counterexample_three_layer()
    p, q = t.p_channel(), t.q_channel()
    alpha = Constants.COUNTEREXAMPLE_ALPHA
    kind = States.DivergenceKind("sandwiched", alpha)
    grid = numpy.linspace(0.0, 1.0, 1001)

    block_values = numpy.full((t.K, t.L), numpy.nan)
    q_star = list()
    for l in range(t.L):
        weights = [1.0 if ll == l else 0.0 for ll in range(t.L)]
        scan = [_input_value(kind, p, q, counterexample_input(t, weights, [x] * t.L)) for x in grid]
        best = int(numpy.argmax(scan))
        q_star.append(float(grid[best]))
        block_values[0, l] = scan[best]
    bound = ClosedForm.general_upper_bound(t, alpha, block_values)

    scan = [_input_value(kind, p, q, counterexample_input(t, [x, 1.0 - x], q_star)) for x in grid]
    p_star = float(grid[int(numpy.argmax(scan))])
    optimal = counterexample_input(t, [p_star, 1.0 - p_star], q_star)
    value = _input_value(kind, p, q, optimal)
    gap = bound.value_bits - value

    extra: JsonDict = {
        "bound_bits": bound.value_bits,
        "gap_bits": gap,
        "strict_gap": gap > 0,
        "exact": bound.exact,
        "p_star": p_star,
        "q_star": q_star,
        "blocks": Report.block_rows(t, block_values),
        "block_linear": [2.0 ** x for x in block_values[0]],
    }
    oracle_bits = None
    if config.oracle:
        cfg = config.optimizer()
        seeds = Oracle.structured_seeds([t.piece_indices(k, l).size for k, l in t.pieces()], 1)
        oracle_bits = Oracle.maximize_channel_divergence(kind, p, q, 1, cfg, seeds).value_bits
        extra["oracle_blocks"] = Report.block_rows(t, Oracle.block_divergence_table(t, kind, False, cfg))
    report = Report.DivergenceReport("D~_2(P||Q)", value, alpha, States.DensityMatrix.from_vector(optimal), oracle_bits, extra=extra)
    return CommandResult(report.to_dict(), extra["blocks"])


def _spectral_summary(spectral: GNS.SpectralData) -> JsonDict:
    return {"mu": spectral.mu, "gns_symmetric": spectral.gns_symmetric, "gns_residual": Report.extended(spectral.gns_residual),
            "eigenvalues_re": spectral.eigenvalues.real.tolist(), "eigenvalues_im": spectral.eigenvalues.imag.tolist()}


def cmd_gns(config: RunConfig) -> CommandResult:
    _require_inputs(config, 3, "Phi Psi tau")
    rng = numpy.random.default_rng(config.seed)
    phi, psi = load_channel(config.inputs[0], rng), load_channel(config.inputs[1], rng)
    tau = load_state(config.inputs[2])
    bounds = GNS.iterate_bounds(phi, psi, tau, config.k, middle=config.oracle)
    rates = _rates(bounds.upper_bits)
    body: JsonDict = {
        "spectral": {"phi": _spectral_summary(GNS.spectral_decompose(phi, tau=tau)), "psi": _spectral_summary(GNS.spectral_decompose(psi, tau=tau))},
        "k": bounds.k,
        "mu": [bounds.phi.mu, bounds.psi.mu],
        "threshold_2k": Report.extended(bounds.threshold_2k),
        "eps_phi": bounds.phi.epsilon,
        "eps_psi": bounds.psi.epsilon,
        "limit_bits": Report.extended(bounds.limit_bits),
        "lower_bits": Report.extended(bounds.lower_bits),
        "upper_bits": Report.extended(bounds.upper_bits),
        "middle_bits": Report.extended(bounds.middle_bits),
        "valid": bounds.valid,
        "inclusion": bounds.inclusion,
        "exponent_brackets": {
            "stein": [Report.extended(x) for x in bounds.stein],
            "chernoff": [Report.extended(x) for x in bounds.chernoff],
            "strong_converse": [{"r": r, "lower": Report.extended(lo), "upper": Report.extended(hi)} for r, (lo, hi) in ((r, bounds.strong_converse(r)) for r in rates)],
        },
    }
    row = {"k": bounds.k, "lower_bits": body["lower_bits"], "upper_bits": body["upper_bits"], "middle_bits": body["middle_bits"], "valid": bounds.valid}
    return CommandResult(body, [row])


COMMANDS: typing.Mapping[str, typing.Callable[[RunConfig], CommandResult]] = {
    "divergence": cmd_divergence,
    "formula": cmd_formula,
    "verify": cmd_verify,
    "counterexample": cmd_counterexample,
    "gns": cmd_gns,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (overridden by ${})".format(SEED_VARIABLE))
    common.add_argument("--restarts", type=int, default=16, help="optimizer restarts")
    common.add_argument("--max-iters", type=int, default=500, help="optimizer iterations per restart")
    common.add_argument("--workers", type=int, default=1, help="parallel optimizer workers")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="idemchan", description="Discrimination of idempotent quantum channels.")
    commands = parser.add_subparsers(dest="command", required=True)

    divergence = commands.add_parser("divergence", parents=[common], help="divergence of two states")
    divergence.add_argument("inputs", nargs=2, metavar="STATE")
    divergence.add_argument("--kind", choices=STATE_KINDS, default="umegaki")
    divergence.add_argument("--alpha", type=float)
    divergence.add_argument("--epsilon", type=float)

    formula = commands.add_parser("formula", parents=[common], help="closed-form divergence of two idempotent channels")
    formula.add_argument("inputs", nargs=2, metavar="CHANNEL")
    formula.add_argument("--alpha", type=float)
    formula.add_argument("--cb", action="store_true", help="block bound for the cb divergence")
    formula.add_argument("--ref-dim", type=int, dest="ref_dim")

    verify = commands.add_parser("verify", parents=[common], help="run a verification suite")
    verify.add_argument("inputs", nargs="*", metavar="CHANNEL")
    verify.add_argument("--suite", choices=SUITES, required=True)

    counterexample = commands.add_parser("counterexample", parents=[common], help="reproduce the two-block counterexample")
    counterexample.add_argument("--oracle", action="store_true", help="add optimizer cross-checks")

    gns = commands.add_parser("gns", parents=[common], help="bracket for even iterates of GNS-symmetric channels")
    gns.add_argument("inputs", nargs=3, metavar="FILE")
    gns.add_argument("--k", type=int, default=2, help="iterate power 2k")
    gns.add_argument("--oracle", action="store_true", help="attach the exact cb max-divergence of the iterates")
    return parser


def config_from_args(args: argparse.Namespace, environ: typing.Mapping[str, str]) -> RunConfig:
    seed = args.seed
    if SEED_VARIABLE in environ:
        try:
            seed = int(environ[SEED_VARIABLE])
        except ValueError:
            raise Validator.ValidationError("{} must be an integer, got {!r}".format(SEED_VARIABLE, environ[SEED_VARIABLE]))
    return RunConfig(command=args.command, inputs=tuple(getattr(args, "inputs", ())), seed=seed, restarts=args.restarts,
                     max_iters=args.max_iters, workers=args.workers, kind=getattr(args, "kind", "umegaki"),
                     alpha=getattr(args, "alpha", None), epsilon=getattr(args, "epsilon", None), ref_dim=getattr(args, "ref_dim", None),
                     k=getattr(args, "k", 2), suite=getattr(args, "suite", None), cb=getattr(args, "cb", False),
                     oracle=getattr(args, "oracle", False), output=args.out, format=args.format)


def render(config: RunConfig, result: CommandResult, wall_clock_s: float) -> str:
    header = Report.header(config.seed, config.to_dict(), wall_clock_s)
    if config.format == "csv":
        lines = ["# {}: {}".format(key, header[key]) for key in sorted(header)]
        return "\n".join(lines) + "\n" + Report.render_csv(result.rows)
    return Report.render_json(header, result.body) + "\n"


def run(config: RunConfig) -> typing.Tuple[int, str]:
    """Execute one command; returns the exit code and the rendered report (or diagnostic)."""
    start = time.perf_counter()
    try:
        result = COMMANDS[config.command](config)
    except json.JSONDecodeError as e:
        return EXIT_INVALID, "error: malformed JSON at line {} column {}: {}".format(e.lineno, e.colno, e.msg)
    except Validator.ValidationError as e:
        return EXIT_INVALID, "error: {}".format(e)
    except OSError as e:
        return EXIT_INVALID, "error: cannot read input: {}".format(e)
    _logger.info("%s finished with exit code %d (seed %d)", config.command, result.exit_code, config.seed)
    return result.exit_code, render(config, result, time.perf_counter() - start)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = config_from_args(args, os.environ)
    except Validator.ValidationError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_INVALID
    _logger.info("%s starting (seed %d, config %s)", config.command, config.seed, Report.config_hash(config.to_dict()))
    code, text = run(config)
    if code == EXIT_INVALID:
        print(text, file=sys.stderr)
        return code
    if config.output:
        pathlib.Path(config.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code
