"""
Independent verification machinery: restart maximization of channel divergences over pure
inputs, the exact Choi max-divergence, simplex grid searches, diamond-norm lower bounds,
finite-n error probabilities and rank checks.

Optimizer values are certified lower bounds on the supremum they estimate.
"""

from __future__ import annotations

# standard libraries
import concurrent.futures
import dataclasses
import itertools
import logging
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.optimize

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Matrix
from nion.idempotent import States
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

SMOOTHING_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 64
    max_iters: int = 2000
    step_tolerance: float = 1e-9
    value_tolerance: float = 1e-8
    seed: int = 0
    fd_step: float = 1e-6
    workers: int = 1

    def __post_init__(self) -> None:
        Validator.IntegerRangeValidator("restarts", 0).validate(self.restarts)
        Validator.IntegerRangeValidator("max_iters", 1).validate(self.max_iters)
        Validator.IntegerRangeValidator("workers", 1).validate(self.workers)
        Validator.IntegerRangeValidator("seed", 0).validate(self.seed)
        for name in ("step_tolerance", "value_tolerance", "fd_step"):
            Validator.RealRangeValidator(name, 0.0, None, include_min=False).validate(getattr(self, name))

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class OracleResult:
    value_bits: float
    state: States.DensityMatrix
    achieved_by: str
    seed: int


class _Infinite(Exception):
    def __init__(self, x: Matrix.RealArray) -> None:
        super().__init__()
        self.x = x


def _to_complex(x: Matrix.RealArray) -> Matrix.ComplexArray:
    n = x.size // 2
    v = x[:n] + 1j * x[n:]
    norm = numpy.linalg.norm(v)
    return typing.cast(Matrix.ComplexArray, v / norm if norm > 0 else v)


def _to_real(v: Matrix.ComplexArray) -> Matrix.RealArray:
    return typing.cast(Matrix.RealArray, numpy.concatenate([v.real, v.imag]))


@dataclasses.dataclass(frozen=True)
class _Outcome:
    value: float
    x: Matrix.RealArray
    seeded: bool


def _run_start(objective: typing.Callable[[Matrix.RealArray], float], x0: Matrix.RealArray, cfg: OptimizerConfig, seeded: bool) -> _Outcome:
    start_value = objective(x0)
    result = scipy.optimize.minimize(lambda x: -objective(x), x0, method="L-BFGS-B",
                                     options={"maxiter": cfg.max_iters, "ftol": cfg.value_tolerance, "gtol": cfg.step_tolerance, "eps": cfg.fd_step})
    end_value = -float(result.fun)
    if start_value >= end_value:
        return _Outcome(start_value, x0, seeded)
    return _Outcome(end_value, numpy.asarray(result.x), seeded)


def _maximize(objective: typing.Callable[[Matrix.RealArray], float], n: int, cfg: OptimizerConfig,
              seeds: typing.Sequence[Matrix.ComplexArray]) -> _Outcome:
    """Best outcome over seeded starts and cfg.restarts uniform-sphere starts.

    Each random restart owns a generator spawned from cfg.seed, so results do not depend on
    worker scheduling. Ties keep the earliest start.
    """
    starts: typing.List[typing.Tuple[Matrix.RealArray, bool]] = [(_to_real(numpy.asarray(s, dtype=numpy.complex128).reshape(-1)), True) for s in seeds]
    for child in numpy.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = numpy.random.default_rng(child)
        starts.append((rng.standard_normal(2 * n), False))
    if not starts:
        raise Validator.ValidationError("optimizer needs at least one start (restarts = 0 and no seeds)")
    for x, _ in starts:
        if x.size != 2 * n:
            raise Validator.ValidationError("seed has dimension {}, expected {}".format(x.size // 2, n))
    if cfg.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            futures = [executor.submit(_run_start, objective, x, cfg, seeded) for x, seeded in starts]
            outcomes = [future.result() for future in futures]
    else:
        outcomes = [_run_start(objective, x, cfg, seeded) for x, seeded in starts]
    best = outcomes[0]
    for index, outcome in enumerate(outcomes[1:], 1):
        _logger.debug("start %d reached %.12g", index, outcome.value)
        if outcome.value > best.value:
            best = outcome
    return best


def _check_pair(phi: Channels.ChannelLike, psi: Channels.ChannelLike) -> int:
    if phi.dim != psi.dim:
        raise Validator.ValidationError("channels act on dimensions {} and {}".format(phi.dim, psi.dim))
    return phi.dim


def maximize_channel_divergence(kind: States.DivergenceKind, phi: Channels.ChannelLike, psi: Channels.ChannelLike, ref_dim: int,
                                cfg: typing.Optional[OptimizerConfig] = None, seeds: typing.Sequence[Matrix.ComplexArray] = (),
                                input_isometry: typing.Optional[Matrix.MatrixLike] = None) -> OracleResult:
    """sup over pure ψ on C^{ref_dim} ⊗ C^m of D(Φ(ψ) ‖ Ψ(ψ)), a lower bound from restarts.

    With an input isometry V (d × m) the inputs are restricted to its range. Seeds are vectors on
    C^{ref_dim} ⊗ C^m. Kinds that blow up near support boundaries are optimized with a small
    floor added to the second argument; the reported value is unsmoothed.
    """
    cfg = cfg or OptimizerConfig()
    d = _check_pair(phi, psi)
    ref_dim = Validator.IntegerRangeValidator("ref_dim", 1).validate(ref_dim)
    v_in = numpy.eye(d, dtype=numpy.complex128) if input_isometry is None else Matrix.as_matrix(input_isometry, square=False)
    if v_in.shape[0] != d:
        raise Validator.ValidationError("input isometry has {} rows, channel dimension is {}".format(v_in.shape[0], d))
    m = v_in.shape[1]
    n = ref_dim * m
    floor = SMOOTHING_FLOOR * numpy.eye(ref_dim * d) if kind.needs_support else None

    def embed(x: Matrix.RealArray) -> Matrix.ComplexArray:
        return typing.cast(Matrix.ComplexArray, (_to_complex(x).reshape(ref_dim, m) @ v_in.T).reshape(-1))

    def outputs(x: Matrix.RealArray) -> typing.Tuple[Matrix.ComplexArray, Matrix.ComplexArray]:
        rho = Matrix.projector(embed(x))
        return Channels.apply_with_reference(phi, rho, ref_dim), Channels.apply_with_reference(psi, rho, ref_dim)

    def exact(x: Matrix.RealArray) -> float:
        return kind.evaluate(*outputs(x))

    def objective(x: Matrix.RealArray) -> float:
        out_phi, out_psi = outputs(x)
        if floor is not None:
            out_psi = out_psi + floor
        value = kind.evaluate(out_phi, out_psi)
        if math.isinf(value):
            raise _Infinite(x)
        return value

    starts = list(seeds)
    if ref_dim == m:
        starts.append(Matrix.maximally_entangled_vector(m))
    starts.append(numpy.ones(n, dtype=numpy.complex128) / math.sqrt(n))
    try:
        for seed in starts:
            x = _to_real(numpy.asarray(seed, dtype=numpy.complex128).reshape(-1))
            if x.size == 2 * n and math.isinf(exact(x)):
                raise _Infinite(x)
        best = _maximize(objective, n, cfg, starts)
    except _Infinite as e:
        _logger.info("divergence is infinite at an explored input")
        return OracleResult(math.inf, States.DensityMatrix.from_vector(embed(e.x)), "seeded", cfg.seed)
    value = exact(best.x)
    return OracleResult(value, States.DensityMatrix.from_vector(embed(best.x)), "seeded" if best.seeded else "random", cfg.seed)


def choi_dmax_cb(phi: Channels.ChannelLike, psi: Channels.ChannelLike) -> float:
    """D^cb_max(Φ ‖ Ψ) as the max-divergence of the normalized Choi matrices."""
    d = _check_pair(phi, psi)
    return States.dmax(Channels.choi(phi) / d, Channels.choi(psi) / d)


def grid_simplex_optimum(kind: str, c: typing.Sequence[float], resolution: int = 200, alpha: typing.Optional[float] = None) -> float:
    """Exhaustive search of the simplex grid with spacing 1/resolution (harmonic is minimized)."""
    kind = Validator.ChoiceValidator("simplex kind", ClosedForm.SIMPLEX_KINDS).validate(kind)
    cs = numpy.asarray(c, dtype=float)
    Validator.IntegerRangeValidator("coefficient count", 1, 4).validate(cs.size)
    resolution = Validator.IntegerRangeValidator("resolution", 1, 200).validate(resolution)
    if kind == "hoelder":
        Validator.alpha_above_one_validator.validate(typing.cast(float, alpha))
    n = cs.size
    if n == 1:
        return float(ClosedForm.simplex_objective(kind, cs, numpy.ones((1, 1)), alpha)[0])
    best = math.inf if kind == "harmonic" else -math.inf
    for first in range(resolution + 1):
        remaining = resolution - first
        free = [numpy.arange(remaining + 1)] * (n - 2)
        grids = numpy.meshgrid(*free, indexing="ij") if free else []
        rest = numpy.stack([g.reshape(-1) for g in grids], axis=1) if grids else numpy.zeros((1, 0), dtype=int)
        rest = rest[rest.sum(axis=1) <= remaining]
        last = remaining - rest.sum(axis=1)
        points = numpy.column_stack([numpy.full(rest.shape[0], first), rest, last]) / resolution
        values = ClosedForm.simplex_objective(kind, cs, points, alpha)
        best = min(best, float(numpy.min(values))) if kind == "harmonic" else max(best, float(numpy.max(values)))
    return best


def diamond_lower(phi: Channels.ChannelLike, psi: Channels.ChannelLike, cfg: typing.Optional[OptimizerConfig] = None,
                  seeds: typing.Sequence[Matrix.ComplexArray] = ()) -> float:
    """max over pure ψ on C^d ⊗ C^d of ‖(id ⊗ (Φ − Ψ))(ψ)‖₁, a lower bound on the diamond norm."""
    cfg = cfg or OptimizerConfig()
    d = _check_pair(phi, psi)
    difference = Channels.Superoperator(Channels.as_superoperator(phi).transfer - Channels.as_superoperator(psi).transfer)

    def objective(x: Matrix.RealArray) -> float:
        rho = Matrix.projector(_to_complex(x))
        return Matrix.trace_norm(Channels.apply_with_reference(difference, rho, d))

    best = _maximize(objective, d * d, cfg, list(seeds) + [Matrix.maximally_entangled_vector(d)])
    return min(2.0, best.value)


def _tensor_power(ch: Channels.ChannelLike, n: int) -> Channels.ChannelLike:
    if isinstance(ch, Channels.BlockIdempotent):
        return Channels.tensor_power(ch, n)
    result = ch
    for _ in range(n - 1):
        result = result.kron(ch)
    return result


@dataclasses.dataclass(frozen=True)
class FiniteNReport:
    """Upper bound on the parallel n-copy error probability with its exponents."""
    n: int
    p_err: float
    exponent: float
    prior_free_exponent: float


def finite_n_perr(phi: Channels.ChannelLike, psi: Channels.ChannelLike, n: int, cfg: typing.Optional[OptimizerConfig] = None) -> FiniteNReport:
    n = Validator.IntegerRangeValidator("n", 1, 2).validate(n)
    _check_pair(phi, psi)
    Matrix.check_dimension((phi.dim ** n) ** 2, "n-copy transfer dimension")
    distance = diamond_lower(_tensor_power(phi, n), _tensor_power(psi, n), cfg)
    p_err = max(0.0, (1.0 - 0.5 * distance) / 2.0)
    exponent = -math.log2(p_err) / n if p_err > 0 else math.inf
    prior_free = -math.log2(2 * p_err) / n if p_err > 0 else math.inf
    return FiniteNReport(n, p_err, exponent, prior_free)


def rank_nondecreasing_check(ch: Channels.ChannelLike, trials: int, rng: typing.Optional[numpy.random.Generator] = None) -> bool:
    """Whether rank ch(X) ≥ rank X on random positive semidefinite X of random rank."""
    trials = Validator.IntegerRangeValidator("trials", 1).validate(trials)
    rng = rng if rng is not None else numpy.random.default_rng(0)
    d = ch.dim
    image = ch.apply(numpy.eye(d, dtype=numpy.complex128))
    if float(numpy.max(numpy.abs(image - numpy.eye(d)))) > 1e-9:
        raise Validator.ValidationError("channel is not unital (residual {:.3e})".format(float(numpy.max(numpy.abs(image - numpy.eye(d))))))
    for _ in range(trials):
        x = Matrix.random_density(d, rng, int(rng.integers(1, d + 1)))
        if Matrix.rank(ch.apply(x)) < Matrix.rank(x):
            return False
    return True


def block_divergence(t: Channels.ThreeLayer, k: int, l: int, kind: States.DivergenceKind, cb: bool = False,
                     cfg: typing.Optional[OptimizerConfig] = None, seeds: typing.Sequence[Matrix.ComplexArray] = ()) -> OracleResult:
    """Divergence of the channels P and Q of a decomposition restricted to inputs on A_l ⊗ B_{k,l} ⊗ C_k."""
    if t.b[k, l] == 0:
        raise Validator.ValidationError("piece ({}, {}) is empty".format(k, l))
    isometry = t.piece_isometry(k, l)
    ref_dim = isometry.shape[1] if cb else 1
    return maximize_channel_divergence(kind, t.p_channel(), t.q_channel(), ref_dim, cfg, seeds, isometry)


def block_divergence_table(t: Channels.ThreeLayer, kind: States.DivergenceKind, cb: bool = False,
                           cfg: typing.Optional[OptimizerConfig] = None) -> Matrix.RealArray:
    """Oracle values for every nonempty piece; NaN marks empty pieces."""
    values = numpy.full((t.K, t.L), numpy.nan)
    for k, l in t.pieces():
        values[k, l] = block_divergence(t, k, l, kind, cb, cfg).value_bits
    return typing.cast(Matrix.RealArray, values)


def structured_seeds(dims: typing.Sequence[int], ref_dim: int) -> typing.List[Matrix.ComplexArray]:
    """Block-uniform inputs: a uniform superposition over the first basis vector of each block."""
    total = sum(dims)
    seeds = list()
    offsets = list(itertools.accumulate([0] + list(dims)))[:-1]
    v = numpy.zeros((ref_dim, total), dtype=numpy.complex128)
    for r, offset in zip(itertools.cycle(range(ref_dim)), offsets):
        v[r, offset] = 1.0
    seeds.append(v.reshape(-1) / numpy.linalg.norm(v))
    return seeds
