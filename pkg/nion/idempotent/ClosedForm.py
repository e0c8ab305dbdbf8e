"""
Closed-form channel divergences for idempotent channels, their achieving inputs, index constants
and error exponents.

Channel divergences are in bits. Index constants are reported on the linear scale with their
base-2 logarithms alongside.
"""

from __future__ import annotations

# standard libraries
import dataclasses
import logging
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.special

# local libraries
from nion.idempotent import Channels
from nion.idempotent import Matrix
from nion.idempotent import States
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


def as_block_idempotent(q: Channels.ChannelLike) -> Channels.BlockIdempotent:
    return Channels.block_form(q)


def _inverse_eig(omega: Matrix.ComplexArray) -> Matrix.HermitianEig:
    """Eigen-data of ω⁻¹, largest first."""
    e = Matrix.eig_hermitian(omega)
    if e.eigenvalues[-1] <= Matrix.rank_cutoff(e.eigenvalues):
        raise Validator.ValidationError("replacer state is rank-deficient (smallest eigenvalue {:.3e})".format(e.eigenvalues[-1]))
    return Matrix.HermitianEig(1.0 / e.eigenvalues[::-1], e.eigenvectors[:, ::-1])


def _ky_fan_inverse(omega: Matrix.ComplexArray, m: int) -> float:
    return float(numpy.sum(_inverse_eig(omega).eigenvalues[:m]))


def _log2_sum(values: typing.Iterable[float]) -> float:
    total = sum(values)
    return math.log2(total) if total > 0 else -math.inf


def d_idq(q: Channels.ChannelLike) -> float:
    """D(id ‖ Q) = log₂ Σ_l Tr_{min(d_A, d_B)}(ω_l⁻¹)."""
    block = as_block_idempotent(q)
    return _log2_sum(_ky_fan_inverse(b.omega, min(b.d_a, b.d_b)) for b in block.blocks)


def d_idq_cb(q: Channels.ChannelLike) -> float:
    """D^cb(id ‖ Q) = log₂ Σ_l Tr(ω_l⁻¹)."""
    block = as_block_idempotent(q)
    return _log2_sum(_ky_fan_inverse(b.omega, b.d_b) for b in block.blocks)


@dataclasses.dataclass(frozen=True)
class _Piece:
    d_a: int
    d_b: int
    omega: Matrix.ComplexArray
    index: typing.Callable[[int, int], int]


def _schmidt_vector(pieces: typing.Sequence[_Piece], ref_dim: int, size: int) -> Matrix.ComplexArray:
    """Pure input on C^{ref_dim} ⊗ C^{size} (rotated coordinates) that attains log₂ Σ_l Tr_m(ω_l⁻¹).

    Within each piece the B-side Schmidt vectors are the top eigenvectors of ω⁻¹ with weights
    proportional to the eigenvalues; pieces are weighted by their Ky Fan masses.
    """
    psi = numpy.zeros((ref_dim, size), dtype=numpy.complex128)
    masses = list()
    spectra = list()
    for piece in pieces:
        m = min(ref_dim * piece.d_a, piece.d_b)
        e = _inverse_eig(piece.omega)
        if m < piece.d_b and abs(e.eigenvalues[m - 1] - e.eigenvalues[m]) <= TIE_TOLERANCE * e.eigenvalues[0]:
            _logger.warning("Ky Fan tie in inverse replacer spectrum at position %d; lowest index chosen", m)
        masses.append(float(numpy.sum(e.eigenvalues[:m])))
        spectra.append((m, e))
    total = sum(masses)
    for piece, (m, e) in zip(pieces, spectra):
        for i in range(m):
            weight = math.sqrt(e.eigenvalues[i] / total)
            r_index, a_index = divmod(i, piece.d_a)
            for b_index in range(piece.d_b):
                psi[r_index, piece.index(a_index, b_index)] += weight * e.eigenvectors[b_index, i]
    return psi


def _rotate(psi: Matrix.ComplexArray, u: Matrix.ComplexArray) -> Matrix.ComplexArray:
    """(1 ⊗ U)ψ flattened, with ψ given as a (reference, system) array."""
    return typing.cast(Matrix.ComplexArray, (psi @ u.T).reshape(-1))


def optimal_vector_idq(q: Channels.ChannelLike, cb: bool = False) -> Matrix.ComplexArray:
    block = as_block_idempotent(q)
    ref_dim = block.total_dim if cb else 1
    pieces = list()
    for b, offset in zip(block.blocks, block.offsets):
        pieces.append(_Piece(b.d_a, b.d_b, b.omega, lambda a, i, offset=offset, d_b=b.d_b: offset + a * d_b + i))
    return _rotate(_schmidt_vector(pieces, ref_dim, block.total_dim), block.basis_change)


def optimal_input_idq(q: Channels.ChannelLike, cb: bool = False) -> States.DensityMatrix:
    """Pure input attaining D(id ‖ Q), or D^cb(id ‖ Q) with a reference of the input dimension prepended."""
    return States.DensityMatrix.from_vector(optimal_vector_idq(q, cb))


def _require_common(t: Channels.ThreeLayer) -> Matrix.RealArray:
    if not t.common_invariant or t.p is None:
        raise Validator.ValidationError("decomposition lacks p and tau data; no common invariant state was found")
    return t.p


def _k_sums(t: Channels.ThreeLayer, cb: bool) -> typing.List[float]:
    p = _require_common(t)
    sums = list()
    for k in range(t.K):
        total = 0.0
        for l in range(t.L):
            b = int(t.b[k, l])
            if b == 0:
                continue
            m = b if cb else min(t.a[l], b)
            total += _ky_fan_inverse(t.tau(k, l), m) / p[k, l]
        sums.append(total)
    return sums


def d_pq_common(t: Channels.ThreeLayer, cb: bool = False) -> typing.Tuple[float, int]:
    """max_k log₂ Σ_l Tr_m(τ_{k,l}⁻¹)/p_{k,l} with the maximizing block k*; m = min(a_l, b_kl), or b_kl when cb."""
    sums = _k_sums(t, cb)
    kstar = int(numpy.argmax(sums))
    return math.log2(sums[kstar]), kstar


def d_pq_common_cb(t: Channels.ThreeLayer) -> typing.Tuple[float, int]:
    return d_pq_common(t, cb=True)


def block_divergences_common(t: Channels.ThreeLayer, cb: bool = False) -> Matrix.RealArray:
    """Per-piece closed forms log₂(Tr_m(τ_{k,l}⁻¹)/p_{k,l}); NaN marks empty pieces."""
    p = _require_common(t)
    values = numpy.full((t.K, t.L), numpy.nan)
    for k, l in t.pieces():
        b = int(t.b[k, l])
        m = b if cb else min(t.a[l], b)
        values[k, l] = math.log2(_ky_fan_inverse(t.tau(k, l), m) / p[k, l])
    return typing.cast(Matrix.RealArray, values)


def optimal_vector_pq(t: Channels.ThreeLayer, cb: bool = False) -> Matrix.ComplexArray:
    """Pure input ψ* ⊗ |0⟩_C on block k*; P maps it to the achieving state ψ* ⊗ δ_{k*}."""
    p = _require_common(t)
    _, kstar = d_pq_common(t, cb)
    c = t.c[kstar]
    ref_dim = t.total_dim if cb else 1
    pieces = list()
    for l in range(t.L):
        b = int(t.b[kstar, l])
        if b == 0:
            continue
        base, offset = t.block_offset(kstar), t.piece_offset(kstar, l)
        pieces.append(_Piece(t.a[l], b, p[kstar, l] * t.tau(kstar, l), lambda a, i, base=base, offset=offset, b=b: base + (offset + a * b + i) * c))
    return _rotate(_schmidt_vector(pieces, ref_dim, t.total_dim), t.basis_change)


def optimal_input_pq(t: Channels.ThreeLayer, cb: bool = False, pure: bool = False) -> States.DensityMatrix:
    """The achieving state ψ* ⊗ δ_{k*}, or the pure input ψ* ⊗ |0⟩ that P maps onto it."""
    vector = optimal_vector_pq(t, cb)
    if pure:
        return States.DensityMatrix.from_vector(vector)
    return States.DensityMatrix(Channels.apply_with_reference(t.p_channel(), Matrix.projector(vector), t.total_dim if cb else 1))


def infinite_divergence_witness(p: Channels.ChannelLike, q: Channels.ChannelLike) -> typing.Optional[States.DensityMatrix]:
    """A state ρ with rank P(ρ) > rank Q(ρ) when im(Q*) ⊄ im(P*), built from a projection of im(Q*) outside im(P*)."""
    basis_p = Channels.fixed_point_algebra(p)
    basis_q = Channels.fixed_point_algebra(q)
    vectors_p = Channels.operator_vectors(basis_p)
    if Channels.span_residual(vectors_p, Channels.operator_vectors(basis_q)) <= Channels.ALGEBRA_TOLERANCE:
        return None
    for x in basis_q:
        for h in ((x + x.conj().T) / 2, (x - x.conj().T) / 2j):
            w, v = numpy.linalg.eigh(h)
            for group in Channels.eigenvalue_clusters(w):
                projection = v[:, group] @ v[:, group].conj().T
                if Channels.span_residual(vectors_p, projection.reshape(-1, 1)) <= Channels.ALGEBRA_TOLERANCE:
                    continue
                rho = projection / len(group)
                if Matrix.rank(p.apply(rho)) > Matrix.rank(q.apply(rho)):
                    return States.DensityMatrix(rho)
    _logger.warning("inclusion fails but no spectral projection gave a rank witness")
    return None


def block_product_structure(t: Channels.ThreeLayer) -> bool:
    """Whether every ω_l = ⊕_k p_{k,l} τ_{k,l} ⊗ ν_k with ν_k shared across l."""
    nu: typing.Dict[int, Matrix.ComplexArray] = dict()
    for l in range(t.L):
        omega = t.omega[l]
        block_diagonal = numpy.zeros_like(omega)
        for k in range(t.K):
            b = int(t.b[k, l])
            if b == 0:
                continue
            start, size = t.e_offset(k, l), b * t.c[k]
            sub = omega[start:start + size, start:start + size]
            block_diagonal[start:start + size, start:start + size] = sub
            weight = float(numpy.trace(sub).real)
            if weight <= 0:
                return False
            tau = Matrix.partial_trace(sub, [b, t.c[k]], [0]) / weight
            nu_kl = Matrix.partial_trace(sub, [b, t.c[k]], [1]) / weight
            if float(numpy.max(numpy.abs(sub - weight * numpy.kron(tau, nu_kl)))) > Channels.STRUCTURE_TOLERANCE:
                return False
            if k in nu and float(numpy.max(numpy.abs(nu[k] - nu_kl))) > Channels.STRUCTURE_TOLERANCE:
                return False
            nu.setdefault(k, nu_kl)
        if float(numpy.max(numpy.abs(omega - block_diagonal))) > Channels.STRUCTURE_TOLERANCE:
            return False
    return True


@dataclasses.dataclass(frozen=True)
class UpperBound:
    value_bits: float
    kstar: int
    exact: bool


def general_upper_bound(t: Channels.ThreeLayer, alpha: float, dkl: typing.Union[Matrix.RealArray, typing.Sequence[typing.Sequence[typing.Optional[float]]]]) -> UpperBound:
    """max_k log₂ Σ_l 2^{D̃_α(k,l)} from per-piece divergences.

    The same combination serves the plain and the cb flavor; which one is meant is decided by
    the per-piece values passed in. exact is set when the replacer states have the block
    product structure, which is sufficient for equality.
    """
    Validator.alpha_above_one_validator.validate(alpha)
    values = numpy.array([[numpy.nan if x is None else x for x in row] for row in dkl], dtype=float)
    if values.shape != (t.K, t.L):
        raise Validator.ValidationError("per-block divergences have shape {}, expected ({}, {})".format(values.shape, t.K, t.L))
    sums = list()
    for k in range(t.K):
        row = list()
        for l in range(t.L):
            if t.b[k, l] == 0:
                continue
            if numpy.isnan(values[k, l]):
                raise Validator.ValidationError("missing per-block divergence for nonempty piece ({}, {})".format(k, l))
            row.append(values[k, l])
        sums.append(float(scipy.special.logsumexp(numpy.array(row) * math.log(2))) / math.log(2))
    kstar = int(numpy.argmax(sums))
    return UpperBound(sums[kstar], kstar, block_product_structure(t))


@dataclasses.dataclass(frozen=True)
class IndexPair:
    """Pimsner-Popa type constants on the linear scale."""
    linear: float
    linear_cb: float

    @property
    def log2(self) -> float:
        return math.log2(self.linear)

    @property
    def log2_cb(self) -> float:
        return math.log2(self.linear_cb)


def pimsner_popa(e: Channels.ChannelLike) -> IndexPair:
    block = as_block_idempotent(e)
    linear = sum(_ky_fan_inverse(b.omega, min(b.d_a, b.d_b)) for b in block.blocks)
    linear_cb = sum(_ky_fan_inverse(b.omega, b.d_b) for b in block.blocks)
    return IndexPair(linear, linear_cb)


def _is_maximally_mixed(x: Matrix.ComplexArray) -> bool:
    return float(numpy.max(numpy.abs(x - numpy.eye(x.shape[0]) / x.shape[0]))) <= Channels.STRUCTURE_TOLERANCE


def nested_index(t: Channels.ThreeLayer, trace_preserving: bool = False) -> IndexPair:
    """Index of the nested pair; in the trace-preserving case only the dimensions enter."""
    if not trace_preserving:
        sums, sums_cb = _k_sums(t, False), _k_sums(t, True)
        return IndexPair(max(sums), max(sums_cb))
    if not all(_is_maximally_mixed(x) for x in t.delta) or not all(_is_maximally_mixed(x) for x in t.omega):
        raise Validator.ValidationError("trace-preserving index requires maximally mixed delta and omega states")
    linear, linear_cb = 0.0, 0.0
    for k in range(t.K):
        total, total_cb = 0.0, 0.0
        for l in range(t.L):
            b = int(t.b[k, l])
            if b == 0:
                continue
            total += min(t.a[l], b) * t.e(l) / t.c[k]
            total_cb += b * t.e(l) / t.c[k]
        linear, linear_cb = max(linear, total), max(linear_cb, total_cb)
    return IndexPair(linear, linear_cb)


@dataclasses.dataclass(frozen=True)
class ExponentReport:
    """Asymptotic exponents in bits; when exact is false the values are upper bounds from block estimates."""
    stein_bits: float
    chernoff_bits: float
    dcb_bits: float
    additive: bool
    exact: bool

    @property
    def perfect_discrimination(self) -> bool:
        return math.isinf(self.dcb_bits)

    def strong_converse(self, r: float) -> float:
        if math.isinf(self.dcb_bits):
            return 0.0
        return max(0.0, r - self.dcb_bits)


def exponents(dcb_bits: float, exact: bool = True) -> ExponentReport:
    if math.isnan(dcb_bits) or dcb_bits < -1e-9:
        raise Validator.ValidationError("cb divergence must be a non-negative extended real, got {}".format(dcb_bits))
    dcb_bits = max(0.0, dcb_bits)
    return ExponentReport(dcb_bits, dcb_bits, dcb_bits, additive=exact, exact=exact)


def strong_converse_lower_bound(r: float, bounds: typing.Mapping[float, float]) -> float:
    """sup_α (α−1)/α · (r − B_α) over a table of cb upper bounds B_α for α > 1, clipped at 0."""
    best = 0.0
    for alpha, bound in bounds.items():
        alpha = Validator.alpha_above_one_validator.validate(alpha)
        if math.isinf(bound):
            continue
        best = max(best, (alpha - 1) / alpha * (r - bound))
    return best


SIMPLEX_KINDS = ("softmax", "harmonic", "hoelder")


def simplex_objective(kind: str, c: numpy.typing.ArrayLike, mu: numpy.typing.ArrayLike, alpha: typing.Optional[float] = None) -> typing.Any:
    """The function optimized over the probability simplex for each kind (harmonic is minimized).

    mu may hold several points along its leading axes; the last axis indexes the coordinates.
    Returns a float for a single point and an array otherwise.
    """
    kind = Validator.ChoiceValidator("simplex kind", SIMPLEX_KINDS).validate(kind)
    cs = numpy.asarray(c, dtype=float)
    ms = numpy.asarray(mu, dtype=float)
    if kind == "softmax":
        with numpy.errstate(divide="ignore", invalid="ignore"):
            terms = numpy.where(ms > 0, -ms * numpy.log2(numpy.where(ms > 0, ms, 1.0)), 0.0)
        values = numpy.sum(terms, axis=-1) + ms @ cs
    elif kind == "harmonic":
        values = numpy.sum(ms * ms * cs, axis=-1)
    else:
        a = Validator.alpha_above_one_validator.validate(typing.cast(float, alpha))
        inner = numpy.sum(numpy.power(ms, 1 / a) * numpy.power(cs, (a - 1) / a), axis=-1)
        with numpy.errstate(divide="ignore"):
            values = a / (a - 1) * numpy.log2(inner)
    return float(values) if numpy.ndim(values) == 0 else values


def simplex_optimum(kind: str, c: typing.Sequence[float], alpha: typing.Optional[float] = None) -> typing.Tuple[float, Matrix.RealArray]:
    """Optimal value and optimizer over the simplex: softmax and hoelder maximize, harmonic minimizes."""
    kind = Validator.ChoiceValidator("simplex kind", SIMPLEX_KINDS).validate(kind)
    cs = numpy.asarray(c, dtype=float)
    if cs.ndim != 1 or cs.size == 0 or not numpy.all(numpy.isfinite(cs)):
        raise Validator.ValidationError("coefficients must be a nonempty list of finite reals")
    if kind == "softmax":
        value = float(scipy.special.logsumexp(cs * math.log(2))) / math.log(2)
        return value, typing.cast(Matrix.RealArray, scipy.special.softmax(cs * math.log(2)))
    if kind == "harmonic":
        if numpy.any(cs <= 0):
            raise Validator.ValidationError("harmonic optimum requires positive coefficients")
        inverse = 1.0 / cs
        return 1.0 / float(numpy.sum(inverse)), typing.cast(Matrix.RealArray, inverse / numpy.sum(inverse))
    if alpha is None:
        raise Validator.ValidationError("hoelder optimum requires alpha")
    Validator.alpha_above_one_validator.validate(alpha)
    if numpy.any(cs < 0) or numpy.sum(cs) <= 0:
        raise Validator.ValidationError("hoelder optimum requires non-negative coefficients with positive sum")
    return math.log2(float(numpy.sum(cs))), typing.cast(Matrix.RealArray, cs / numpy.sum(cs))
