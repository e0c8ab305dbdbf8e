"""
GNS-symmetric channels: detailed-balance test, peripheral projection, mixing constants and
the bracket on even-iterate channel divergences in terms of the peripheral projections.
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
import scipy.linalg

# local libraries
from nion.idempotent import Channels
from nion.idempotent import ClosedForm
from nion.idempotent import Matrix
from nion.idempotent import Oracle
from nion.idempotent import States
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

PERIPHERAL_TOLERANCE = 1e-8
GNS_TOLERANCE = 1e-8
PROJECTION_TOLERANCE = 1e-8
MAX_CONDITION = 1e8


def _check_invariant(phi: Channels.ChannelLike, tau: States.StateLike) -> Matrix.ComplexArray:
    t = States.as_operator(tau)
    if t.shape != (phi.dim, phi.dim):
        raise Validator.ValidationError("state dimension {} does not match channel dimension {}".format(t.shape[0], phi.dim))
    eigenvalues = Matrix.eig_hermitian(t).eigenvalues
    if eigenvalues[-1] <= Matrix.rank_cutoff(eigenvalues):
        raise Validator.ValidationError("invariant state must be full rank (smallest eigenvalue {:.3e})".format(eigenvalues[-1]))
    residual = float(numpy.max(numpy.abs(phi.apply(t) - t)))
    if residual > 1e-9:
        raise Validator.ValidationError("state is not invariant under the channel (residual {:.3e})".format(residual))
    return t


def gns_residual(phi: Channels.ChannelLike, tau: States.StateLike) -> float:
    """max |Tr(Φ*(X) Y τ) − Tr(X Φ*(Y) τ)| over matrix units X, Y."""
    t = _check_invariant(phi, tau)
    d = phi.dim
    units = numpy.eye(d * d, dtype=numpy.complex128).reshape(d * d, d, d)
    adjoints = numpy.stack([phi.adjoint_apply(u) for u in units])
    lhs = numpy.einsum("xab,ybc,ca->xy", adjoints, units, t)
    rhs = numpy.einsum("xab,ybc,ca->xy", units, adjoints, t)
    return float(numpy.max(numpy.abs(lhs - rhs)))


def is_gns_symmetric(phi: Channels.ChannelLike, tau: States.StateLike, tolerance: float = GNS_TOLERANCE) -> typing.Tuple[bool, float]:
    residual = gns_residual(phi, tau)
    return residual <= tolerance, residual


@dataclasses.dataclass(frozen=True)
class SpectralData:
    """Transfer spectrum (by decreasing modulus), peripheral projection and spectral gap constant."""
    eigenvalues: Matrix.ComplexArray
    peripheral_projection: Channels.Superoperator
    mu: float
    gns_symmetric: bool
    invariant_state: States.DensityMatrix
    gns_residual: float


def _spectral_projection(vl: Matrix.ComplexArray, vr: Matrix.ComplexArray, mask: numpy.typing.NDArray[numpy.bool_]) -> Matrix.ComplexArray:
    right = vr[:, mask]
    left = vl[:, mask]
    overlap = left.conj().T @ right
    if numpy.linalg.cond(overlap) > MAX_CONDITION:
        raise Validator.ValidationError("peripheral eigenspace is defective (condition number {:.3e})".format(numpy.linalg.cond(overlap)))
    return typing.cast(Matrix.ComplexArray, right @ numpy.linalg.solve(overlap, left.conj().T))


def check_peripheral_projection(phi: Channels.ChannelLike, projection: Channels.ChannelLike, tolerance: float = PROJECTION_TOLERANCE) -> None:
    """Raise ValidationError unless projection is idempotent and commutes with phi."""
    s = Channels.as_superoperator(phi).transfer
    p = Channels.as_superoperator(projection).transfer
    if s.shape != p.shape:
        raise Validator.ValidationError("projection dimension {} does not match channel dimension {}".format(p.shape, s.shape))
    idempotent_residual = float(numpy.max(numpy.abs(p @ p - p)))
    if not idempotent_residual < tolerance:
        raise Validator.ValidationError("peripheral projection is not idempotent (residual {:.3e})".format(idempotent_residual))
    commutator = float(numpy.max(numpy.abs(s @ p - p @ s)))
    if not commutator < tolerance:
        raise Validator.ValidationError("peripheral projection does not commute with the channel (residual {:.3e})".format(commutator))


def spectral_decompose(phi: Channels.ChannelLike, tol: float = PERIPHERAL_TOLERANCE, tau: typing.Optional[States.StateLike] = None) -> SpectralData:
    """Peripheral projection P_Φ = Σ_{|λ|=1} P_λ and μ = max |λ| off the periphery.

    The invariant state is the supplied τ, otherwise the projection of I/d onto the fixed
    points. GNS symmetry is tested against that state when it has full rank.
    """
    s = Channels.as_superoperator(phi)
    if not s.is_channel(PROJECTION_TOLERANCE):
        raise Validator.ValidationError("spectral decomposition needs a channel (CP and trace preserving)")
    d = s.dim
    w, vl, vr = scipy.linalg.eig(s.transfer, left=True, right=True)
    order = numpy.argsort(-numpy.abs(w), kind="stable")
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    modulus = numpy.abs(w)
    peripheral = modulus >= 1.0 - tol
    projection = _spectral_projection(vl, vr, peripheral)
    mu = float(numpy.max(modulus[~peripheral])) if numpy.any(~peripheral) else 0.0
    if numpy.any(~peripheral) and 1.0 - mu < 10 * tol:
        _logger.warning("spectral gap %.3e is within ten times the peripheral tolerance", 1.0 - mu)

    p = Channels.Superoperator(projection)
    check_peripheral_projection(s, p)

    if tau is None:
        fixed = _spectral_projection(vl, vr, numpy.abs(w - 1.0) < tol)
        x = Matrix.hermitize((fixed @ (numpy.eye(d) / d).reshape(-1)).reshape(d, d))
        state = States.DensityMatrix(x / numpy.trace(x).real)
    else:
        state = tau if isinstance(tau, States.DensityMatrix) else States.DensityMatrix(tau)

    eigenvalues = Matrix.eig_hermitian(state.matrix).eigenvalues
    symmetric, residual = False, math.inf
    if eigenvalues[-1] > Matrix.rank_cutoff(eigenvalues):
        symmetric, residual = is_gns_symmetric(s, state)
    else:
        _logger.debug("invariant state is rank deficient; GNS symmetry not tested")
    if symmetric and float(numpy.max(numpy.abs(w.imag))) > GNS_TOLERANCE:
        _logger.warning("GNS-symmetric channel has a non-real eigenvalue (imaginary part %.3e)", float(numpy.max(numpy.abs(w.imag))))
    return SpectralData(typing.cast(Matrix.ComplexArray, w), p, mu, symmetric, state, residual)


def even_power(phi: Channels.ChannelLike, n: int) -> Channels.Superoperator:
    """Φ^n for even n; odd powers can sit on the −1 part of the periphery and are rejected."""
    n = Validator.IntegerRangeValidator("power", 0).validate(n)
    if n % 2 != 0:
        raise Validator.ValidationError("power {} is odd; the periphery of a GNS-symmetric channel may carry 2-cycles, use 2k".format(n))
    return Channels.as_superoperator(phi).power(n)


@dataclasses.dataclass(frozen=True)
class MixingConstants:
    """ε = μ^{2k}·D^cb(id ‖ P_Φ) with the power threshold log₂ D^cb / log₂(1/μ)."""
    k: int
    mu: float
    dcb_bits: float
    epsilon: float
    threshold_2k: float

    @property
    def above_threshold(self) -> bool:
        return 2 * self.k > self.threshold_2k


def _threshold(mu: float, dcb_bits: float) -> float:
    if mu == 0.0:
        return 0.0
    if dcb_bits <= 0.0:
        return -math.inf
    return math.log2(dcb_bits) / math.log2(1.0 / mu)


def peripheral_block_form(spectral: SpectralData) -> Channels.BlockIdempotent:
    """The peripheral projection as a block idempotent, via its fixed-point algebra."""
    idempotent, residual = Channels.is_idempotent(spectral.peripheral_projection)
    if not idempotent:
        raise Validator.ValidationError("peripheral projection is not idempotent (residual {:.3e})".format(residual))
    return Channels.block_form(spectral.peripheral_projection)


def mixing_epsilon(phi: Channels.ChannelLike, k: int, spectral: typing.Optional[SpectralData] = None) -> MixingConstants:
    k = Validator.IntegerRangeValidator("k", 1).validate(k)
    spectral = spectral or spectral_decompose(phi)
    dcb = ClosedForm.d_idq_cb(peripheral_block_form(spectral))
    epsilon = spectral.mu ** (2 * k) * dcb
    return MixingConstants(k, spectral.mu, dcb, epsilon, _threshold(spectral.mu, dcb))


def cp_mixing_residuals(phi: Channels.ChannelLike, constants: MixingConstants, spectral: typing.Optional[SpectralData] = None) -> typing.Tuple[float, float]:
    """Smallest Choi eigenvalues of (1+ε)P_Φ − Φ^{2k} and Φ^{2k} − (1−ε)P_Φ."""
    spectral = spectral or spectral_decompose(phi)
    iterate = even_power(phi, 2 * constants.k).choi
    projection = spectral.peripheral_projection.choi
    upper = Matrix.min_eigenvalue((1 + constants.epsilon) * projection - iterate)
    lower = Matrix.min_eigenvalue(iterate - (1 - constants.epsilon) * projection)
    return upper, lower


@dataclasses.dataclass(frozen=True)
class IterateBounds:
    """Bracket on the cb divergences of Φ^{2k} and Ψ^{2k}, in bits."""
    k: int
    lower_bits: float
    upper_bits: float
    valid: bool
    inclusion: bool
    limit_bits: float
    phi: MixingConstants
    psi: MixingConstants
    middle_bits: typing.Optional[float] = None

    @property
    def threshold_2k(self) -> float:
        return max(self.phi.threshold_2k, self.psi.threshold_2k)

    @property
    def stein(self) -> typing.Tuple[float, float]:
        return self.lower_bits, self.upper_bits

    @property
    def chernoff(self) -> typing.Tuple[float, float]:
        return self.lower_bits, self.upper_bits

    def strong_converse(self, r: float) -> typing.Tuple[typing.Optional[float], typing.Optional[float]]:
        """(lower, upper) bounds on the strong converse exponent at rate r; None where no bound applies."""
        lower = r - self.upper_bits if r > self.upper_bits else None
        upper = r - self.lower_bits if r > self.lower_bits else None
        return lower, upper


def _limit_divergence(p_phi: Channels.BlockIdempotent, p_psi: Channels.BlockIdempotent) -> float:
    t = Channels.three_layer_decompose(p_phi, p_psi)
    if t.common_invariant:
        return ClosedForm.d_pq_common_cb(t)[0]
    _logger.warning("peripheral projections have no common full-rank invariant state; using the Choi max-divergence")
    return Oracle.choi_dmax_cb(p_phi, p_psi)


def iterate_bounds(phi: Channels.ChannelLike, psi: Channels.ChannelLike, tau: States.StateLike, k: int, middle: bool = False) -> IterateBounds:
    """D^cb(P_Φ‖P_Ψ) − log₂(1+ε_Ψ) ≤ D^cb(Φ^{2k}‖Ψ^{2k}) ≤ D^cb(P_Φ‖P_Ψ) + log₂(1+ε_Φ) − log₂(1−ε_Ψ).

    valid is false below the power threshold, when ε_Ψ ≥ 1, or when the inclusion of the
    peripheral images fails (then both ends are +∞). With middle set, the exact cb max-divergence
    of the iterates is attached.
    """
    k = Validator.IntegerRangeValidator("k", 1).validate(k)
    if phi.dim != psi.dim:
        raise Validator.ValidationError("channels act on dimensions {} and {}".format(phi.dim, psi.dim))
    for name, ch in (("first", phi), ("second", psi)):
        symmetric, residual = is_gns_symmetric(ch, tau)
        if not symmetric:
            raise Validator.ValidationError("{} channel is not GNS-symmetric for the given state (residual {:.3e})".format(name, residual))
    spectral_phi = spectral_decompose(phi, tau=tau)
    spectral_psi = spectral_decompose(psi, tau=tau)
    constants_phi = mixing_epsilon(phi, k, spectral_phi)
    constants_psi = mixing_epsilon(psi, k, spectral_psi)
    p_phi = peripheral_block_form(spectral_phi)
    p_psi = peripheral_block_form(spectral_psi)
    inclusion = Channels.inclusion_holds(p_phi, p_psi)
    middle_bits = Oracle.choi_dmax_cb(even_power(phi, 2 * k), even_power(psi, 2 * k)) if middle else None
    if not inclusion:
        _logger.info("peripheral images are not nested; divergence of the iterates is infinite")
        return IterateBounds(k, math.inf, math.inf, False, False, math.inf, constants_phi, constants_psi, middle_bits)
    limit = _limit_divergence(p_phi, p_psi)
    lower = limit - math.log2(1 + constants_psi.epsilon)
    if constants_psi.epsilon < 1:
        upper = limit + math.log2(1 + constants_phi.epsilon) - math.log2(1 - constants_psi.epsilon)
    else:
        upper = math.inf
    valid = constants_phi.above_threshold and constants_psi.above_threshold and constants_psi.epsilon < 1
    if not valid:
        _logger.info("2k = %d is not above the mixing threshold %.4g", 2 * k, max(constants_phi.threshold_2k, constants_psi.threshold_2k))
    return IterateBounds(k, lower, upper, valid, True, limit, constants_phi, constants_psi, middle_bits)


def diamond_decay(phi: Channels.ChannelLike, ks: typing.Sequence[int], cfg: typing.Optional[Oracle.OptimizerConfig] = None,
                  spectral: typing.Optional[SpectralData] = None) -> typing.List[float]:
    """Lower bounds on ‖Φ^{2k} − P_Φ‖_⋄ for each k."""
    spectral = spectral or spectral_decompose(phi)
    return [Oracle.diamond_lower(even_power(phi, 2 * k), spectral.peripheral_projection, cfg) for k in ks]
