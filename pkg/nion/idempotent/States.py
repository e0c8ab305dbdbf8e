"""
State-level divergences, hypothesis testing, Chernoff divergence and the Helstrom error.

All values are in bits. +inf is returned as math.inf, never as a large float.

The second argument of each divergence may be any positive semidefinite operator; only the
first argument must be a normalized state. This lets closed forms pass unnormalized weights
such as p·τ directly.
"""

from __future__ import annotations

# standard libraries
import dataclasses
import logging
import math
import typing

# third party libraries
import numpy
import scipy.optimize

# local libraries
from nion.idempotent import Matrix
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

SUPPORT_TOLERANCE = 1e-9
TRACE_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-10


class DensityMatrix:
    """A positive semidefinite, unit-trace Hermitian matrix."""

    def __init__(self, matrix: Matrix.MatrixLike, *, check: bool = True) -> None:
        m = Matrix.hermitize(matrix)
        if check:
            trace = numpy.trace(m).real
            if abs(trace - 1.0) > TRACE_TOLERANCE * max(1.0, m.shape[0]):
                raise Validator.ValidationError("density matrix trace is {:.12g}, expected 1".format(trace))
            smallest = Matrix.min_eigenvalue(m)
            if smallest < -PSD_TOLERANCE:
                raise Validator.ValidationError("density matrix has negative eigenvalue {:.3e}".format(smallest))
        m.setflags(write=False)
        self.__matrix = m

    @classmethod
    def from_vector(cls, psi: Matrix.MatrixLike) -> DensityMatrix:
        v = numpy.asarray(psi, dtype=numpy.complex128).reshape(-1)
        norm = numpy.linalg.norm(v)
        if norm == 0:
            raise Validator.ValidationError("cannot build a state from the zero vector")
        return cls(Matrix.projector(v / norm))

    @classmethod
    def maximally_mixed(cls, d: int) -> DensityMatrix:
        return cls(numpy.eye(d, dtype=numpy.complex128) / d)

    @classmethod
    def basis_state(cls, d: int, i: int) -> DensityMatrix:
        return cls(Matrix.projector(Matrix.ket(d, i)))

    @property
    def matrix(self) -> Matrix.ComplexArray:
        return self.__matrix

    @property
    def dim(self) -> int:
        return int(self.__matrix.shape[0])

    def __repr__(self) -> str:
        return "DensityMatrix(dim={})".format(self.dim)


StateLike = typing.Union[DensityMatrix, Matrix.MatrixLike]


def as_operator(x: StateLike) -> Matrix.ComplexArray:
    if isinstance(x, DensityMatrix):
        return x.matrix
    return Matrix.hermitize(x)


def _pair(rho: StateLike, sigma: StateLike) -> typing.Tuple[Matrix.ComplexArray, Matrix.ComplexArray]:
    r = as_operator(rho)
    s = as_operator(sigma)
    if r.shape != s.shape:
        raise Validator.ValidationError("dimension mismatch: {} vs {}".format(r.shape[0], s.shape[0]))
    return r, s


def outside_support_weight(rho: Matrix.ComplexArray, sigma: Matrix.ComplexArray) -> float:
    """Tr(ρ(1 − Π_σ)): the weight of ρ outside the support of σ."""
    return float(numpy.trace(rho).real - numpy.trace(Matrix.support_projection(sigma) @ rho).real)


def support_contained(rho: Matrix.ComplexArray, sigma: Matrix.ComplexArray) -> bool:
    return outside_support_weight(rho, sigma) <= SUPPORT_TOLERANCE


def _overlap_vanishes(rho: Matrix.ComplexArray, sigma: Matrix.ComplexArray) -> bool:
    # ρσ = 0 iff Tr(Π_ρ σ) = 0 for positive operators
    return float(numpy.trace(Matrix.support_projection(rho) @ sigma).real) <= SUPPORT_TOLERANCE * max(1.0, float(numpy.trace(sigma).real))


def umegaki(rho: StateLike, sigma: StateLike) -> float:
    r, s = _pair(rho, sigma)
    if not support_contained(r, s):
        return math.inf
    value = numpy.trace(r @ (Matrix.log2m(r) - Matrix.log2m(s))).real
    return float(value)


def _renyi_alpha(alpha: float) -> float:
    return Validator.renyi_alpha_validator.validate(alpha)


def petz_renyi(rho: StateLike, sigma: StateLike, alpha: float) -> float:
    alpha = _renyi_alpha(alpha)
    r, s = _pair(rho, sigma)
    if alpha < 1:
        if _overlap_vanishes(r, s):
            return math.inf
    elif not support_contained(r, s):
        return math.inf
    q = numpy.trace(Matrix.psd_power(r, alpha) @ Matrix.psd_power(s, 1 - alpha)).real
    if q <= 0:
        return math.inf
    return float(math.log2(q) / (alpha - 1))


def sandwiched_quasi(r: Matrix.ComplexArray, s: Matrix.ComplexArray, alpha: float) -> float:
    """Tr[(σ^{(1−α)/2α} ρ σ^{(1−α)/2α})^α] without any support checks."""
    half = Matrix.psd_power(s, (1 - alpha) / (2 * alpha))
    inner = Matrix.hermitize(half @ r @ half.conj().T)
    eigenvalues = numpy.clip(Matrix.eig_hermitian(inner).eigenvalues, 0.0, None)
    return float(numpy.sum(eigenvalues ** alpha))


def sandwiched(rho: StateLike, sigma: StateLike, alpha: float) -> float:
    alpha = _renyi_alpha(alpha)
    r, s = _pair(rho, sigma)
    if alpha < 1:
        if _overlap_vanishes(r, s):
            return math.inf
    elif not support_contained(r, s):
        return math.inf
    q = sandwiched_quasi(r, s, alpha)
    if q <= 0:
        return math.inf
    return float(math.log2(q) / (alpha - 1))


def dmax(rho: StateLike, sigma: StateLike) -> float:
    r, s = _pair(rho, sigma)
    if not support_contained(r, s):
        return math.inf
    inv_half = Matrix.psd_power(s, -0.5)
    largest = Matrix.eig_hermitian(inv_half @ r @ inv_half).eigenvalues[0]
    return float(math.log2(largest)) if largest > 0 else -math.inf


def dmin(rho: StateLike, sigma: StateLike) -> float:
    r, s = _pair(rho, sigma)
    overlap = float(numpy.trace(Matrix.support_projection(r) @ s).real)
    if overlap <= SUPPORT_TOLERANCE * max(1.0, float(numpy.trace(s).real)):
        return math.inf
    return float(-math.log2(overlap))


@dataclasses.dataclass(frozen=True)
class NeymanPearsonTest:
    """Optimal test M = P₊(ρ − tσ) + γ·P₀(ρ − tσ) for one type-I budget ε."""
    threshold: float
    gamma: float
    measurement: Matrix.ComplexArray
    epsilon: float
    infinite: bool = False

    def type_one_success(self, rho: StateLike) -> float:
        return float(numpy.trace(self.measurement @ as_operator(rho)).real)

    def type_two_error(self, sigma: StateLike) -> float:
        return float(numpy.trace(self.measurement @ as_operator(sigma)).real)


def _strict_positive_weight(r: Matrix.ComplexArray, s: Matrix.ComplexArray, t: float) -> float:
    e = Matrix.eig_hermitian(r - t * s)
    scale = max(float(numpy.max(numpy.abs(e.eigenvalues))), 1e-300)
    v = e.eigenvectors[:, e.eigenvalues > 1e-13 * scale]
    return float(numpy.trace(v.conj().T @ r @ v).real)


def hypothesis_testing(rho: StateLike, sigma: StateLike, epsilon: float) -> typing.Tuple[float, NeymanPearsonTest]:
    """Exact −log₂ min{Tr(Mσ) : Tr(Mρ) ≥ 1−ε, 0 ≤ M ≤ 1} with the optimal test.

    The threshold t is bracketed by bisection on f(t) = Tr(P₊(ρ − tσ)ρ), which is non-increasing;
    the boundary eigenspace receives the weight γ that meets the constraint exactly.
    """
    epsilon = Validator.epsilon_validator.validate(epsilon)
    r, s = _pair(rho, sigma)
    target = 1.0 - epsilon
    d = r.shape[0]

    outside = outside_support_weight(r, s)
    if outside >= target - SUPPORT_TOLERANCE:
        # a test supported off σ meets the constraint with zero type-II error
        complement = numpy.eye(d, dtype=numpy.complex128) - Matrix.support_projection(s)
        gamma = min(1.0, target / outside) if outside > 0 else 0.0
        test = NeymanPearsonTest(math.inf, gamma, gamma * complement, epsilon, infinite=True)
        return math.inf, test

    s_eigenvalues = Matrix.eig_hermitian(s).eigenvalues
    positive = s_eigenvalues[Matrix.support_mask(s_eigenvalues)]
    t_hi = 2.0 / float(positive[-1])
    for _ in range(64):
        if _strict_positive_weight(r, s, t_hi) <= target:
            break
        t_hi *= 2.0
    t_lo = 0.0
    for _ in range(200):
        t_mid = 0.5 * (t_lo + t_hi)
        if t_mid <= t_lo or t_mid >= t_hi:
            break
        if _strict_positive_weight(r, s, t_mid) > target:
            t_lo = t_mid
        else:
            t_hi = t_mid
    _logger.debug("Neyman-Pearson threshold bracket [%.17g, %.17g]", t_lo, t_hi)

    t = 0.5 * (t_lo + t_hi)
    e = Matrix.eig_hermitian(r - t * s)
    s_norm = float(s_eigenvalues[0])
    width = 10.0 * (t_hi - t_lo) * s_norm + 1e-12 * max(float(numpy.max(numpy.abs(e.eigenvalues))), 1e-300)
    v_plus = e.eigenvectors[:, e.eigenvalues > width]
    v_zero = e.eigenvectors[:, numpy.abs(e.eigenvalues) <= width]
    p_plus = v_plus @ v_plus.conj().T
    p_zero = v_zero @ v_zero.conj().T
    plus_weight = float(numpy.trace(p_plus @ r).real)
    zero_weight = float(numpy.trace(p_zero @ r).real)
    gamma = (target - plus_weight) / zero_weight if zero_weight > 0 else 0.0
    gamma = min(1.0, max(0.0, gamma))
    m = p_plus + gamma * p_zero
    optimum = float(numpy.trace(m @ s).real)
    test = NeymanPearsonTest(t, gamma, m, epsilon)
    if optimum <= 0:
        return math.inf, dataclasses.replace(test, infinite=True)
    return float(-math.log2(optimum)), test


def one_shot_bounds(rho: StateLike, sigma: StateLike, epsilon: float, alpha: float = 0.5, alpha_prime: float = 2.0) -> typing.Tuple[float, float]:
    """Lower and upper bounds on the hypothesis-testing divergence from Petz (α < 1) and sandwiched (α' > 1) divergences."""
    epsilon = Validator.epsilon_validator.validate(epsilon)
    alpha = Validator.RealRangeValidator("alpha", 0.0, 1.0, include_min=False, include_max=False).validate(alpha)
    alpha_prime = Validator.alpha_above_one_validator.validate(alpha_prime)
    lower = petz_renyi(rho, sigma, alpha) + alpha / (alpha - 1) * math.log2(1 / epsilon)
    upper = sandwiched(rho, sigma, alpha_prime) + alpha_prime / (alpha_prime - 1) * math.log2(1 / (1 - epsilon))
    return lower, upper


def chernoff(rho: StateLike, sigma: StateLike) -> float:
    """sup over α ∈ (0,1) of (1−α)·D_α, by bounded scalar maximization on [1e-4, 1 − 1e-4]."""
    r, s = _pair(rho, sigma)
    if _overlap_vanishes(r, s):
        return math.inf

    def negative_objective(alpha: float) -> float:
        q = numpy.trace(Matrix.psd_power(r, alpha) @ Matrix.psd_power(s, 1 - alpha)).real
        return float(math.log2(q)) if q > 0 else math.inf

    lo, hi = 1e-4, 1 - 1e-4
    result = scipy.optimize.minimize_scalar(negative_objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    # the open-interval supremum may sit at an endpoint limit: Tr(Π_ρ σ) as α → 0, Tr(ρ Π_σ) as α → 1
    limit_zero = float(numpy.trace(Matrix.support_projection(r) @ s).real)
    limit_one = float(numpy.trace(r @ Matrix.support_projection(s)).real)
    candidates = [float(result.fun), negative_objective(lo), negative_objective(hi)]
    candidates.extend(math.log2(q) for q in (limit_zero, limit_one) if q > 0)
    return max(0.0, -min(candidates))


def helstrom_error(rho: StateLike, sigma: StateLike) -> float:
    r, s = _pair(rho, sigma)
    return (1.0 - 0.5 * Matrix.trace_norm(r - s)) / 2.0


DIVERGENCE_KINDS = ("umegaki", "petz", "sandwiched", "dmax", "dmin")


@dataclasses.dataclass(frozen=True)
class DivergenceKind:
    """A divergence selector with its order, shared by the oracle and the command line."""
    name: str
    alpha: typing.Optional[float] = None

    def __post_init__(self) -> None:
        Validator.ChoiceValidator("divergence kind", DIVERGENCE_KINDS).validate(self.name)
        if self.name in ("petz", "sandwiched"):
            if self.alpha is None:
                raise Validator.ValidationError("divergence {} requires alpha".format(self.name))
            _renyi_alpha(self.alpha)

    @property
    def needs_support(self) -> bool:
        return self.name in ("umegaki", "dmax") or (self.alpha is not None and self.alpha > 1)

    def evaluate(self, rho: StateLike, sigma: StateLike) -> float:
        if self.name == "umegaki":
            return umegaki(rho, sigma)
        if self.name == "petz":
            return petz_renyi(rho, sigma, typing.cast(float, self.alpha))
        if self.name == "sandwiched":
            return sandwiched(rho, sigma, typing.cast(float, self.alpha))
        if self.name == "dmax":
            return dmax(rho, sigma)
        return dmin(rho, sigma)


def support_warnings(rho: StateLike, sigma: StateLike) -> typing.List[str]:
    """Warnings for spectra that sit within three decades of the rank cutoff."""
    warnings: typing.List[str] = list()
    for label, x in (("rho", rho), ("sigma", sigma)):
        eigenvalues = Matrix.eig_hermitian(as_operator(x)).eigenvalues
        cutoff = Matrix.rank_cutoff(eigenvalues)
        near = eigenvalues[(eigenvalues > cutoff) & (eigenvalues <= 1e3 * cutoff)]
        if near.size:
            warnings.append("{} has {} eigenvalue(s) near the rank tolerance; support is near-degenerate".format(label, near.size))
    return warnings
