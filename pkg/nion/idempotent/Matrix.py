"""
Dense complex Hermitian linear algebra.

Eigendecompositions, support-restricted matrix functions, partial traces, Schatten norms,
Ky Fan partial traces and tensor/direct-sum assembly. All functions are pure and operate on
numpy arrays; they are safe to call from concurrent workers.
"""

from __future__ import annotations

# standard libraries
import dataclasses
import functools
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.linalg

# local libraries
from nion.idempotent import Validator

ComplexArray = numpy.typing.NDArray[numpy.complex128]
RealArray = numpy.typing.NDArray[numpy.float64]
MatrixLike = typing.Union[ComplexArray, RealArray, typing.Sequence[typing.Sequence[complex]]]

RANK_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-10
MAX_DIMENSION = 4096


@dataclasses.dataclass(frozen=True)
class HermitianEig:
    """Eigenvalues in descending order with the matching eigenvector columns."""
    eigenvalues: RealArray
    eigenvectors: ComplexArray

    def reconstruct(self) -> ComplexArray:
        return typing.cast(ComplexArray, (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T)


def check_dimension(n: int, what: str = "matrix dimension") -> int:
    if n < 1:
        raise Validator.ValidationError("{} must be positive, got {}".format(what, n))
    if n > MAX_DIMENSION:
        raise Validator.ValidationError("{} {} exceeds the cap of {}".format(what, n, MAX_DIMENSION))
    return n


def as_matrix(m: MatrixLike, square: bool = True) -> ComplexArray:
    """Return a complex 2-D copy of m, checking shape, finiteness and the dimension cap."""
    a = numpy.array(m, dtype=numpy.complex128)
    if a.ndim != 2:
        raise Validator.ValidationError("expected a 2-D matrix, got shape {}".format(a.shape))
    if square and a.shape[0] != a.shape[1]:
        raise Validator.ValidationError("expected a square matrix, got shape {}".format(a.shape))
    check_dimension(max(a.shape))
    if not numpy.all(numpy.isfinite(a)):
        raise Validator.ValidationError("matrix has non-finite entries")
    return a


def max_asymmetry(h: ComplexArray) -> float:
    return float(numpy.max(numpy.abs(h - h.conj().T))) if h.size else 0.0


def hermitize(h: MatrixLike) -> ComplexArray:
    """Symmetrize h after checking it is Hermitian within HERMITIAN_TOLERANCE relative to its largest entry."""
    a = as_matrix(h)
    scale = float(numpy.max(numpy.abs(a))) if a.size else 0.0
    asymmetry = max_asymmetry(a)
    if asymmetry > HERMITIAN_TOLERANCE * max(scale, 1e-300):
        raise Validator.ValidationError("matrix is not Hermitian: max asymmetry {:.3e} (scale {:.3e})".format(asymmetry, scale))
    return typing.cast(ComplexArray, (a + a.conj().T) / 2)


def eig_hermitian(h: MatrixLike) -> HermitianEig:
    a = hermitize(h)
    w, v = scipy.linalg.eigh(a)
    return HermitianEig(numpy.ascontiguousarray(w[::-1]), numpy.ascontiguousarray(v[:, ::-1]))


def rank_cutoff(eigenvalues: RealArray) -> float:
    """Eigenvalues at or below this value are treated as zero."""
    if eigenvalues.size == 0:
        return 0.0
    return RANK_TOLERANCE * max(float(numpy.max(numpy.abs(eigenvalues))), 1e-300)


def support_mask(eigenvalues: RealArray) -> numpy.typing.NDArray[numpy.bool_]:
    return typing.cast(numpy.typing.NDArray[numpy.bool_], eigenvalues > rank_cutoff(eigenvalues))


def rank(h: MatrixLike) -> int:
    """Numerical rank of a positive semidefinite matrix at the global rank tolerance."""
    e = eig_hermitian(h)
    return int(numpy.count_nonzero(support_mask(e.eigenvalues)))


def support_projection(h: MatrixLike) -> ComplexArray:
    e = eig_hermitian(h)
    v = e.eigenvectors[:, support_mask(e.eigenvalues)]
    return typing.cast(ComplexArray, v @ v.conj().T)


def mat_fn(h: MatrixLike, f: typing.Callable[[RealArray], RealArray], support_only: bool = False) -> ComplexArray:
    """Apply f to the spectrum of Hermitian h.

    With support_only, eigenvalues at or below the rank tolerance are mapped to 0 instead of
    being passed to f. Raises ValidationError if f is not finite on a retained eigenvalue.
    """
    e = eig_hermitian(h)
    lam = e.eigenvalues
    mask = support_mask(lam) if support_only else numpy.ones(lam.shape, dtype=bool)
    values = numpy.zeros(lam.shape, dtype=numpy.float64 if numpy.isrealobj(lam) else numpy.complex128)
    with numpy.errstate(all="ignore"):
        retained = numpy.asarray(f(lam[mask]))
    if not numpy.all(numpy.isfinite(retained)):
        raise Validator.ValidationError("matrix function undefined on a retained eigenvalue (spectrum {})".format(lam[mask]))
    values = values.astype(retained.dtype) if retained.size else values
    values[mask] = retained
    v = e.eigenvectors
    return typing.cast(ComplexArray, (v * values) @ v.conj().T)


def psd_power(h: MatrixLike, p: float) -> ComplexArray:
    """Support-restricted power of a positive semidefinite matrix (zero eigenvalues stay zero for every p)."""
    return mat_fn(h, lambda x: numpy.power(x, p), support_only=True)


def log2m(h: MatrixLike) -> ComplexArray:
    return mat_fn(h, numpy.log2, support_only=True)


def partial_trace(m: MatrixLike, dims: typing.Sequence[int], keep: typing.Iterable[int]) -> ComplexArray:
    """Trace out every factor of a tensor-product matrix not listed in keep. Factors keep their order."""
    a = as_matrix(m)
    dims = [int(d) for d in dims]
    if int(numpy.prod(dims)) != a.shape[0]:
        raise Validator.ValidationError("factor dimensions {} do not match matrix dimension {}".format(dims, a.shape[0]))
    keep_set = sorted(set(keep))
    if any(i < 0 or i >= len(dims) for i in keep_set):
        raise Validator.ValidationError("keep indices {} out of range for {} factors".format(keep_set, len(dims)))
    t = a.reshape(dims + dims)
    n = len(dims)
    for i in reversed(range(len(dims))):
        if i not in keep_set:
            t = numpy.trace(t, axis1=i, axis2=i + n)
            n -= 1
    kept = int(numpy.prod([dims[i] for i in keep_set])) if keep_set else 1
    return typing.cast(ComplexArray, t.reshape(kept, kept))


def ky_fan(h: MatrixLike, k: int) -> float:
    """Sum of the k largest eigenvalues of Hermitian h."""
    e = eig_hermitian(h)
    Validator.IntegerRangeValidator("k", 1, e.eigenvalues.shape[0]).validate(k)
    return float(numpy.sum(e.eigenvalues[:k]))


def schatten_norm(m: MatrixLike, p: float) -> float:
    a = as_matrix(m, square=False)
    if not p >= 1:
        raise Validator.ValidationError("Schatten index must be >= 1, got {}".format(p))
    s = scipy.linalg.svdvals(a)
    if math.isinf(p):
        return float(s[0]) if s.size else 0.0
    return float(numpy.sum(s ** p) ** (1.0 / p))


def trace_norm(m: MatrixLike) -> float:
    return schatten_norm(m, 1)


def tensor(*ms: MatrixLike) -> ComplexArray:
    arrays = [numpy.asarray(m, dtype=numpy.complex128) for m in ms]
    result = functools.reduce(numpy.kron, arrays)
    check_dimension(max(result.shape))
    return typing.cast(ComplexArray, result)


def direct_sum(*ms: MatrixLike) -> ComplexArray:
    arrays = [numpy.asarray(m, dtype=numpy.complex128) for m in ms]
    result = scipy.linalg.block_diag(*arrays)
    check_dimension(max(result.shape))
    return typing.cast(ComplexArray, numpy.asarray(result, dtype=numpy.complex128))


def min_eigenvalue(h: MatrixLike) -> float:
    return float(eig_hermitian(h).eigenvalues[-1])


def is_psd(h: MatrixLike, tolerance: float = 1e-9) -> bool:
    return min_eigenvalue(h) >= -tolerance


def is_unitary(u: MatrixLike, tolerance: float = 1e-10) -> bool:
    a = numpy.asarray(u, dtype=numpy.complex128)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(numpy.max(numpy.abs(a.conj().T @ a - numpy.eye(a.shape[0]))) < tolerance)


def ket(d: int, i: int) -> ComplexArray:
    v = numpy.zeros(d, dtype=numpy.complex128)
    v[i] = 1.0
    return v


def projector(v: MatrixLike) -> ComplexArray:
    a = numpy.asarray(v, dtype=numpy.complex128).reshape(-1)
    return typing.cast(ComplexArray, numpy.outer(a, a.conj()))


def maximally_entangled_vector(d: int) -> ComplexArray:
    """Normalized Σ_i |i⟩|i⟩/√d on C^d ⊗ C^d."""
    return typing.cast(ComplexArray, numpy.eye(d, dtype=numpy.complex128).reshape(-1) / math.sqrt(d))


def random_unitary(d: int, rng: numpy.random.Generator) -> ComplexArray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = numpy.linalg.qr(z)
    phases = numpy.diag(r) / numpy.abs(numpy.diag(r))
    return typing.cast(ComplexArray, q * phases)


def random_density(d: int, rng: numpy.random.Generator, rank: typing.Optional[int] = None) -> ComplexArray:
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    return typing.cast(ComplexArray, rho / numpy.trace(rho).real)


def random_hermitian(d: int, rng: numpy.random.Generator) -> ComplexArray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return typing.cast(ComplexArray, (g + g.conj().T) / 2)


def orthonormal_range(p: MatrixLike, r: int) -> ComplexArray:
    """Orthonormal basis (columns) of the range of projection p with rank r.

    Columns are chosen by pivoted QR and sign-fixed so that a coordinate projection yields
    the matching standard basis vectors in increasing index order.
    """
    a = numpy.asarray(p, dtype=numpy.complex128)
    if r == 0:
        return numpy.zeros((a.shape[0], 0), dtype=numpy.complex128)
    _, _, pivots = scipy.linalg.qr(a, pivoting=True, mode="economic")
    columns = numpy.sort(pivots[:r])
    q, rr = numpy.linalg.qr(a[:, columns])
    diag = numpy.diag(rr)
    phases = numpy.where(numpy.abs(diag) > 0, diag / numpy.where(numpy.abs(diag) > 0, numpy.abs(diag), 1.0), 1.0)
    return typing.cast(ComplexArray, q * phases)
