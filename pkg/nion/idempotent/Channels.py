"""
Idempotent channels and their algebraic structure.

Two representations are used throughout:

BlockIdempotent
    a basis change U and blocks (d_A, d_B, ω) so that the channel acts as ⊕_l id_{A_l} ⊗ R_{ω_l}
    in the rotated basis. Index layout: block l occupies offset_l + a·d_B + b.

Superoperator
    a d²×d² transfer matrix acting on row-major vectorized operators, with a lazily computed
    Choi matrix J = Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|) (input factor first).

The structure extraction (fixed point algebra, block decomposition, three-layer decomposition)
turns a Superoperator back into block data.
"""

from __future__ import annotations

# standard libraries
import dataclasses
import itertools
import logging
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.linalg

# local libraries
from nion.idempotent import Matrix
from nion.idempotent import States
from nion.idempotent import Validator

_logger = logging.getLogger(__name__)

IDEMPOTENT_TOLERANCE = 1e-8
ALGEBRA_TOLERANCE = 1e-8
COLLISION_TOLERANCE = 1e-7
STRUCTURE_TOLERANCE = 1e-9
MAX_SPLIT_ATTEMPTS = 8
CENTER_TOLERANCE = 1e-7
PART_TOLERANCE = 1e-6


@dataclasses.dataclass(frozen=True)
class Block:
    """One summand id_{A} ⊗ R_ω of a block-form idempotent channel."""
    d_a: int
    d_b: int
    omega: Matrix.ComplexArray


class BlockIdempotent:
    """An idempotent channel given by a basis change and per-block replacer data."""

    def __init__(self, blocks: typing.Sequence[Block], basis_change: typing.Optional[Matrix.MatrixLike] = None) -> None:
        if len(blocks) == 0:
            raise Validator.ValidationError("a block channel needs at least one block")
        checked: typing.List[Block] = list()
        for index, block in enumerate(blocks):
            d_a = Validator.IntegerRangeValidator("d_A of block {}".format(index), 1).validate(block.d_a)
            d_b = Validator.IntegerRangeValidator("d_B of block {}".format(index), 1).validate(block.d_b)
            omega = States.DensityMatrix(block.omega).matrix
            if omega.shape[0] != d_b:
                raise Validator.ValidationError("omega of block {} has dimension {}, expected d_B = {}".format(index, omega.shape[0], d_b))
            eigenvalues = Matrix.eig_hermitian(omega).eigenvalues
            if eigenvalues[-1] <= Matrix.rank_cutoff(eigenvalues):
                raise Validator.ValidationError("omega of block {} is rank-deficient (smallest eigenvalue {:.3e})".format(index, eigenvalues[-1]))
            checked.append(Block(d_a, d_b, omega))
        total = sum(b.d_a * b.d_b for b in checked)
        Matrix.check_dimension(total, "channel dimension")
        if basis_change is None:
            u = numpy.eye(total, dtype=numpy.complex128)
        else:
            u = Matrix.as_matrix(basis_change)
            if u.shape[0] != total:
                raise Validator.ValidationError("basis change has dimension {}, blocks need {}".format(u.shape[0], total))
            if not Matrix.is_unitary(u, 1e-9):
                raise Validator.ValidationError("basis change is not unitary")
        u.setflags(write=False)
        self.__blocks = tuple(checked)
        self.__basis_change = u
        self.__offsets = tuple(int(x) for x in numpy.cumsum([0] + [b.d_a * b.d_b for b in checked])[:-1])
        self.__superoperator: typing.Optional[Superoperator] = None

    @classmethod
    def identity(cls, d: int) -> BlockIdempotent:
        return cls([Block(d, 1, numpy.ones((1, 1), dtype=numpy.complex128))])

    @classmethod
    def replacer(cls, omega: Matrix.MatrixLike) -> BlockIdempotent:
        w = Matrix.as_matrix(omega)
        return cls([Block(1, w.shape[0], w)])

    @classmethod
    def dephasing(cls, d: int, basis: typing.Optional[Matrix.MatrixLike] = None) -> BlockIdempotent:
        """Full dephasing in the columns of basis (computational basis by default)."""
        one = numpy.ones((1, 1), dtype=numpy.complex128)
        return cls([Block(1, 1, one) for _ in range(d)], basis)

    @classmethod
    def conditional_expectation(cls, dims: typing.Sequence[typing.Tuple[int, int]], basis_change: typing.Optional[Matrix.MatrixLike] = None) -> BlockIdempotent:
        """Trace-preserving conditional expectation onto ⊕ B(A_l) ⊗ 1_{B_l}."""
        return cls([Block(a, b, numpy.eye(b, dtype=numpy.complex128) / b) for a, b in dims], basis_change)

    @property
    def blocks(self) -> typing.Tuple[Block, ...]:
        return self.__blocks

    @property
    def basis_change(self) -> Matrix.ComplexArray:
        return self.__basis_change

    @property
    def offsets(self) -> typing.Tuple[int, ...]:
        return self.__offsets

    @property
    def total_dim(self) -> int:
        return int(self.__basis_change.shape[0])

    @property
    def dim(self) -> int:
        return self.total_dim

    @property
    def block_dims(self) -> typing.List[typing.Tuple[int, int]]:
        return [(b.d_a, b.d_b) for b in self.__blocks]

    def _block_slices(self) -> typing.Iterator[typing.Tuple[Block, slice]]:
        for block, offset in zip(self.__blocks, self.__offsets):
            yield block, slice(offset, offset + block.d_a * block.d_b)

    def apply(self, x: Matrix.MatrixLike) -> Matrix.ComplexArray:
        u = self.__basis_change
        xr = u.conj().T @ numpy.asarray(x, dtype=numpy.complex128) @ u
        out = numpy.zeros_like(xr)
        for block, sl in self._block_slices():
            sub = xr[sl, sl].reshape(block.d_a, block.d_b, block.d_a, block.d_b)
            x_a = numpy.einsum("ibjb->ij", sub)
            out[sl, sl] = numpy.kron(x_a, block.omega)
        return typing.cast(Matrix.ComplexArray, u @ out @ u.conj().T)

    def adjoint_apply(self, y: Matrix.MatrixLike) -> Matrix.ComplexArray:
        u = self.__basis_change
        yr = u.conj().T @ numpy.asarray(y, dtype=numpy.complex128) @ u
        out = numpy.zeros_like(yr)
        for block, sl in self._block_slices():
            sub = yr[sl, sl].reshape(block.d_a, block.d_b, block.d_a, block.d_b)
            y_a = numpy.einsum("ibjc,cb->ij", sub, block.omega)
            out[sl, sl] = numpy.kron(y_a, numpy.eye(block.d_b))
        return typing.cast(Matrix.ComplexArray, u @ out @ u.conj().T)

    def to_superoperator(self) -> Superoperator:
        if self.__superoperator is None:
            self.__superoperator = Superoperator.from_function(self.total_dim, self.apply)
        return self.__superoperator

    @property
    def choi(self) -> Matrix.ComplexArray:
        return self.to_superoperator().choi

    def __repr__(self) -> str:
        return "BlockIdempotent(dim={}, blocks={})".format(self.total_dim, self.block_dims)


class Superoperator:
    """A linear map on B(C^d) stored as its transfer matrix on row-major vectorized operators."""

    def __init__(self, transfer: Matrix.MatrixLike) -> None:
        t = numpy.array(transfer, dtype=numpy.complex128)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise Validator.ValidationError("transfer matrix must be square, got shape {}".format(t.shape))
        d = int(round(math.sqrt(t.shape[0])))
        if d * d != t.shape[0]:
            raise Validator.ValidationError("transfer matrix size {} is not a square dimension".format(t.shape[0]))
        Matrix.check_dimension(t.shape[0], "transfer matrix dimension")
        if not numpy.all(numpy.isfinite(t)):
            raise Validator.ValidationError("transfer matrix has non-finite entries")
        t.setflags(write=False)
        self.__transfer = t
        self.__dim = d
        self.__choi: typing.Optional[Matrix.ComplexArray] = None

    @classmethod
    def from_choi(cls, choi: Matrix.MatrixLike, *, check_channel: bool = True) -> Superoperator:
        j = Matrix.as_matrix(choi)
        d = int(round(math.sqrt(j.shape[0])))
        if d * d != j.shape[0]:
            raise Validator.ValidationError("Choi matrix size {} is not a square dimension".format(j.shape[0]))
        t = j.reshape(d, d, d, d).transpose(1, 3, 0, 2).reshape(d * d, d * d)
        s = cls(t)
        if check_channel:
            s.check_channel()
        return s

    @classmethod
    def from_kraus(cls, kraus: typing.Sequence[Matrix.MatrixLike], *, check_channel: bool = True) -> Superoperator:
        if len(kraus) == 0:
            raise Validator.ValidationError("Kraus list is empty")
        ks = [Matrix.as_matrix(k) for k in kraus]
        if any(k.shape != ks[0].shape for k in ks):
            raise Validator.ValidationError("Kraus operators have inconsistent shapes")
        s = cls(sum(numpy.kron(k, k.conj()) for k in ks))
        if check_channel:
            s.check_channel()
        return s

    @classmethod
    def from_function(cls, d: int, fn: typing.Callable[[Matrix.ComplexArray], Matrix.MatrixLike]) -> Superoperator:
        Matrix.check_dimension(d * d, "transfer matrix dimension")
        t = numpy.zeros((d * d, d * d), dtype=numpy.complex128)
        for i in range(d):
            for j in range(d):
                unit = numpy.zeros((d, d), dtype=numpy.complex128)
                unit[i, j] = 1.0
                t[:, i * d + j] = numpy.asarray(fn(unit), dtype=numpy.complex128).reshape(-1)
        return cls(t)

    @classmethod
    def identity(cls, d: int) -> Superoperator:
        return cls(numpy.eye(d * d, dtype=numpy.complex128))

    @classmethod
    def unitary(cls, u: Matrix.MatrixLike) -> Superoperator:
        return cls.from_kraus([u])

    @property
    def dim(self) -> int:
        return self.__dim

    @property
    def transfer(self) -> Matrix.ComplexArray:
        return self.__transfer

    @property
    def choi(self) -> Matrix.ComplexArray:
        if self.__choi is None:
            d = self.__dim
            j = self.__transfer.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
            j = numpy.ascontiguousarray(j)
            j.setflags(write=False)
            self.__choi = j
        return self.__choi

    def apply(self, x: Matrix.MatrixLike) -> Matrix.ComplexArray:
        a = numpy.asarray(x, dtype=numpy.complex128)
        if a.shape != (self.__dim, self.__dim):
            raise Validator.ValidationError("operator shape {} does not match channel dimension {}".format(a.shape, self.__dim))
        return typing.cast(Matrix.ComplexArray, (self.__transfer @ a.reshape(-1)).reshape(self.__dim, self.__dim))

    def adjoint_apply(self, y: Matrix.MatrixLike) -> Matrix.ComplexArray:
        a = numpy.asarray(y, dtype=numpy.complex128)
        if a.shape != (self.__dim, self.__dim):
            raise Validator.ValidationError("operator shape {} does not match channel dimension {}".format(a.shape, self.__dim))
        return typing.cast(Matrix.ComplexArray, (self.__transfer.conj().T @ a.reshape(-1)).reshape(self.__dim, self.__dim))

    def adjoint(self) -> Superoperator:
        return Superoperator(self.__transfer.conj().T)

    def compose(self, other: Superoperator) -> Superoperator:
        """self ∘ other."""
        if other.dim != self.__dim:
            raise Validator.ValidationError("cannot compose channels of dimensions {} and {}".format(self.__dim, other.dim))
        return Superoperator(self.__transfer @ other.transfer)

    def __matmul__(self, other: Superoperator) -> Superoperator:
        return self.compose(other)

    def power(self, n: int) -> Superoperator:
        n = Validator.IntegerRangeValidator("power", 0).validate(n)
        return Superoperator(numpy.linalg.matrix_power(self.__transfer, n))

    def kron(self, other: Superoperator) -> Superoperator:
        """The product channel self ⊗ other on C^{d1} ⊗ C^{d2}."""
        d1, d2 = self.__dim, other.dim
        t1 = self.__transfer.reshape(d1, d1, d1, d1)
        t2 = other.transfer.reshape(d2, d2, d2, d2)
        t = numpy.einsum("abij,cdkl->acbdikjl", t1, t2).reshape((d1 * d2) ** 2, (d1 * d2) ** 2)
        return Superoperator(t)

    def mix(self, other: Superoperator, weight: float) -> Superoperator:
        """(1 − weight)·self + weight·other."""
        weight = Validator.RealRangeValidator("mixing weight", 0.0, 1.0).validate(weight)
        if other.dim != self.__dim:
            raise Validator.ValidationError("cannot mix channels of dimensions {} and {}".format(self.__dim, other.dim))
        return Superoperator((1 - weight) * self.__transfer + weight * other.transfer)

    def cp_residual(self) -> float:
        return min(0.0, Matrix.min_eigenvalue(self.choi))

    def tp_residual(self) -> float:
        reduced = Matrix.partial_trace(self.choi, [self.__dim, self.__dim], [0])
        return float(numpy.max(numpy.abs(reduced - numpy.eye(self.__dim))))

    def is_unital(self, tolerance: float = 1e-9) -> bool:
        image = self.apply(numpy.eye(self.__dim, dtype=numpy.complex128))
        return bool(numpy.max(numpy.abs(image - numpy.eye(self.__dim))) <= tolerance)

    def check_channel(self, tolerance: float = 1e-9) -> None:
        cp = self.cp_residual()
        if cp < -tolerance:
            raise Validator.ValidationError("map is not completely positive: Choi eigenvalue {:.3e}".format(cp))
        tp = self.tp_residual()
        if tp > tolerance:
            raise Validator.ValidationError("map is not trace preserving: residual {:.3e}".format(tp))

    def is_channel(self, tolerance: float = 1e-9) -> bool:
        return self.cp_residual() >= -tolerance and self.tp_residual() <= tolerance

    def __repr__(self) -> str:
        return "Superoperator(dim={})".format(self.__dim)


ChannelLike = typing.Union[BlockIdempotent, Superoperator]


def as_superoperator(ch: ChannelLike) -> Superoperator:
    return ch.to_superoperator() if isinstance(ch, BlockIdempotent) else ch


def apply(ch: ChannelLike, rho: States.StateLike) -> typing.Any:
    """Apply a channel; a DensityMatrix input yields a DensityMatrix, an array yields an array."""
    x = rho.matrix if isinstance(rho, States.DensityMatrix) else numpy.asarray(rho, dtype=numpy.complex128)
    if x.shape != (ch.dim, ch.dim):
        raise Validator.ValidationError("state dimension {} does not match channel dimension {}".format(x.shape[0], ch.dim))
    out = ch.apply(x)
    if isinstance(rho, States.DensityMatrix):
        return States.DensityMatrix(out)
    return out


def adjoint_apply(ch: ChannelLike, x: Matrix.MatrixLike) -> Matrix.ComplexArray:
    a = numpy.asarray(x, dtype=numpy.complex128)
    if a.shape != (ch.dim, ch.dim):
        raise Validator.ValidationError("operator dimension {} does not match channel dimension {}".format(a.shape[0], ch.dim))
    return ch.adjoint_apply(a)


def choi(ch: ChannelLike) -> Matrix.ComplexArray:
    return ch.choi


def apply_with_reference(ch: ChannelLike, x: Matrix.MatrixLike, ref_dim: int) -> Matrix.ComplexArray:
    """(id_R ⊗ ch)(x) for an operator x on C^{ref_dim} ⊗ C^d, reference factor first."""
    t = as_superoperator(ch).transfer
    d = ch.dim
    a = numpy.asarray(x, dtype=numpy.complex128)
    if a.shape != (ref_dim * d, ref_dim * d):
        raise Validator.ValidationError("operator dimension {} does not match reference {} times channel {}".format(a.shape[0], ref_dim, d))
    grouped = a.reshape(ref_dim, d, ref_dim, d).transpose(0, 2, 1, 3).reshape(ref_dim * ref_dim, d * d)
    out = (grouped @ t.T).reshape(ref_dim, ref_dim, d, d).transpose(0, 2, 1, 3)
    return typing.cast(Matrix.ComplexArray, out.reshape(ref_dim * d, ref_dim * d))


def cp_order_holds(phi: ChannelLike, psi: ChannelLike, c: float, tolerance: float = 1e-8) -> typing.Tuple[bool, float]:
    """Whether c·Ψ − Φ is completely positive, with the smallest eigenvalue of its Choi matrix."""
    smallest = Matrix.min_eigenvalue(c * choi(psi) - choi(phi))
    return smallest >= -tolerance, smallest


def is_idempotent(ch: ChannelLike) -> typing.Tuple[bool, float]:
    t = as_superoperator(ch).transfer
    residual = float(numpy.max(numpy.abs(t @ t - t)))
    return residual < IDEMPOTENT_TOLERANCE, residual


def _check_full_rank_unit_image(s: Superoperator) -> None:
    image = s.apply(numpy.eye(s.dim, dtype=numpy.complex128))
    eigenvalues = Matrix.eig_hermitian(image).eigenvalues
    if eigenvalues[-1] <= Matrix.rank_cutoff(eigenvalues):
        raise Validator.ValidationError("the channel maps the identity to a rank-deficient operator; "
                                        "the full-rank unit image hypothesis fails")


def operator_vectors(basis: typing.Sequence[Matrix.ComplexArray]) -> Matrix.ComplexArray:
    return typing.cast(Matrix.ComplexArray, numpy.stack([numpy.asarray(x).reshape(-1) for x in basis], axis=1))


def span_residual(vectors: Matrix.ComplexArray, candidates: Matrix.ComplexArray) -> float:
    """Largest distance of candidate columns from the span of orthonormal columns."""
    if candidates.size == 0:
        return 0.0
    projected = vectors @ (vectors.conj().T @ candidates)
    return float(numpy.max(numpy.linalg.norm(candidates - projected, axis=0)))


def _random_elements(basis: typing.Sequence[Matrix.ComplexArray], rng: numpy.random.Generator, count: int) -> typing.List[Matrix.ComplexArray]:
    stack = numpy.stack(basis)
    elements = list()
    for _ in range(count):
        c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
        elements.append(numpy.tensordot(c, stack, axes=1))
    return elements


def closure_residual(basis: typing.Sequence[Matrix.ComplexArray], rng: typing.Optional[numpy.random.Generator] = None) -> float:
    """How far span(basis) is from being closed under products and adjoints.

    All pairwise products are checked for small bases; larger bases are checked on random
    elements, which detect any escaping product almost surely.
    """
    vectors = operator_vectors(basis)
    m = len(basis)
    d = basis[0].shape[0]
    adjoints = operator_vectors([x.conj().T for x in basis])
    residual = span_residual(vectors, adjoints)
    if m * m <= 4096:
        stack = numpy.stack(basis)
        products = numpy.einsum("iab,jbc->ijac", stack, stack).reshape(m * m, d * d).T
    else:
        rng = rng if rng is not None else numpy.random.default_rng(0)
        xs = _random_elements(basis, rng, 8)
        ys = _random_elements(basis, rng, 8)
        products = operator_vectors([x @ y / (numpy.linalg.norm(x) * numpy.linalg.norm(y)) for x, y in zip(xs, ys)])
    return max(residual, span_residual(vectors, products))


def fixed_point_algebra(ch: ChannelLike) -> typing.List[Matrix.ComplexArray]:
    """Hilbert-Schmidt orthonormal basis of im(ch*), the image of the adjoint of an idempotent channel."""
    s = as_superoperator(ch)
    idempotent, residual = is_idempotent(s)
    if not idempotent:
        raise Validator.ValidationError("channel is not idempotent (residual {:.3e})".format(residual))
    _check_full_rank_unit_image(s)
    columns = scipy.linalg.orth(s.transfer.conj().T, rcond=1e-9)
    d = s.dim
    basis = [numpy.ascontiguousarray(columns[:, i].reshape(d, d)) for i in range(columns.shape[1])]
    closure = closure_residual(basis)
    if closure > ALGEBRA_TOLERANCE:
        raise Validator.ValidationError("image of the adjoint is not a *-algebra (closure residual {:.3e})".format(closure))
    return basis


@dataclasses.dataclass(frozen=True)
class AlgebraBlocks:
    """U and dims with U† (algebra) U = ⊕_l B(A_l) ⊗ 1_{B_l}."""
    a: typing.Tuple[int, ...]
    b: typing.Tuple[int, ...]
    basis_change: Matrix.ComplexArray

    @property
    def offsets(self) -> typing.Tuple[int, ...]:
        return tuple(int(x) for x in numpy.cumsum([0] + [a * b for a, b in zip(self.a, self.b)])[:-1])

    def block_slice(self, l: int) -> slice:
        offset = self.offsets[l]
        return slice(offset, offset + self.a[l] * self.b[l])

    def central_projection(self, l: int) -> Matrix.ComplexArray:
        v = self.basis_change[:, self.block_slice(l)]
        return typing.cast(Matrix.ComplexArray, v @ v.conj().T)


class _Collision(Exception):
    pass


def eigenvalue_clusters(values: Matrix.RealArray) -> typing.List[typing.List[int]]:
    """Group ascending eigenvalues whose neighbours are closer than the collision tolerance."""
    scale = max(1.0, float(numpy.max(numpy.abs(values)))) if values.size else 1.0
    groups: typing.List[typing.List[int]] = [[0]] if values.size else []
    for i in range(1, values.size):
        if values[i] - values[i - 1] < COLLISION_TOLERANCE * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _split_factor(h: Matrix.ComplexArray, y: Matrix.ComplexArray, a: int, b: int) -> Matrix.ComplexArray:
    """Unitary W with W† (x ⊗ 1_b) W in standard tensor order, given h = h_A ⊗ 1_b, y = y_A ⊗ 1_b in an unknown basis.

    Columns are ordered with the A index outer. Raises _Collision on degenerate random elements.
    """
    n = h.shape[0]
    w, v = scipy.linalg.eigh((h + h.conj().T) / 2)
    groups = eigenvalue_clusters(w)
    if len(groups) != a or any(len(g) != b for g in groups):
        raise _Collision()
    first = v[:, groups[0]]
    columns = [first]
    y_scale = max(float(numpy.linalg.norm(y)), 1e-300)
    for group in groups[1:]:
        vg = v[:, group]
        block = vg @ (vg.conj().T @ (y @ first))
        norm = float(numpy.linalg.norm(block[:, 0]))
        if norm < 1e-6 * y_scale:
            raise _Collision()
        columns.append(block / norm)
    unitary, _ = scipy.linalg.polar(numpy.hstack(columns))
    assert unitary.shape == (n, n)
    return typing.cast(Matrix.ComplexArray, unitary)


def _hermitian_element(basis: typing.Sequence[Matrix.ComplexArray], rng: numpy.random.Generator) -> Matrix.ComplexArray:
    x = _random_elements(basis, rng, 1)[0]
    return typing.cast(Matrix.ComplexArray, (x + x.conj().T) / 2)


def _center(basis: typing.Sequence[Matrix.ComplexArray], rng: numpy.random.Generator) -> typing.Tuple[typing.List[Matrix.ComplexArray], int]:
    """Hermitian spanning set of the center, from the commutation system Σ c_j [X_j, G] = 0.

    The identity is always central and leads the list; the returned dimension is at least one.
    """
    m = len(basis)
    d = basis[0].shape[0]
    generators = list(basis) if m * m * d * d <= 2_000_000 else _random_elements(basis, rng, 6)
    stack = numpy.stack(basis)
    rows = list()
    for g in generators:
        commutators = numpy.einsum("jab,bc->jac", stack, g) - numpy.einsum("ab,jbc->jac", g, stack)
        rows.append(commutators.reshape(m, d * d).T)
    system = numpy.vstack(rows)
    _, s, vh = scipy.linalg.svd(system, full_matrices=True)
    singular = numpy.zeros(m)
    singular[:s.size] = s
    tolerance = CENTER_TOLERANCE * max(float(numpy.linalg.norm(system, 2)), 1.0)
    null = vh[singular <= tolerance].conj().T
    center = [numpy.eye(d, dtype=numpy.complex128)]
    for i in range(null.shape[1]):
        z = numpy.tensordot(null[:, i], stack, axes=1)
        center.append((z + z.conj().T) / 2)
        center.append((z - z.conj().T) / 2j)
    return center, max(int(null.shape[1]), 1)


def _central_projections(basis: typing.Sequence[Matrix.ComplexArray], rng: numpy.random.Generator) -> typing.List[Matrix.ComplexArray]:
    center, dimension = _center(basis, rng)
    if dimension == 1:
        return [center[0]]
    for attempt in range(MAX_SPLIT_ATTEMPTS):
        coefficients = rng.standard_normal(len(center))
        z = sum(c * x for c, x in zip(coefficients, center))
        z = z / max(float(numpy.max(numpy.abs(z))), 1e-300)
        w, v = scipy.linalg.eigh((z + z.conj().T) / 2)
        groups = eigenvalue_clusters(w)
        if len(groups) == dimension:
            return [v[:, g] @ v[:, g].conj().T for g in groups]
        _logger.debug("central element collision (attempt %d): %d clusters for center of dimension %d", attempt + 1, len(groups), dimension)
    raise Validator.ValidationError("could not separate minimal central projections after {} attempts".format(MAX_SPLIT_ATTEMPTS))


def _first_index(p: Matrix.ComplexArray) -> int:
    diagonal = numpy.real(numpy.diag(p))
    return int(numpy.argmax(diagonal > 1e-8))


def _compressed_dimension(basis: typing.Sequence[Matrix.ComplexArray], v: Matrix.ComplexArray) -> int:
    compressed = operator_vectors([v.conj().T @ x @ v for x in basis])
    return int(numpy.linalg.matrix_rank(compressed, tol=1e-8))


def _block_sparsity_residual(basis: typing.Sequence[Matrix.ComplexArray], blocks: AlgebraBlocks) -> float:
    u = blocks.basis_change
    residual = 0.0
    for x in basis:
        xr = u.conj().T @ x @ u
        expected = numpy.zeros_like(xr)
        for l, (a, b) in enumerate(zip(blocks.a, blocks.b)):
            sl = blocks.block_slice(l)
            x_a = Matrix.partial_trace(xr[sl, sl], [a, b], [0]) / b
            expected[sl, sl] = numpy.kron(x_a, numpy.eye(b))
        residual = max(residual, float(numpy.max(numpy.abs(xr - expected))))
    return residual


def algebra_blocks(basis: typing.Sequence[Matrix.ComplexArray], rng: typing.Optional[numpy.random.Generator] = None) -> AlgebraBlocks:
    """Decompose a unital *-algebra given by a basis into ⊕_l B(A_l) ⊗ 1_{B_l}.

    The center is found from the commutation system, a random self-adjoint central element
    yields the minimal central projections, and a random self-adjoint element splits each
    central block into its matrix factor and multiplicity. Blocks are sorted by (a, b, first
    basis index).
    """
    rng = rng if rng is not None else numpy.random.default_rng(0)
    if len(basis) == 0:
        raise Validator.ValidationError("algebra basis is empty")
    d = basis[0].shape[0]
    closure = closure_residual(basis, rng)
    if closure > ALGEBRA_TOLERANCE:
        raise Validator.ValidationError("basis is not closed under products and adjoints (residual {:.3e})".format(closure))
    if span_residual(operator_vectors(basis), numpy.eye(d, dtype=numpy.complex128).reshape(-1, 1)) > ALGEBRA_TOLERANCE:
        raise Validator.ValidationError("algebra does not contain the identity")
    pieces = list()
    for p in _central_projections(basis, rng):
        n = int(round(numpy.trace(p).real))
        v = Matrix.orthonormal_range(p, n)
        a2 = _compressed_dimension(basis, v)
        a = int(round(math.sqrt(a2)))
        if a * a != a2 or n % a != 0:
            raise Validator.ValidationError("central block of dimension {} carries an algebra of dimension {}, not a full matrix factor".format(n, a2))
        b = n // a
        pieces.append((a, b, _first_index(p), v))
    pieces.sort(key=lambda piece: piece[:3])
    columns = list()
    for a, b, _, v in pieces:
        if a == 1 or b == 1:
            columns.append(v)
            continue
        for attempt in range(MAX_SPLIT_ATTEMPTS):
            h = _hermitian_element(basis, rng)
            y = _random_elements(basis, rng, 1)[0]
            try:
                columns.append(v @ _split_factor(v.conj().T @ h @ v, v.conj().T @ y @ v, a, b))
                break
            except _Collision:
                _logger.debug("factor split collision (attempt %d) for block a=%d b=%d", attempt + 1, a, b)
        else:
            raise Validator.ValidationError("could not split a block of dims ({}, {}) after {} attempts".format(a, b, MAX_SPLIT_ATTEMPTS))
    result = AlgebraBlocks(tuple(p[0] for p in pieces), tuple(p[1] for p in pieces), numpy.hstack(columns))
    residual = _block_sparsity_residual(basis, result)
    if residual > ALGEBRA_TOLERANCE:
        raise Validator.ValidationError("block decomposition failed verification (residual {:.3e})".format(residual))
    return result


def block_form(ch: ChannelLike, rng: typing.Optional[numpy.random.Generator] = None) -> BlockIdempotent:
    """Recover the block data of an idempotent channel with full-rank unit image."""
    if isinstance(ch, BlockIdempotent):
        return ch
    basis = fixed_point_algebra(ch)
    blocks = algebra_blocks(basis, rng)
    u = blocks.basis_change
    extracted = list()
    for l, (a, b) in enumerate(zip(blocks.a, blocks.b)):
        offset = blocks.offsets[l]
        column = u[:, offset]
        out = u.conj().T @ ch.apply(numpy.outer(column, column.conj())) @ u
        omega = out[offset:offset + b, offset:offset + b]
        extracted.append(Block(a, b, omega / numpy.trace(omega).real))
    result = BlockIdempotent(extracted, u)
    residual = float(numpy.max(numpy.abs(result.choi - ch.choi)))
    if residual > 1e-8:
        raise Validator.ValidationError("recovered block form does not reproduce the channel (residual {:.3e})".format(residual))
    return result


def inclusion_holds(p: ChannelLike, q: ChannelLike) -> bool:
    """Whether im(q*) ⊆ im(p*)."""
    basis_p = fixed_point_algebra(p)
    basis_q = fixed_point_algebra(q)
    return span_residual(operator_vectors(basis_p), operator_vectors(basis_q)) <= ALGEBRA_TOLERANCE


@dataclasses.dataclass(frozen=True)
class InvariantState:
    state: States.DensityMatrix
    residual: float
    full_rank: bool


def common_invariant_state(p: ChannelLike, q: ChannelLike) -> typing.Optional[InvariantState]:
    """A maximal-rank state fixed by both channels, or None."""
    sp, sq = as_superoperator(p), as_superoperator(q)
    if sp.dim != sq.dim:
        raise Validator.ValidationError("channels have dimensions {} and {}".format(sp.dim, sq.dim))
    d = sp.dim
    identity = numpy.eye(d * d)
    null = scipy.linalg.null_space(numpy.vstack([sp.transfer - identity, sq.transfer - identity]), rcond=1e-10)
    parts = list()
    for i in range(null.shape[1]):
        x = null[:, i].reshape(d, d)
        # thresholds relative to the null vector; parts at rounding-noise scale are skipped
        scale = float(numpy.max(numpy.abs(x)))
        cutoff = Matrix.RANK_TOLERANCE * scale
        for h in ((x + x.conj().T) / 2, (x - x.conj().T) / 2j):
            if float(numpy.linalg.norm(h)) <= PART_TOLERANCE * scale:
                continue
            e = Matrix.eig_hermitian(h)
            for sign in (1.0, -1.0):
                mask = sign * e.eigenvalues > cutoff
                if numpy.any(mask) and float(numpy.sum(e.eigenvalues[mask] * sign)) > PART_TOLERANCE * scale:
                    v = e.eigenvectors[:, mask]
                    part = (v * (sign * e.eigenvalues[mask])) @ v.conj().T
                    parts.append(part / numpy.trace(part).real)
    if not parts:
        return None
    tau = sum(parts) / len(parts)
    residual = max(float(numpy.max(numpy.abs(sp.apply(tau) - tau))), float(numpy.max(numpy.abs(sq.apply(tau) - tau))))
    if residual >= 1e-9:
        _logger.debug("joint fixed point candidate rejected with residual %.3e", residual)
        return None
    eigenvalues = Matrix.eig_hermitian(tau).eigenvalues
    full_rank = bool(eigenvalues[-1] > Matrix.rank_cutoff(eigenvalues))
    return InvariantState(States.DensityMatrix(tau), residual, full_rank)


def multiplicative_domain_member(ch: ChannelLike, projection: Matrix.MatrixLike) -> bool:
    """Rank test for membership of a projection in the multiplicative domain of a unital channel."""
    p = Matrix.as_matrix(projection)
    if p.shape[0] != ch.dim:
        raise Validator.ValidationError("projection dimension {} does not match channel dimension {}".format(p.shape[0], ch.dim))
    if float(numpy.max(numpy.abs(p @ p - p))) > 1e-9 or Matrix.max_asymmetry(p) > 1e-9:
        raise Validator.ValidationError("operator is not an orthogonal projection")
    image_of_identity = ch.apply(numpy.eye(ch.dim, dtype=numpy.complex128))
    if float(numpy.max(numpy.abs(image_of_identity - numpy.eye(ch.dim)))) > 1e-9:
        raise Validator.ValidationError("channel is not unital")
    return Matrix.rank(ch.apply(p)) == Matrix.rank(p)


def tensor_power(ch: BlockIdempotent, n: int) -> BlockIdempotent:
    """n-fold tensor power in block form; blocks are indexed by lexicographic multi-indices."""
    n = Validator.IntegerRangeValidator("tensor power", 1, 3).validate(n)
    if n == 1:
        return ch
    d = ch.total_dim
    Matrix.check_dimension(d ** n, "tensor power dimension")
    blocks = ch.blocks
    new_blocks = list()
    permutation = list()
    for labels in itertools.product(range(len(blocks)), repeat=n):
        factors = [blocks[l] for l in labels]
        d_as = [b.d_a for b in factors]
        d_bs = [b.d_b for b in factors]
        new_blocks.append(Block(int(numpy.prod(d_as)), int(numpy.prod(d_bs)), Matrix.tensor(*[b.omega for b in factors])))
        for a_index in itertools.product(*[range(x) for x in d_as]):
            for b_index in itertools.product(*[range(x) for x in d_bs]):
                positions = [ch.offsets[l] + ai * db + bi for l, ai, bi, db in zip(labels, a_index, b_index, d_bs)]
                permutation.append(int(numpy.ravel_multi_index(positions, (d,) * n)))
    u = Matrix.tensor(*([ch.basis_change] * n))[:, permutation]
    return BlockIdempotent(new_blocks, u)


class ThreeLayer:
    """Nested decomposition H = ⊕_{k,l} A_l ⊗ B_{k,l} ⊗ C_k of two nested idempotent channels.

    P = ⊕_k id_{D_k} ⊗ R_{δ_k} with D_k = ⊕_l A_l ⊗ B_{k,l}, and Q = ⊕_l id_{A_l} ⊗ R_{ω_l} with
    E_l = ⊕_k B_{k,l} ⊗ C_k. In the rotated basis block k occupies a contiguous range with the
    D_k index outer and the C_k index inner; inside D_k the pieces follow l in order with the
    A_l index outer. All inclusion maps are index arrays computed from this layout.
    """

    def __init__(self, a: typing.Sequence[int], b: typing.Sequence[typing.Sequence[int]], c: typing.Sequence[int],
                 delta: typing.Sequence[Matrix.MatrixLike], omega: typing.Sequence[Matrix.MatrixLike],
                 basis_change: typing.Optional[Matrix.MatrixLike] = None,
                 p: typing.Optional[Matrix.MatrixLike] = None, tau: typing.Optional[typing.Mapping[typing.Tuple[int, int], Matrix.MatrixLike]] = None) -> None:
        self.__a = tuple(Validator.IntegerRangeValidator("a_l", 1).validate(x) for x in a)
        self.__c = tuple(Validator.IntegerRangeValidator("c_k", 1).validate(x) for x in c)
        b_array = numpy.array(b, dtype=int).reshape(len(self.__c), len(self.__a))
        if numpy.any(b_array < 0):
            raise Validator.ValidationError("b_kl must be non-negative")
        self.__b = b_array
        self.__b.setflags(write=False)
        if any(self.d(k) == 0 for k in range(self.K)):
            raise Validator.ValidationError("every D_k needs a nonempty piece")
        if any(self.e(l) == 0 for l in range(self.L)):
            raise Validator.ValidationError("every E_l needs a nonempty piece")
        total = self.total_dim
        Matrix.check_dimension(total, "three-layer dimension")
        if len(delta) != self.K or len(omega) != self.L:
            raise Validator.ValidationError("need {} delta and {} omega states, got {} and {}".format(self.K, self.L, len(delta), len(omega)))
        self.__delta = tuple(States.DensityMatrix(x).matrix for x in delta)
        for k, x in enumerate(self.__delta):
            if x.shape[0] != self.__c[k]:
                raise Validator.ValidationError("delta_{} has dimension {}, expected c_k = {}".format(k, x.shape[0], self.__c[k]))
            if Matrix.rank(x) < self.__c[k]:
                raise Validator.ValidationError("delta_{} is not full rank".format(k))
        self.__omega = tuple(States.DensityMatrix(x).matrix for x in omega)
        for l, x in enumerate(self.__omega):
            if x.shape[0] != self.e(l):
                raise Validator.ValidationError("omega_{} has dimension {}, expected e_l = {}".format(l, x.shape[0], self.e(l)))
        u = numpy.eye(total, dtype=numpy.complex128) if basis_change is None else Matrix.as_matrix(basis_change)
        if u.shape[0] != total or not Matrix.is_unitary(u, 1e-9):
            raise Validator.ValidationError("basis change must be a unitary of dimension {}".format(total))
        u.setflags(write=False)
        self.__basis_change = u
        self.__p: typing.Optional[Matrix.RealArray] = None
        self.__tau: typing.Dict[typing.Tuple[int, int], Matrix.ComplexArray] = dict()
        if p is not None and tau is not None:
            self.__set_common(numpy.array(p, dtype=float).reshape(self.K, self.L), tau)

    def __set_common(self, p: Matrix.RealArray, tau: typing.Mapping[typing.Tuple[int, int], Matrix.MatrixLike]) -> None:
        for l in range(self.L):
            if abs(float(numpy.sum(p[:, l])) - 1.0) > 1e-9:
                raise Validator.ValidationError("p column {} sums to {}, expected 1".format(l, numpy.sum(p[:, l])))
        taus = dict()
        for k, l in self.pieces():
            if p[k, l] <= 0:
                raise Validator.ValidationError("p_{},{} must be positive for a nonempty piece".format(k, l))
            t = States.DensityMatrix(tau[(k, l)]).matrix
            if t.shape[0] != self.__b[k, l] or Matrix.rank(t) < t.shape[0]:
                raise Validator.ValidationError("tau_{},{} must be a full-rank state of dimension {}".format(k, l, self.__b[k, l]))
            taus[(k, l)] = t
        for l in range(self.L):
            residual = float(numpy.max(numpy.abs(self.__omega[l] - self.__common_omega(l, p, taus))))
            if residual > STRUCTURE_TOLERANCE:
                raise Validator.ValidationError("omega_{} does not reconstruct from p and tau (residual {:.3e})".format(l, residual))
        p.setflags(write=False)
        self.__p = p
        self.__tau = taus

    def __common_omega(self, l: int, p: Matrix.RealArray, taus: typing.Mapping[typing.Tuple[int, int], Matrix.ComplexArray]) -> Matrix.ComplexArray:
        parts = [p[k, l] * numpy.kron(taus[(k, l)], self.__delta[k]) for k in range(self.K) if self.__b[k, l] > 0]
        return Matrix.direct_sum(*parts)

    @classmethod
    def from_common(cls, a: typing.Sequence[int], b: typing.Sequence[typing.Sequence[int]], c: typing.Sequence[int],
                    delta: typing.Sequence[Matrix.MatrixLike], p: Matrix.MatrixLike,
                    tau: typing.Mapping[typing.Tuple[int, int], Matrix.MatrixLike],
                    basis_change: typing.Optional[Matrix.MatrixLike] = None) -> ThreeLayer:
        """Build the instance whose ω_l = ⊕_k p_{k,l} τ_{k,l} ⊗ δ_k."""
        b_array = numpy.array(b, dtype=int).reshape(len(c), len(a))
        p_array = numpy.array(p, dtype=float).reshape(len(c), len(a))
        omega = list()
        for l in range(len(a)):
            parts = [p_array[k, l] * numpy.kron(numpy.asarray(tau[(k, l)], dtype=numpy.complex128), numpy.asarray(delta[k], dtype=numpy.complex128))
                     for k in range(len(c)) if b_array[k, l] > 0]
            omega.append(Matrix.direct_sum(*parts))
        return cls(a, b_array, c, delta, omega, basis_change, p_array, tau)

    @property
    def K(self) -> int:
        return len(self.__c)

    @property
    def L(self) -> int:
        return len(self.__a)

    @property
    def a(self) -> typing.Tuple[int, ...]:
        return self.__a

    @property
    def b(self) -> numpy.typing.NDArray[numpy.int_]:
        return self.__b

    @property
    def c(self) -> typing.Tuple[int, ...]:
        return self.__c

    @property
    def delta(self) -> typing.Tuple[Matrix.ComplexArray, ...]:
        return self.__delta

    @property
    def omega(self) -> typing.Tuple[Matrix.ComplexArray, ...]:
        return self.__omega

    @property
    def basis_change(self) -> Matrix.ComplexArray:
        return self.__basis_change

    @property
    def common_invariant(self) -> bool:
        return self.__p is not None

    @property
    def p(self) -> typing.Optional[Matrix.RealArray]:
        return self.__p

    def tau(self, k: int, l: int) -> Matrix.ComplexArray:
        if self.__p is None:
            raise Validator.ValidationError("instance has no common invariant state data")
        return self.__tau[(k, l)]

    def d(self, k: int) -> int:
        return int(sum(self.__a[l] * self.__b[k, l] for l in range(self.L)))

    def e(self, l: int) -> int:
        return int(sum(self.__b[k, l] * self.__c[k] for k in range(self.K)))

    @property
    def total_dim(self) -> int:
        return int(sum(self.d(k) * self.__c[k] for k in range(self.K)))

    def pieces(self) -> typing.Iterator[typing.Tuple[int, int]]:
        """Nonempty (k, l) pairs."""
        for k in range(self.K):
            for l in range(self.L):
                if self.__b[k, l] > 0:
                    yield k, l

    def block_offset(self, k: int) -> int:
        return int(sum(self.d(kk) * self.__c[kk] for kk in range(k)))

    def piece_offset(self, k: int, l: int) -> int:
        """Offset of A_l ⊗ B_{k,l} inside D_k."""
        return int(sum(self.__a[ll] * self.__b[k, ll] for ll in range(l)))

    def piece_indices(self, k: int, l: int) -> numpy.typing.NDArray[numpy.int_]:
        """Rotated-basis indices of A_l ⊗ B_{k,l} ⊗ C_k as an (a_l, b_kl, c_k) array."""
        a, b, c = self.__a[l], int(self.__b[k, l]), self.__c[k]
        ai, bi, ci = numpy.meshgrid(numpy.arange(a), numpy.arange(b), numpy.arange(c), indexing="ij")
        return typing.cast(numpy.typing.NDArray[numpy.int_], self.block_offset(k) + (self.piece_offset(k, l) + ai * b + bi) * c + ci)

    def e_indices(self, l: int) -> numpy.typing.NDArray[numpy.int_]:
        """Rotated-basis indices of A_l ⊗ E_l as an (a_l, e_l) array, E_l ordered by k then B then C."""
        parts = [self.piece_indices(k, l).reshape(self.__a[l], -1) for k in range(self.K) if self.__b[k, l] > 0]
        return typing.cast(numpy.typing.NDArray[numpy.int_], numpy.hstack(parts))

    def e_offset(self, k: int, l: int) -> int:
        """Offset of B_{k,l} ⊗ C_k inside E_l."""
        return int(sum(self.__b[kk, l] * self.__c[kk] for kk in range(k)))

    def p_channel(self) -> BlockIdempotent:
        return BlockIdempotent([Block(self.d(k), self.__c[k], self.__delta[k]) for k in range(self.K)], self.__basis_change)

    def q_channel(self) -> BlockIdempotent:
        permutation = numpy.concatenate([self.e_indices(l).reshape(-1) for l in range(self.L)])
        return BlockIdempotent([Block(self.__a[l], self.e(l), self.__omega[l]) for l in range(self.L)], self.__basis_change[:, permutation])

    def piece_isometry(self, k: int, l: int) -> Matrix.ComplexArray:
        """Columns spanning A_l ⊗ B_{k,l} ⊗ C_k in the computational basis."""
        return typing.cast(Matrix.ComplexArray, self.__basis_change[:, self.piece_indices(k, l).reshape(-1)])

    def tensor(self, other: ThreeLayer) -> ThreeLayer:
        """Product instance for two common-invariant decompositions, labels (k1, k2) and (l1, l2) lexicographic."""
        if self.__p is None or other.p is None:
            raise Validator.ValidationError("tensor products are built for common-invariant instances only")
        k_pairs = list(itertools.product(range(self.K), range(other.K)))
        l_pairs = list(itertools.product(range(self.L), range(other.L)))
        a = [self.__a[l1] * other.a[l2] for l1, l2 in l_pairs]
        c = [self.__c[k1] * other.c[k2] for k1, k2 in k_pairs]
        b = [[int(self.__b[k1, l1] * other.b[k2, l2]) for l1, l2 in l_pairs] for k1, k2 in k_pairs]
        delta = [numpy.kron(self.__delta[k1], other.delta[k2]) for k1, k2 in k_pairs]
        p = [[float(self.__p[k1, l1] * other.p[k2, l2]) for l1, l2 in l_pairs] for k1, k2 in k_pairs]
        tau = dict()
        for ki, (k1, k2) in enumerate(k_pairs):
            for li, (l1, l2) in enumerate(l_pairs):
                if b[ki][li] > 0:
                    tau[(ki, li)] = numpy.kron(self.tau(k1, l1), other.tau(k2, l2))
        product = ThreeLayer.from_common(a, b, c, delta, p, tau)
        d2 = other.total_dim
        new_to_old = numpy.zeros(product.total_dim, dtype=int)
        for ki, (k1, k2) in enumerate(k_pairs):
            for li, (l1, l2) in enumerate(l_pairs):
                if b[ki][li] == 0:
                    continue
                first = self.piece_indices(k1, l1)
                second = other.piece_indices(k2, l2)
                combined = first[:, None, :, None, :, None] * d2 + second[None, :, None, :, None, :]
                new_to_old[product.piece_indices(ki, li).reshape(-1)] = combined.reshape(-1)
        u = numpy.kron(self.__basis_change, other.basis_change)[:, new_to_old]
        return ThreeLayer.from_common(a, b, c, delta, p, tau, u)

    def __repr__(self) -> str:
        return "ThreeLayer(a={}, b={}, c={}, common_invariant={})".format(self.__a, self.__b.tolist(), self.__c, self.common_invariant)


def _compress(x: Matrix.ComplexArray, v: Matrix.ComplexArray, d: int, c: int) -> Matrix.ComplexArray:
    """x restricted to the range of v = D ⊗ C, traced over C and normalized by c."""
    return Matrix.partial_trace(v.conj().T @ x @ v, [d, c], [0]) / c


def three_layer_decompose(p: ChannelLike, q: ChannelLike, rng: typing.Optional[numpy.random.Generator] = None) -> ThreeLayer:
    """Simultaneous block decomposition of two nested idempotent channels (im q* ⊆ im p*)."""
    rng = rng if rng is not None else numpy.random.default_rng(0)
    sp, sq = as_superoperator(p), as_superoperator(q)
    if sp.dim != sq.dim:
        raise Validator.ValidationError("channels have dimensions {} and {}".format(sp.dim, sq.dim))
    basis_p = fixed_point_algebra(sp)
    basis_q = fixed_point_algebra(sq)
    if span_residual(operator_vectors(basis_p), operator_vectors(basis_q)) > ALGEBRA_TOLERANCE:
        raise Validator.ValidationError("the image of the adjoint of Q is not contained in that of P; "
                                        "the divergence is infinite (use infinite_divergence_witness)")
    outer = algebra_blocks(basis_p, rng)
    inner = algebra_blocks(basis_q, rng)
    a = inner.a
    central = [inner.central_projection(l) for l in range(len(a))]
    b = numpy.zeros((len(outer.a), len(a)), dtype=int)
    rotations = list()
    for k, (d_k, c_k) in enumerate(zip(outer.a, outer.b)):
        v_k = outer.basis_change[:, outer.block_slice(k)]
        ranges = list()
        for l in range(len(a)):
            q_kl = _compress(central[l], v_k, d_k, c_k)
            r = int(round(numpy.trace(q_kl).real))
            if r % a[l] != 0:
                raise Validator.ValidationError("piece ({}, {}) has dimension {} not divisible by a_l = {}".format(k, l, r, a[l]))
            b[k, l] = r // a[l]
            ranges.append(Matrix.orthonormal_range(q_kl, r))
        rotations.append(ranges)
    d_bases: typing.List[typing.List[Matrix.ComplexArray]] = [list() for _ in outer.a]
    for attempt in range(MAX_SPLIT_ATTEMPTS):
        h = _hermitian_element(basis_q, rng)
        y = _random_elements(basis_q, rng, 1)[0]
        try:
            for k, (d_k, c_k) in enumerate(zip(outer.a, outer.b)):
                v_k = outer.basis_change[:, outer.block_slice(k)]
                h_k, y_k = _compress(h, v_k, d_k, c_k), _compress(y, v_k, d_k, c_k)
                columns = list()
                for l in range(len(a)):
                    v_kl = rotations[k][l]
                    if b[k, l] == 0:
                        continue
                    if a[l] == 1:
                        columns.append(v_kl)
                    else:
                        columns.append(v_kl @ _split_factor(v_kl.conj().T @ h_k @ v_kl, v_kl.conj().T @ y_k @ v_kl, a[l], int(b[k, l])))
                d_bases[k] = columns
            break
        except _Collision:
            _logger.debug("three-layer split collision (attempt %d)", attempt + 1)
    else:
        raise Validator.ValidationError("could not split the inner algebra after {} attempts".format(MAX_SPLIT_ATTEMPTS))
    inner_rotation = Matrix.direct_sum(*[numpy.kron(numpy.hstack(d_bases[k]), numpy.eye(c_k)) for k, c_k in enumerate(outer.b)])
    u = outer.basis_change @ inner_rotation
    # replacer data is read off from the channels on one basis vector per block
    e = [int(sum(b[k, l] * outer.b[k] for k in range(len(outer.b)))) for l in range(len(a))]
    layout = ThreeLayer(a, b, outer.b, [numpy.eye(x) / x for x in outer.b], [numpy.eye(x) / x for x in e], u)
    delta = list()
    for k, c_k in enumerate(outer.b):
        column = u[:, layout.block_offset(k)]
        out = u.conj().T @ sp.apply(numpy.outer(column, column.conj())) @ u
        start = layout.block_offset(k)
        delta_k = out[start:start + c_k, start:start + c_k]
        delta.append(delta_k / numpy.trace(delta_k).real)
    omega = list()
    for l in range(len(a)):
        k_first = next(k for k in range(len(outer.b)) if b[k, l] > 0)
        column = u[:, int(layout.piece_indices(k_first, l)[0, 0, 0])]
        out = u.conj().T @ sq.apply(numpy.outer(column, column.conj())) @ u
        row = layout.e_indices(l)[0]
        omega_l = out[numpy.ix_(row, row)]
        omega.append(omega_l / numpy.trace(omega_l).real)
    result = ThreeLayer(a, b, outer.b, delta, omega, u)
    residual = max(float(numpy.max(numpy.abs(result.p_channel().choi - sp.choi))),
                   float(numpy.max(numpy.abs(result.q_channel().choi - sq.choi))))
    if residual > 1e-8:
        raise Validator.ValidationError("three-layer decomposition does not reproduce the channels (residual {:.3e})".format(residual))
    invariant = common_invariant_state(sp, sq)
    if invariant is not None and invariant.full_rank:
        common = _common_data(result)
        if common is not None:
            return ThreeLayer(a, b, outer.b, delta, omega, u, common[0], common[1])
        _logger.warning("joint invariant state found but omega blocks do not factor; keeping general form")
    return result


def _common_data(t: ThreeLayer) -> typing.Optional[typing.Tuple[Matrix.RealArray, typing.Dict[typing.Tuple[int, int], Matrix.ComplexArray]]]:
    """Extract p_{k,l} and τ_{k,l} from ω_l = ⊕_k p τ ⊗ δ_k when the blocks factor."""
    p = numpy.zeros((t.K, t.L))
    tau = dict()
    for k, l in t.pieces():
        start = t.e_offset(k, l)
        size = int(t.b[k, l]) * t.c[k]
        sub = t.omega[l][start:start + size, start:start + size]
        weight = float(numpy.trace(sub).real)
        if weight <= 0:
            return None
        tau_kl = Matrix.partial_trace(sub, [int(t.b[k, l]), t.c[k]], [0]) / weight
        if float(numpy.max(numpy.abs(sub - weight * numpy.kron(tau_kl, t.delta[k])))) > STRUCTURE_TOLERANCE:
            return None
        p[k, l] = weight
        tau[(k, l)] = tau_kl
    for l in range(t.L):
        full = Matrix.direct_sum(*[p[k, l] * numpy.kron(tau[(k, l)], t.delta[k]) for k in range(t.K) if t.b[k, l] > 0])
        if float(numpy.max(numpy.abs(full - t.omega[l]))) > STRUCTURE_TOLERANCE:
            return None
    return p, tau


def random_block_idempotent(rng: numpy.random.Generator, max_blocks: int = 3, max_d_a: int = 3, max_d_b: int = 3, rotate: bool = True) -> BlockIdempotent:
    blocks = list()
    for _ in range(int(rng.integers(1, max_blocks + 1))):
        d_a = int(rng.integers(1, max_d_a + 1))
        d_b = int(rng.integers(1, max_d_b + 1))
        blocks.append(Block(d_a, d_b, Matrix.random_density(d_b, rng)))
    total = sum(b.d_a * b.d_b for b in blocks)
    return BlockIdempotent(blocks, Matrix.random_unitary(total, rng) if rotate else None)


def random_three_layer(rng: numpy.random.Generator, max_k: int = 2, max_l: int = 2, max_dim: int = 2, rotate: bool = True) -> ThreeLayer:
    """Random common-invariant instance with every D_k and E_l nonempty."""
    k_count = int(rng.integers(1, max_k + 1))
    l_count = int(rng.integers(1, max_l + 1))
    while True:
        b = rng.integers(0, max_dim + 1, size=(k_count, l_count))
        if numpy.all(b.sum(axis=0) > 0) and numpy.all(b.sum(axis=1) > 0):
            break
    a = [int(x) for x in rng.integers(1, max_dim + 1, size=l_count)]
    c = [int(x) for x in rng.integers(1, max_dim + 1, size=k_count)]
    delta = [Matrix.random_density(x, rng) for x in c]
    p = numpy.zeros((k_count, l_count))
    for l in range(l_count):
        weights = rng.uniform(0.2, 1.0, size=k_count) * (b[:, l] > 0)
        p[:, l] = weights / weights.sum()
    tau = {(k, l): Matrix.random_density(int(b[k, l]), rng) for k in range(k_count) for l in range(l_count) if b[k, l] > 0}
    total = sum(int(sum(a[l] * b[k, l] for l in range(l_count))) * c[k] for k in range(k_count))
    return ThreeLayer.from_common(a, b, c, delta, p, tau, Matrix.random_unitary(total, rng) if rotate else None)
