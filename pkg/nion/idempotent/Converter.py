"""
    Converter classes. Translate matrices, states, channels and decompositions to and from JSON-ready dicts.
"""

from __future__ import annotations

# standard libraries
import logging
import math
import typing

# third party libraries
import numpy

# local libraries
from nion.idempotent import Channels
from nion.idempotent import Matrix
from nion.idempotent import States
from nion.idempotent import Validator

FT = typing.TypeVar('FT')
TT = typing.TypeVar('TT')

_logger = logging.getLogger(__name__)

JsonDict = typing.Dict[str, typing.Any]


class ConverterLike(typing.Protocol[FT, TT]):
    def convert(self, value: typing.Optional[FT]) -> typing.Optional[TT]: ...

    def convert_back(self, formatted_value: typing.Optional[TT]) -> typing.Optional[FT]: ...


def _field(d: typing.Mapping[str, typing.Any], key: str, where: str) -> typing.Any:
    if not isinstance(d, typing.Mapping):
        raise Validator.ValidationError("{}: expected an object, got {}".format(where, type(d).__name__))
    if key not in d:
        raise Validator.ValidationError("{}: missing field '{}'".format(where, key))
    return d[key]


class ExtendedRealToJsonConverter(ConverterLike[float, typing.Any]):
    """ Convert between extended reals and JSON values; infinities become the strings "inf" and "-inf". """

    def convert(self, value: typing.Optional[float]) -> typing.Optional[typing.Any]:
        if value is None:
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return float(value)

    def convert_back(self, formatted_value: typing.Optional[typing.Any]) -> typing.Optional[float]:
        if formatted_value is None:
            return None
        if formatted_value in ("inf", "+inf"):
            return math.inf
        if formatted_value == "-inf":
            return -math.inf
        if isinstance(formatted_value, str):
            raise Validator.ValidationError("extended real must be a number or 'inf', got {!r}".format(formatted_value))
        return float(formatted_value)


class MatrixToDictConverter(ConverterLike[Matrix.ComplexArray, JsonDict]):
    """ Convert between complex matrices and {dims: [r, c], re: [...], im: [...]} in row-major order. """

    def __init__(self, where: str = "matrix") -> None:
        self.__where = where

    def convert(self, value: typing.Optional[Matrix.ComplexArray]) -> typing.Optional[JsonDict]:
        if value is None:
            return None
        a = numpy.asarray(value, dtype=numpy.complex128)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        return {"dims": [int(a.shape[0]), int(a.shape[1])], "re": a.real.reshape(-1).tolist(), "im": a.imag.reshape(-1).tolist()}

    def convert_back(self, formatted_value: typing.Optional[JsonDict]) -> typing.Optional[Matrix.ComplexArray]:
        if formatted_value is None:
            return None
        where = self.__where
        dims = _field(formatted_value, "dims", where)
        if not isinstance(dims, list) or len(dims) != 2 or any(not isinstance(x, int) or x < 1 for x in dims):
            raise Validator.ValidationError("{}: 'dims' must be two positive integers, got {!r}".format(where, dims))
        re = numpy.asarray(_field(formatted_value, "re", where), dtype=float)
        im = numpy.asarray(formatted_value.get("im", [0.0] * re.size), dtype=float)
        count = dims[0] * dims[1]
        if re.size != count or im.size != count:
            raise Validator.ValidationError("{}: expected {} entries for dims {}, got re={} im={}".format(where, count, dims, re.size, im.size))
        return Matrix.as_matrix((re + 1j * im).reshape(dims), square=False)


class DensityMatrixToDictConverter(ConverterLike[States.DensityMatrix, JsonDict]):
    """ Convert between density matrices and the matrix dict format. """

    def __init__(self, where: str = "state") -> None:
        self.__matrix_converter = MatrixToDictConverter(where)

    def convert(self, value: typing.Optional[States.DensityMatrix]) -> typing.Optional[JsonDict]:
        return self.__matrix_converter.convert(value.matrix) if value is not None else None

    def convert_back(self, formatted_value: typing.Optional[JsonDict]) -> typing.Optional[States.DensityMatrix]:
        m = self.__matrix_converter.convert_back(formatted_value)
        return States.DensityMatrix(m) if m is not None else None


class ChannelToDictConverter(ConverterLike[Channels.ChannelLike, JsonDict]):
    """ Convert between channels and {kind: block|choi|kraus, dim, ...} descriptions.

    Choi and Kraus descriptions are normalized to block form when the channel is idempotent
    with full-rank unit image; otherwise they stay a Superoperator.
    """

    def __init__(self, where: str = "channel", rng: typing.Optional[numpy.random.Generator] = None) -> None:
        self.__where = where
        self.__rng = rng

    def convert(self, value: typing.Optional[Channels.ChannelLike]) -> typing.Optional[JsonDict]:
        if value is None:
            return None
        matrix_converter = MatrixToDictConverter()
        if isinstance(value, Channels.BlockIdempotent):
            blocks = [{"dA": b.d_a, "dB": b.d_b, "omega": matrix_converter.convert(b.omega)} for b in value.blocks]
            return {"kind": "block", "dim": value.total_dim, "blocks": blocks, "basis_change": matrix_converter.convert(value.basis_change)}
        return {"kind": "choi", "dim": value.dim, "choi": matrix_converter.convert(value.choi)}

    def convert_back(self, formatted_value: typing.Optional[JsonDict]) -> typing.Optional[Channels.ChannelLike]:
        if formatted_value is None:
            return None
        where = self.__where
        kind = Validator.ChoiceValidator("{}: kind".format(where), ("block", "choi", "kraus")).validate(_field(formatted_value, "kind", where))
        dim = Validator.IntegerRangeValidator("{}: dim".format(where), 1).validate(_field(formatted_value, "dim", where))
        if kind == "block":
            blocks = list()
            for i, block in enumerate(_field(formatted_value, "blocks", where)):
                block_where = "{}: blocks[{}]".format(where, i)
                omega = MatrixToDictConverter(block_where + ".omega").convert_back(_field(block, "omega", block_where))
                blocks.append(Channels.Block(_field(block, "dA", block_where), _field(block, "dB", block_where), typing.cast(Matrix.ComplexArray, omega)))
            basis_change = MatrixToDictConverter(where + ".basis_change").convert_back(formatted_value.get("basis_change"))
            channel = Channels.BlockIdempotent(blocks, basis_change)
            if channel.total_dim != dim:
                raise Validator.ValidationError("{}: blocks give dimension {}, declared dim is {}".format(where, channel.total_dim, dim))
            return channel
        if kind == "choi":
            choi = typing.cast(Matrix.ComplexArray, MatrixToDictConverter(where + ".choi").convert_back(_field(formatted_value, "choi", where)))
            superoperator = Channels.Superoperator.from_choi(choi)
        else:
            kraus_where = where + ".kraus"
            kraus = [typing.cast(Matrix.ComplexArray, MatrixToDictConverter("{}[{}]".format(kraus_where, i)).convert_back(k))
                     for i, k in enumerate(_field(formatted_value, "kraus", where))]
            superoperator = Channels.Superoperator.from_kraus(kraus)
        if superoperator.dim != dim:
            raise Validator.ValidationError("{}: channel acts on dimension {}, declared dim is {}".format(where, superoperator.dim, dim))
        return normalize_channel(superoperator, self.__rng)


def normalize_channel(superoperator: Channels.Superoperator, rng: typing.Optional[numpy.random.Generator] = None) -> Channels.ChannelLike:
    """Block form when the channel is idempotent with full-rank unit image, otherwise the Superoperator itself."""
    idempotent, residual = Channels.is_idempotent(superoperator)
    if not idempotent:
        _logger.debug("channel is not idempotent (residual %.3e); keeping transfer matrix form", residual)
        return superoperator
    try:
        return Channels.block_form(superoperator, rng)
    except Validator.ValidationError as e:
        _logger.warning("idempotent channel kept as a transfer matrix: %s", e)
        return superoperator


class ThreeLayerToDictConverter(ConverterLike[Channels.ThreeLayer, JsonDict]):
    """ Convert between ThreeLayer decompositions and dicts with explicit k,l-indexed dimension arrays. """

    def convert(self, value: typing.Optional[Channels.ThreeLayer]) -> typing.Optional[JsonDict]:
        if value is None:
            return None
        matrix_converter = MatrixToDictConverter()
        d: JsonDict = {
            "K": value.K,
            "L": value.L,
            "a": list(value.a),
            "b": value.b.tolist(),
            "c": list(value.c),
            "delta": [matrix_converter.convert(x) for x in value.delta],
            "omega": [matrix_converter.convert(x) for x in value.omega],
            "basis_change": matrix_converter.convert(value.basis_change),
            "common_invariant": value.common_invariant,
        }
        if value.p is not None:
            d["p"] = value.p.tolist()
            d["tau"] = [{"k": k, "l": l, "matrix": matrix_converter.convert(value.tau(k, l))} for k, l in value.pieces()]
        return d

    def convert_back(self, formatted_value: typing.Optional[JsonDict]) -> typing.Optional[Channels.ThreeLayer]:
        if formatted_value is None:
            return None
        where = "three_layer"
        matrix_converter = MatrixToDictConverter(where)
        delta = [matrix_converter.convert_back(x) for x in _field(formatted_value, "delta", where)]
        omega = [matrix_converter.convert_back(x) for x in _field(formatted_value, "omega", where)]
        basis_change = matrix_converter.convert_back(formatted_value.get("basis_change"))
        p = formatted_value.get("p")
        tau = None
        if p is not None:
            tau = {(int(_field(t, "k", where)), int(_field(t, "l", where))): matrix_converter.convert_back(_field(t, "matrix", where))
                   for t in _field(formatted_value, "tau", where)}
        return Channels.ThreeLayer(_field(formatted_value, "a", where), _field(formatted_value, "b", where), _field(formatted_value, "c", where),
                                   typing.cast(typing.List[Matrix.ComplexArray], delta), typing.cast(typing.List[Matrix.ComplexArray], omega),
                                   basis_change, p, typing.cast(typing.Optional[typing.Dict[typing.Tuple[int, int], Matrix.ComplexArray]], tau))
