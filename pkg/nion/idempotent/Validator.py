"""
Validator classes. Used to check parameters before any numerical work starts.
"""

# standard libraries
import math
import typing

# third party libraries
# none

# local libraries
# none

T = typing.TypeVar('T')


class ValidationError(ValueError):
    """Raised when an input is rejected. The message names the offending quantity."""
    pass


class ValidatorLike(typing.Protocol, typing.Generic[T]):

    def validate(self, value: T) -> T: ...


class IntegerRangeValidator(ValidatorLike[int]):
    """Validate an integer to a specific closed range."""

    def __init__(self, name: str, mn: typing.Optional[int] = None, mx: typing.Optional[int] = None) -> None:
        self.__name = name
        self.__min = mn
        self.__max = mx

    def validate(self, value: int) -> int:
        if isinstance(value, bool) or int(value) != value:
            raise ValidationError("{} must be an integer, got {!r}".format(self.__name, value))
        value = int(value)
        if self.__min is not None and value < self.__min:
            raise ValidationError("{} must be >= {}, got {}".format(self.__name, self.__min, value))
        if self.__max is not None and value > self.__max:
            raise ValidationError("{} must be <= {}, got {}".format(self.__name, self.__max, value))
        return value


class RealRangeValidator(ValidatorLike[float]):
    """Validate a finite real to a range; each end may be open or closed."""

    def __init__(self, name: str, mn: typing.Optional[float] = None, mx: typing.Optional[float] = None, *,
                 include_min: bool = True, include_max: bool = True, excluded: typing.Sequence[float] = ()) -> None:
        self.__name = name
        self.__min = mn
        self.__max = mx
        self.__include_min = include_min
        self.__include_max = include_max
        self.__excluded = tuple(excluded)

    def validate(self, value: float) -> float:
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError("{} must be finite, got {}".format(self.__name, value))
        if self.__min is not None:
            if value < self.__min or (not self.__include_min and value == self.__min):
                raise ValidationError("{} must be {} {}, got {}".format(self.__name, ">=" if self.__include_min else ">", self.__min, value))
        if self.__max is not None:
            if value > self.__max or (not self.__include_max and value == self.__max):
                raise ValidationError("{} must be {} {}, got {}".format(self.__name, "<=" if self.__include_max else "<", self.__max, value))
        if value in self.__excluded:
            raise ValidationError("{} must not equal {}".format(self.__name, value))
        return value


class ChoiceValidator(ValidatorLike[str]):
    """Validate a string against a fixed set of choices."""

    def __init__(self, name: str, choices: typing.Iterable[str]) -> None:
        self.__name = name
        self.__choices = tuple(choices)

    @property
    def choices(self) -> typing.Tuple[str, ...]:
        return self.__choices

    def validate(self, value: str) -> str:
        if value not in self.__choices:
            raise ValidationError("{} must be one of {}, got {!r}".format(self.__name, ", ".join(self.__choices), value))
        return value


# shared validators for the quantities that recur across modules
renyi_alpha_validator = RealRangeValidator("alpha", 0.0, None, include_min=False, excluded=(1.0,))
alpha_above_one_validator = RealRangeValidator("alpha", 1.0, None, include_min=False)
epsilon_validator = RealRangeValidator("epsilon", 0.0, 1.0, include_min=False, include_max=False)
