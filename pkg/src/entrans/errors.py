"""Exception hierarchy shared by all modules."""


class EntransError(Exception):
    """Base class for library errors."""


class DimensionError(EntransError, ValueError):
    pass


class DomainError(EntransError, ValueError):
    pass


class InvalidStateError(EntransError, ValueError):
    pass


class InvalidDeviceError(EntransError, ValueError):
    """Device matrices violate the conservation constraint."""


class DegenerateDeviceError(InvalidDeviceError):
    """C or S is singular where an inverse is required."""


class TruncationError(EntransError, RuntimeError):
    """Probability weight lost to the Fock cutoff exceeds the tolerance."""


class SingularThresholdError(DomainError):
    pass


class DivergenceError(DomainError):
    pass


class UnsupportedDimensionError(EntransError, ValueError):
    pass


class MonotonicityViolation(EntransError, AssertionError):
    pass


class ConfigError(EntransError, ValueError):
    pass


class InvariantViolation(EntransError, AssertionError):
    pass
