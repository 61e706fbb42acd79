"""Exception hierarchy shared by every module."""


class OTAError(Exception):
    """Base class for all library errors."""


class PowerViolation(OTAError, ValueError):
    """A codeword exceeds the average power budget."""


class DimensionMismatch(OTAError, ValueError):
    pass


class IndexOutOfRange(OTAError, IndexError):
    pass


class RangeViolation(OTAError, ValueError):
    """An integer input lies outside its admissible range."""


class DigitOutOfRange(RangeViolation):
    pass


class GuardOverflow(OTAError, OverflowError):
    """A lattice or constellation integer would exceed the exact float range (2**52)."""


class InvalidConfig(OTAError, ValueError):
    pass


class BudgetExceeded(OTAError, RuntimeError):
    """T * ell would use more channel uses than the budget N allows."""
