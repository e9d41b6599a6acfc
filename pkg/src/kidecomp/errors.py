"""Exception hierarchy.

Every failure raised by the package derives from :class:`KIError`. The three
intermediate classes map one-to-one onto the CLI exit codes.
"""


class KIError(Exception):
    """Base class for all package errors."""


class InputError(KIError, ValueError):
    """Malformed or invalid input data (exit code 1)."""


class NumericalError(KIError, ArithmeticError):
    """A numerical decision could not be made reliably (exit code 2)."""


class VerificationError(KIError):
    """A computed object failed one of its contracts (exit code 3)."""


class ShapeMismatch(InputError):
    pass


class ValidationError(InputError):
    pass


class NotHermitian(InputError):
    pass


class NotPSD(InputError):
    pass


class NotFaithful(InputError):
    pass


class NotClassical(InputError):
    """Raised when a broadcasting witness is requested for a quantum experiment."""


class DomainError(NumericalError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class AmbiguousRank(NumericalError):
    """A singular value or eigenvalue sits too close to the rank cutoff."""


class NonConvergence(NumericalError):
    pass


class RetriesExhausted(NumericalError):
    pass


class NonIntegralMultiplicity(NumericalError):
    pass


class NotInvariant(VerificationError):
    pass


class VerificationFailed(VerificationError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MatchingFailed(VerificationError):
    pass
