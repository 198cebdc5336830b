"""Exception hierarchy shared by all modules."""


class NLSError(Exception):
    """Base class for every error raised by nlslab."""


class SubcriticalOrCritical(NLSError, ValueError):
    """Scaling index s <= 0 (mass-critical or subcritical power)."""


class EnergyCriticalOrSuper(NLSError, ValueError):
    """Scaling index s >= 1."""


class NonFiniteField(NLSError, ValueError):
    pass


class ParamMismatch(NLSError, ValueError):
    pass


class ZeroMass(NLSError, ValueError):
    pass


class NegativeEnergy(NLSError, ValueError):
    pass


class InconsistentThreshold(NLSError, ArithmeticError):
    """The two-sided mass-energy/gradient bound is violated beyond tolerance."""


class NoConvergence(NLSError, RuntimeError):
    pass


class DivergedToZero(NLSError, RuntimeError):
    pass


class CutoffExceedsDomain(NLSError, ValueError):
    pass


class KappaOutOfRange(NLSError, ValueError):
    pass


class DegenerateDenominator(NLSError, ZeroDivisionError):
    pass


class HypothesisViolated(NLSError, ValueError):
    pass


class SearchRangeEmpty(NLSError, ValueError):
    pass


class EmptySeries(NLSError, ValueError):
    pass


class DegenerateExponent(NLSError, ZeroDivisionError):
    pass


class ParseError(NLSError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(NLSError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


class RunError(NLSError, RuntimeError):
    """A run failed; ``manifest`` records the partial outputs."""

    def __init__(self, message, manifest=None):
        self.manifest = manifest
        super().__init__(message)
