"""Exception hierarchy shared by every module of the package."""


class OsnrError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(OsnrError, ValueError):
    pass


class NumericalDomainError(OsnrError, ArithmeticError):
    pass


class SaturationError(NumericalDomainError):
    """A penalty exponent left the representable range of a double."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class DegenerateConstraintsError(OsnrError, ValueError):
    pass


class PreconditionError(OsnrError, ValueError):
    pass


class OracleFailure(OsnrError, RuntimeError):
    pass


class RunAborted(OsnrError, RuntimeError):
    """An online run stopped early; ``round_index`` is the 1-based round."""

    def __init__(self, round_index, cause):
        super().__init__(f"run aborted at round {round_index}: {cause}")
        self.round_index = round_index
        self.cause = cause


# -- case files -------------------------------------------------------------

class CaseParseError(OsnrError, ValueError):
    def __init__(self, message, section=None, line=None):
        where = []
        if section is not None:
            where.append(f"section {section}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.section = section
        self.line = line


class UnsupportedCostError(CaseParseError):
    pass


class CaseValidationError(OsnrError, ValueError):
    pass


class DuplicateBusError(CaseValidationError):
    pass


class DanglingBranchError(CaseValidationError):
    pass


class ReferenceBusError(CaseValidationError):
    pass


class GencostMismatchError(CaseValidationError):
    pass


class BaseMVAError(CaseValidationError):
    pass


class InvalidCaseError(CaseValidationError):
    """Physically meaningless data, e.g. a branch with zero reactance."""


class DisconnectedNetworkError(CaseValidationError, DegenerateConstraintsError):
    pass
