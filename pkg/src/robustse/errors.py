"""Exception types shared across the package."""


class BadShape(ValueError):
    """Array dimensions do not agree; the message carries both shapes."""


class NonConvergence(RuntimeError):
    """An iterative method hit its iteration cap.

    ``status`` is the solver status (or ``None``) and ``result`` holds the
    last iterate when one is available, so callers can still account for it.
    """

    def __init__(self, message, status=None, result=None):
        super().__init__(message)
        self.status = status
        self.result = result


class RankDeficient(ValueError):
    """A matrix that must have full column rank does not."""


class SingularJacobian(RankDeficient):
    pass


class RankLoss(RankDeficient):
    """Measurement deletions exhausted the redundancy of the model."""


class ParseError(ValueError):
    def __init__(self, message, line=None, columns=None):
        where = ""
        if line is not None:
            where = f" (line {line}"
            if columns is not None:
                where += f", columns {columns[0]}-{columns[1]}"
            where += ")"
        super().__init__(message + where)
        self.line = line
        self.columns = columns


class MissingSection(ParseError):
    pass


class MultipleSlack(ParseError):
    pass


class ZeroImpedanceBranch(ValueError):
    pass


class DegenerateRelaxation(ValueError):
    """Row-deleted singular value too small for the perturbation radius."""


class NoCertificate(ValueError):
    """Balancedness constant C <= 1 or the contraction denominator <= 0."""


class ConfigError(ValueError):
    pass
