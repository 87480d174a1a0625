"""Exception types shared across the package.

Each carries a ``code`` used by the command-line front end as the exit
status and in structured error output.
"""


class Conformal4Error(Exception):
    code = 1
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class PreconditionError(Conformal4Error, ValueError):
    code = 2
    kind = "precondition"


class DomainError(PreconditionError):
    kind = "domain"


class MetricDegeneracyError(Conformal4Error, ArithmeticError):
    code = 2
    kind = "metric-degeneracy"


class ConsistencyError(Conformal4Error, RuntimeError):
    kind = "internal-consistency"


class ConvergenceError(Conformal4Error, RuntimeError):
    code = 3
    kind = "non-convergence"


class ParseError(Conformal4Error, ValueError):
    code = 4
    kind = "parse"

    def __init__(self, message, position=None, source=None):
        super().__init__(message)
        self.position = position
        self.source = source

    def to_dict(self):
        out = super().to_dict()
        if self.position is not None:
            out["position"] = self.position
        if self.source is not None:
            out["source"] = self.source
        return out
