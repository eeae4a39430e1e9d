"""Exception taxonomy shared by the pipeline.

Each class maps onto one CLI exit status (see ``EXIT_CODES``).
"""


class DPError(Exception):
    """Base class for every error raised by the package."""

    kind = "Error"

    def to_json(self):
        return {"error": self.kind, "message": str(self)}


class ProgramSyntaxError(DPError):
    kind = "SyntaxError"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} at line {line}, column {column}"
        super().__init__(message)

    def to_json(self):
        d = super().to_json()
        d["line"] = self.line
        d["column"] = self.column
        return d


class ProgramRuntimeError(DPError):
    """Error while running the interpreter (unbound variable, bad arity, ...)."""

    kind = "RuntimeError"

    def __init__(self, message, span=None):
        self.span = span
        super().__init__(message)

    def to_json(self):
        d = super().to_json()
        if self.span is not None:
            d["span"] = list(self.span)
        return d


class StepBudgetExceeded(ProgramRuntimeError):
    """Too many deterministic reductions inside a single interpreter step."""

    kind = "StepBudgetExceeded"


class BudgetExceeded(DPError):
    """Compilation or equation extraction outgrew its budget.

    Usually means the program has infinite support.
    """

    kind = "BudgetExceeded"


class MissingReference(DPError):
    kind = "MissingReference"


class NoConvergence(DPError):
    kind = "NoConvergence"

    def __init__(self, message, residual=float("nan"), iterations=0, report=None):
        self.residual = residual
        self.iterations = iterations
        self.report = report
        super().__init__(message)

    def to_json(self):
        d = super().to_json()
        d["residual"] = self.residual
        d["iterations"] = self.iterations
        return d


class ZeroMass(DPError):
    """Normalization requested but the condition has probability zero."""

    kind = "ZeroMass"


EXIT_CODES = {
    ProgramSyntaxError: 1,
    ProgramRuntimeError: 1,
    BudgetExceeded: 2,
    NoConvergence: 3,
    ZeroMass: 4,
}


def exit_code(exc):
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1
