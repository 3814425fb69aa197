"""Exception hierarchy shared by all modules.

Every error carries a machine-readable ``code`` (the class name) so the CLI
can print it and map it to an exit status.
"""


class DesignError(Exception):
    """Base class for validation errors (CLI exit status 2)."""

    exit_code = 2

    @property
    def code(self) -> str:
        return type(self).__name__


class DependentGenerators(DesignError):
    pass


class IdentityWord(DesignError):
    pass


class InvalidGenerator(DesignError):
    pass


class InfeasibleBlocking(DesignError):
    pass


class TubeCountViolation(DesignError):
    pass


class InconsistentLattice(DesignError):
    pass


class MissingInSelectedRows(DesignError):
    def __init__(self, chips):
        self.chips = list(chips)
        shown = ", ".join(
            f"(week={w}, plate={p}, column={c}, row={r})" for w, p, c, r in self.chips[:10]
        )
        more = "" if len(self.chips) <= 10 else f" and {len(self.chips) - 10} more"
        super().__init__(f"missing responses in selected rows: {shown}{more}")


class LengthMismatch(DesignError):
    pass


class TooFewEffects(DesignError):
    pass


class UnknownTerm(DesignError):
    pass


class DegenerateData(DesignError):
    pass


class NonConvergence(Exception):
    """Iteration cap reached in an optimizer (CLI exit status 3)."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    @property
    def code(self) -> str:
        return type(self).__name__
