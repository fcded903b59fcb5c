"""Exception hierarchy shared across the package.

Every error raised by colift code derives from :class:`ColiftError` so
callers (and the CLI) can distinguish our failures from genuine bugs in
third-party code.  The CLI maps the subclasses onto process exit codes.
"""


class ColiftError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ColiftError):
    """A configuration file or option set is invalid.

    The message lists *all* problems found, one per line, so a user can
    fix a bad file in one pass instead of replaying the parser.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


class FrameError(ColiftError):
    """A spatial quantity was used in a frame it does not belong to."""


class NumericalError(ColiftError):
    """A computation produced non-finite values or lost required rank."""


class IntegrationDiverged(NumericalError):
    """Simulation state left the sane range; the rollout is unusable."""


class SchemaError(ColiftError):
    """A log or manifest file does not match the schema this code writes."""


class SolverError(ColiftError):
    """The QP solver could not produce a certified solution."""

    def __init__(self, status, message):
        self.status = status
        super().__init__(f"{status}: {message}")
