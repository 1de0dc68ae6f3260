"""Exception hierarchy shared by all modules."""


class PepaError(Exception):
    """Base class for every error raised by the toolkit."""


class PepaSyntaxError(PepaError):
    """Malformed model source.

    Parameters
    ----------
    message : str
        Human readable description.
    line, col : int
        1-based position of the offending token.
    expected : tuple of str
        Tokens that would have been accepted at that position.
    """

    def __init__(self, message, line=0, col=0, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        where = f"line {line}, col {col}: " if line else ""
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}{message}{exp}")


class ModelError(PepaError):
    """Model is syntactically fine but violates a legality constraint."""


class StateSpaceCapError(PepaError):
    """Explicit state-space exploration exceeded its cap."""

    def __init__(self, cap, explored, frontier):
        self.cap = cap
        self.explored = explored
        self.frontier = frontier
        super().__init__(
            f"state space exceeds cap {cap} ({explored} states discovered, "
            f"frontier {frontier})"
        )


class IntegrationError(PepaError):
    """Fluid integration produced a non-finite or clearly negative state."""


class ReducibleChainError(PepaError):
    """Steady state requested for a chain that is not irreducible."""


class EquilibriumError(PepaError):
    """Region equilibrium prediction failed.

    Attributes
    ----------
    kind : str
        One of ``"underdetermined"``, ``"overdetermined"``, ``"negative"``.
    """

    def __init__(self, kind, message):
        self.kind = kind
        super().__init__(f"{kind}: {message}")
