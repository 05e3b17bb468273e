"""Exception hierarchy shared by every ctbus module."""


class CTBusError(Exception):
    """Base class for all errors raised by ctbus."""


class ParseError(CTBusError, ValueError):
    """Malformed input file. Carries the offending path and 1-based line number."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        super().__init__(where + message)


class IntegrityError(CTBusError, ValueError):
    """Inputs parse but reference each other inconsistently."""


class ConfigurationError(CTBusError, ValueError):
    """Invalid parameter value or missing prerequisite."""


class EmptyGraphError(CTBusError, ValueError):
    """Quantity is undefined on a graph without vertices."""


class NoPathError(CTBusError):
    """No path exists between the requested vertices."""


class SizeLimitError(CTBusError):
    """Dense computation refused because the input is too large."""


class ConvergenceError(CTBusError):
    """Iterative solver hit its iteration cap."""


class PlanningError(CTBusError):
    """The route planner could not produce a result."""
