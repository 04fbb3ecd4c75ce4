"""Exception hierarchy shared across the package."""


class GraphFuseError(Exception):
    """Base class for all package errors."""


class ParameterError(GraphFuseError, ValueError):
    """A distribution or model parameter is outside its valid range."""


class StructuralError(GraphFuseError, ValueError):
    """Array shapes or graph/data dimensions are inconsistent."""


class DegenerateLayoutError(GraphFuseError, ValueError):
    """Spatial layout has (near) zero spread along some direction."""

    def __init__(self, message, direction=None, condition=None):
        super().__init__(message)
        self.direction = direction
        self.condition = condition


class UnsupportedStructureError(GraphFuseError, ValueError):
    """Operator kind is not defined for the given graph."""


class SingularDesignError(GraphFuseError, ValueError):
    """One or more per-node Gram matrices are singular."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class SolverError(GraphFuseError, ArithmeticError):
    """Linear solve failed (indefinite matrix or no convergence)."""


class NumericalError(GraphFuseError, ArithmeticError):
    """Sampler produced a non-finite value."""


class UsageError(GraphFuseError, ValueError):
    """Function called with an invalid combination of arguments."""


class ConfigError(GraphFuseError, ValueError):
    """Invalid run configuration (unknown key, bad value, bad path)."""


class ParseError(GraphFuseError, ValueError):
    """Malformed input file; message carries file name and line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
