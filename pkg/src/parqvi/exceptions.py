"""Exception types raised across the package."""


class ParqviError(Exception):
    """Base class for all package errors."""


class DimensionError(ParqviError, ValueError):
    pass


class ParameterError(ParqviError, ValueError):
    """A parameter violates one of its defining clauses.

    ``clause`` names the violated condition and ``node`` the offending time
    node (or ``None`` for global clauses).
    """

    def __init__(self, clause, node=None, detail=""):
        self.clause = clause
        self.node = node
        where = "" if node is None else f" at node {node}"
        msg = f"parameter clause '{clause}' violated{where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class VariantMismatch(ParqviError, TypeError):
    pass


class InfeasibleError(ParqviError, ValueError):
    """A state or test function lies outside its constraint set."""

    def __init__(self, what, node, violation):
        self.what = what
        self.node = node
        self.violation = violation
        super().__init__(
            f"{what} infeasible at node {node} (violation {violation:.3e})")


class ConvergenceError(ParqviError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, msg, residual=None, node=None):
        self.residual = residual
        self.node = node
        super().__init__(msg)


class ConfigError(ParqviError, ValueError):
    pass
