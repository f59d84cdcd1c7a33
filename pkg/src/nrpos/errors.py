"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3.
"""


class ConfigError(ValueError):
    """A configuration file or parameter block is invalid."""


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy or feasibility contract."""


class DegenerateGeometryError(NumericalError):
    """Anchor geometry is rank-deficient; the direction matrix cannot be inverted."""


class InfeasibleError(NumericalError):
    """No feasible point exists for the requested optimization subproblem."""
