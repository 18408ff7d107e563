"""Exception types raised by the solvers.

Every error carries enough context to print a one-line diagnostic from the CLI.
"""


class ModelError(Exception):
    """Base class for all model and solver errors."""

    module = "stickymfg"


class MissingKey(ModelError):
    module = "params"

    def __init__(self, name):
        super().__init__(f"missing required key {name!r}")
        self.name = name


class OutOfRange(ModelError):
    module = "params"

    def __init__(self, name, value, bound):
        super().__init__(f"{name}={value!r} violates {bound}")
        self.name = name
        self.value = value
        self.bound = bound


class NonFiniteState(ModelError):
    module = "jump_diffusion"


class EmptyEnsemble(ModelError):
    module = "jump_diffusion"


class MissingExtrapolation(ModelError):
    module = "calvo"


class EquilibriumBreakdown(ModelError):
    module = "calvo"


class GridMismatch(ModelError):
    pass


class NoConvergence(ModelError):
    def __init__(self, what, iterations, residual):
        super().__init__(f"{what}: no convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class DegenerateGrid(ModelError):
    module = "menu_cost"


class CFLViolation(ModelError):
    module = "menu_cost"


class MassLeak(ModelError):
    module = "menu_cost"


class DimensionMismatch(ModelError):
    module = "action"


class DegenerateVol(ModelError):
    module = "action"


class KernelUnderflow(ModelError):
    module = "action"


class SaddleDetected(ModelError):
    module = "action"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InvalidDamping(ModelError):
    module = "mean_field"


class NoBreakdownInRange(ModelError):
    module = "mean_field"


class NoConvergenceInRange(ModelError):
    module = "mean_field"


class NotConverged(ModelError):
    module = "response"


class ParseError(ModelError):
    module = "shell"

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownKey(ModelError):
    module = "shell"

    def __init__(self, name):
        super().__init__(f"unknown key {name!r}")
        self.name = name
