"""Exception types shared across the toolkit.

The CLI maps these onto exit codes, so keep the hierarchy flat and explicit.
"""


class SafecloneError(Exception):
    """Base class for all toolkit errors."""


class ContractError(SafecloneError, ValueError):
    """A precondition was violated (dimension mismatch, invalid query, ...)."""


class RolloutDivergedError(SafecloneError):
    """A rollout produced a non-finite state."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"rollout diverged at step {step}")


class SolverFailedError(SafecloneError):
    """Every sampled rollout of an MPPI solve was unusable."""


class ConvergenceError(SafecloneError):
    """Value iteration did not converge within the sweep budget."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"value iteration residual {residual:.3e} after {iterations} sweeps"
        )


class TrainingDivergedError(SafecloneError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


class GenerationInfeasibleError(SafecloneError):
    """Random world generation kept violating placement constraints."""


class FormatError(SafecloneError, ValueError):
    """A serialized payload could not be parsed."""


class ConfigError(SafecloneError, ValueError):
    """A run configuration failed validation.

    ``path`` points at the offending entry, e.g. ``"mppi.elite_k"``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class MissingArtifactError(SafecloneError):
    """A command referenced an input artifact that does not exist."""
