"""Exception hierarchy shared across the package."""


class PromptSGError(Exception):
    """Base class for all package-specific errors."""


class FormatError(PromptSGError, ValueError):
    """Serialized data violates the interchange or checkpoint format.

    Carries a human-readable field path (e.g. ``ground_truth[2].subject_tube``)
    so callers can surface exactly which record is broken.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ContractError(PromptSGError, ValueError):
    """A caller violated an operation precondition."""


class GenerationError(PromptSGError, RuntimeError):
    """The synthetic generator could not realize a feasible scene."""


class NumericalError(PromptSGError, RuntimeError):
    """A non-finite value surfaced where finite math was required."""


class CapacityError(PromptSGError, RuntimeError):
    """A bounded resource pool (e.g. the session registry) is full."""
