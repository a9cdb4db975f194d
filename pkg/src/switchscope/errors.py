"""Exception types shared across the toolkit."""


class SwitchscopeError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SwitchscopeError, ValueError):
    """An argument violates an operation's preconditions."""


class EmptySpectrogramError(ParameterError):
    """Input too short to produce a single STFT frame."""


class StructureError(SwitchscopeError, ValueError):
    """A container has an inconsistent shape or frame geometry."""


class FloorEstimationError(SwitchscopeError):
    """The noise floor could not be estimated (no usable bins or frames)."""


class SynchronizationError(SwitchscopeError):
    """Channels that must share frame geometry do not."""


class PlanViolation(SwitchscopeError, ValueError):
    """A switch plan or sub-matrix size breaks the switch-synchronous constraints."""


class PreTriggerError(SwitchscopeError, ValueError):
    """A sample index precedes the switch trigger; no antenna is connected."""


class AlignmentError(SwitchscopeError):
    """Reference samples are missing for a switched dwell."""


class GeometryError(SwitchscopeError, ValueError):
    """Array geometry is degenerate."""


class SceneError(SwitchscopeError, ValueError):
    """A simulation scene is malformed or physically inconsistent."""
