"""Exception hierarchy shared across the engine."""


class IcsError(Exception):
    """Base class for all engine errors."""


class DimMismatch(IcsError):
    """Two images/masks that must agree in size do not."""


class EmptyInitial(IcsError):
    """A support set was constructed with no initial entries."""


class OverCapacity(IcsError):
    """More initial entries than the support set capacity allows."""


class BackendFailure(IcsError):
    """A segmenter backend failed; carries the slice index being processed."""

    def __init__(self, slice_index, cause):
        super().__init__(f"backend failed on slice {slice_index}: {cause}")
        self.slice_index = slice_index
        self.cause = cause
