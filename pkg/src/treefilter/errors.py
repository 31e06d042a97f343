"""Exception hierarchy shared by every stage of the pipeline."""


class TreeFilterError(Exception):
    """Base class for all errors raised by this package."""


class SizingError(TreeFilterError, ValueError):
    """Grid too small to carry a graph (fewer than two vertices)."""


class DimensionError(TreeFilterError, ValueError):
    """Array shapes disagree."""


class ValidationError(TreeFilterError, ValueError):
    """Non-finite values or out-of-range parameters."""


class ConnectivityError(TreeFilterError):
    """Graph cannot be spanned by a single tree."""


class StructureError(TreeFilterError, ValueError):
    """Edge subset is not a spanning tree (cyclic, disconnected, wrong size)."""


class StateError(TreeFilterError):
    """Forward cache does not belong to the tree/similarities passed to backward."""


class GroupingError(TreeFilterError, ValueError):
    """Channel count not divisible by the requested number of groups."""


class ParseError(TreeFilterError):
    """Malformed image or tensor file.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
