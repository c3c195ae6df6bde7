"""
Exception hierarchy for topo-match

Library code raises these; the command-line frontend maps them to exit codes
(InvariantViolationError -> 3, every other TopoMatchError -> 2).
"""


class TopoMatchError(Exception):
    """Base class for every error raised by topo-match"""


class FieldFormatError(TopoMatchError):
    """Malformed header, unparsable payload or header/payload size mismatch"""


class FieldValueError(TopoMatchError):
    """Field values outside [0, 1] or not finite"""


class FieldIOError(TopoMatchError):
    """Reading or writing a field file failed"""


class DimensionMismatchError(TopoMatchError):
    """Two inputs that must share dimensions do not"""


class InvalidParameterError(TopoMatchError):
    """A parameter is outside its documented range"""


class EmptyDiagramError(TopoMatchError):
    """An operation needs at least one persistence feature"""


class InconsistentTracksError(TopoMatchError):
    """Tracks reference facets or features that do not exist"""


class InvariantViolationError(TopoMatchError):
    """Internal consistency check failed (corrupted feature, broken partition)"""
