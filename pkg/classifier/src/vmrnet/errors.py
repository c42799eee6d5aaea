"""Error hierarchy for the tensor classifier."""


class VmrnetError(Exception):
    """Base class for all classifier errors."""


class SpecError(VmrnetError):
    """The network specification deviates from the fixed stage schedule."""


class DataError(VmrnetError):
    """Training data is unusable (missing files, missing labels)."""


class FormatError(VmrnetError):
    """A tensor file is malformed or has the wrong dimensions."""
