"""Exception taxonomy shared across the toolkit.

Everything raised on purpose derives from GstdeblurError so callers can
catch the whole family at the CLI boundary and map it to an exit code.
"""


class GstdeblurError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ValidationError(GstdeblurError):
    """Input violates a documented precondition (bad value, bad range)."""


class DimensionError(ValidationError):
    """Shape-level violation: wrong rank, wrong parity, incompatible sizes."""


class FormatError(GstdeblurError):
    """A file on disk does not match its declared format."""


class DegenerateKernelError(GstdeblurError):
    """A kernel estimate collapsed: nothing positive left to normalize."""


class FdProbeError(GstdeblurError):
    """A finite-difference probe produced a non-finite loss."""


class CodecUnavailableError(GstdeblurError):
    """An optional external codec was requested but is not configured."""
