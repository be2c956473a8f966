"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the command line can map failures to
its documented exit statuses: 1 usage, 2 input/parse, 3 runtime/protocol.
"""


class SomkitError(Exception):
    exit_code = 3


class UsageError(SomkitError):
    exit_code = 1


class InvalidConfig(UsageError):
    """Training configuration violates an invariant after default resolution."""


# ---------------------------------------------------------------- input files

class InputError(SomkitError):
    exit_code = 2


class RowWidthMismatch(InputError):
    pass


class NonNumericToken(InputError):
    pass


class EmptyInput(InputError):
    pass


class HeaderBodyMismatch(InputError):
    pass


class MalformedHeader(InputError):
    pass


class NegativeIndex(InputError):
    pass


class MalformedToken(InputError):
    pass


class DuplicateIndexInRow(InputError):
    pass


class HintTooSmall(InputError):
    pass


class IoFailure(InputError):
    pass


class CodebookShapeMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    """Data dimensionality does not match the codebook."""


class KernelDataMismatch(InputError):
    """Sparse kernel with dense data or the other way around."""


# ---------------------------------------------------- distributed / protocol

class ProtocolError(SomkitError):
    exit_code = 3


class ChannelClosed(ProtocolError):
    """Peer went away; call sites translate to WorkerLost/CoordinatorLost."""


class WorkerLost(ProtocolError):
    pass


class CoordinatorLost(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class ShapeMismatch(ProtocolError):
    pass


class Timeout(ProtocolError):
    pass


class ConnectionRefused(ProtocolError):
    pass


class FrameCorruption(ProtocolError):
    pass


# ------------------------------------------------------------------ harness

class BudgetExceeded(SomkitError):
    """Bench configuration larger than the configured memory budget."""
