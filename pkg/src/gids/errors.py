"""Exception types raised across the toolkit.

Everything derives from :class:`GidsError` so the command line can map data
problems to a single exit code.
"""


class GidsError(Exception):
    """Base class for all data/usage errors raised by gids."""


class MalformedLine(GidsError, ValueError):
    def __init__(self, reason, line_no=None, line=None):
        self.reason = reason
        self.line_no = line_no
        self.line = line
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{reason}")


class IdOutOfRange(MalformedLine):
    def __init__(self, can_id, line_no=None, line=None):
        self.can_id = can_id
        super().__init__(f"CAN id 0x{can_id:x} exceeds 11 bits", line_no, line)


class UnsortedTimestamps(GidsError, ValueError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: timestamp earlier than previous frame")


class SinkFailure(GidsError, OSError):
    pass


class EmptyProfile(GidsError, ValueError):
    pass


class WindowOutOfRange(GidsError, ValueError):
    pass


class ShapeMismatch(GidsError, ValueError):
    pass


class BadMagic(GidsError, ValueError):
    pass


class ShapeHeaderMismatch(GidsError, ValueError):
    pass


class TruncatedStream(GidsError, ValueError):
    pass


class EmptyDataset(GidsError, ValueError):
    pass


class DivergenceDetected(GidsError, RuntimeError):
    def __init__(self, epoch, history=None):
        self.epoch = epoch
        self.history = history
        super().__init__(f"D(real) mean stayed below 0.1 for 5 epochs (epoch {epoch})")


class LengthMismatch(GidsError, ValueError):
    pass


class SingleClassInput(GidsError, ValueError):
    pass
